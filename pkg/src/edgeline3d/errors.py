class ConfigError(ValueError):
    """Invalid or unparseable configuration."""


class InputError(ValueError):
    """Malformed or missing input data (images, datasets, CSV rows)."""


class DegenerateInputError(ValueError):
    """Geometry too degenerate to define the requested quantity."""


class DegenerateFitError(DegenerateInputError):
    """A fitted line cannot be turned into a 3D segment."""


class AlignmentError(RuntimeError):
    """Similarity alignment could not be estimated."""
