import numpy as np
import pytest

from edgeline3d.types import TUM_DEFAULT_INTRINSICS, CameraIntrinsics, Config, EdgeSegment, resolve_config


@pytest.fixture
def intr():
    return TUM_DEFAULT_INTRINSICS


@pytest.fixture
def cfg(intr):
    return resolve_config(Config(), intr)


def straight_chain(x0, y0, n, depth, dx=1, dy=0, kf=0):
    """Chain of n pixels stepping by (dx, dy); depth is a scalar, array or callable of the index."""
    xs = x0 + dx * np.arange(n)
    ys = y0 + dy * np.arange(n)
    if callable(depth):
        z = np.array([depth(i) for i in range(n)], dtype=float)
    else:
        z = np.broadcast_to(np.asarray(depth, dtype=float), (n,)).copy()
    return EdgeSegment(xs, ys, z, kf)


def small_intrinsics(fx=500.0):
    return CameraIntrinsics(fx, fx, 320.0, 240.0, 640, 480)
