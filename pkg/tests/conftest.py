import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_field(rng, dims, amp, sigma=2.0):
    """Random 3-channel field, Gaussian-smoothed and scaled to ``max |u| = amp``."""
    f = np.stack([gaussian_filter(rng.standard_normal(dims), sigma, mode="wrap") for _ in range(3)])
    return f * (amp / np.abs(f).max())


def off_lattice_flow(rng, dims, max_int=2):
    """Flow whose sample points sit at least 0.1 voxel away from every grid plane.

    Trilinear interpolation is piecewise linear with kinks on the grid planes
    and at the clamp border, so finite differences are only meaningful away
    from them.
    """
    whole = rng.integers(-max_int, max_int + 1, size=(3,) + tuple(dims))
    frac = rng.uniform(0.1, 0.9, size=(3,) + tuple(dims))
    return whole + frac


def smooth_image(rng, dims, sigma=1.0):
    img = gaussian_filter(rng.standard_normal(dims), sigma, mode="wrap")
    return (img - img.min()) / (img.max() - img.min())
