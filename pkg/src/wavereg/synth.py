"""Synthetic image pairs with analytically known deformations.

``moving = warp(fixed, gt_flow)``. Registration of ``moving`` onto ``fixed``
therefore recovers the *inverse* displacement of ``gt_flow``; use
:func:`invert_displacement` to get the reference flow for endpoint errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .volume import identity_grid, jacobian_determinant, warp, warp_field, warp_labels

KINDS = ("translation", "gaussian_bumps", "radial_contraction")
MIN_JACOBIAN = 0.2
# texture density of the phantom: one blob per this many voxels
VOXELS_PER_BLOB = 40


@dataclass(frozen=True)
class SynthSpec:
    kind: str = "gaussian_bumps"
    dims: tuple = (48, 48, 48)
    max_disp: float = 4.0
    seed: int = 0
    labels: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown synthetic kind {self.kind!r}; choose from {KINDS}")
        dims = tuple(int(n) for n in self.dims)
        if len(dims) != 3 or min(dims) < 8:
            raise ConfigurationError(f"dims must be three integers >= 8, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        if not 0 <= self.max_disp < min(dims) / 4:
            raise ConfigurationError(
                f"max displacement {self.max_disp} must be below min(dims)/4 = {min(dims) / 4}")


@dataclass
class SynthPair:
    moving: np.ndarray
    fixed: np.ndarray
    gt_flow: np.ndarray
    labels_moving: np.ndarray | None = None
    labels_fixed: np.ndarray | None = None


def _taper(n, margin):
    # 0 within `margin` of either end, raised-cosine ramp, 1 in the middle
    t = np.arange(n, dtype=np.float64)
    ramp = (n - 2 * margin) / 4.0
    d = np.minimum(t - margin, n - 1 - margin - t)
    s = np.clip(d / ramp, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * s)


def border_window(dims, margin=2):
    """Smooth mask that vanishes near every face of the grid."""
    d, h, w = dims
    return _taper(d, margin)[:, None, None] * _taper(h, margin)[None, :, None] * _taper(w, margin)[None, None, :]


def _radius(dims, center):
    grid = identity_grid(dims)
    return grid - np.asarray(center, dtype=np.float64)[:, None, None, None]


def _center(dims):
    # (x0, x1, x2) order, matching flow channels
    return np.array([(dims[2] - 1) / 2, (dims[1] - 1) / 2, (dims[0] - 1) / 2])


def sphere_labels(dims):
    """Concentric labels: 1 = inner ball, 2 = surrounding shell."""
    r = np.sqrt((_radius(dims, _center(dims)) ** 2).sum(0))
    n = min(dims)
    labels = np.zeros(dims, dtype=np.int32)
    labels[r <= 0.24 * n] = 2
    labels[r <= 0.13 * n] = 1
    return labels


def _add_blob(img, center, sigma, amp):
    # accumulate a Gaussian inside its +-3 sigma box; center is (x0, x1, x2)
    lo = [max(int(np.floor(c - 3 * sigma)), 0) for c in center[::-1]]
    hi = [min(int(np.ceil(c + 3 * sigma)) + 1, n) for c, n in zip(center[::-1], img.shape)]
    if any(h <= l for l, h in zip(lo, hi)):
        return
    z, y, x = np.ogrid[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2
    img[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] += amp * np.exp(-r2 / (2 * sigma ** 2))


def phantom(dims, rng):
    """Smooth blob texture in [0, 1] overlaid with the concentric sphere structure."""
    n = min(dims)
    img = np.zeros(dims)
    extent = np.array(dims[::-1], dtype=np.float64) - 1
    for _ in range(max(int(np.prod(dims) / VOXELS_PER_BLOB), 16)):
        center = rng.uniform(0, 1, 3) * extent
        sigma = max(rng.uniform(0.025, 0.06) * n, 1.0)
        _add_blob(img, center, sigma, rng.uniform(-1.0, 1.0))
    img = (img - img.min()) / (np.ptp(img) + 1e-12)
    r = np.sqrt((_radius(dims, _center(dims)) ** 2).sum(0))
    inner = 1.0 / (1.0 + np.exp((r - 0.13 * n) / 0.8))
    outer = 1.0 / (1.0 + np.exp((r - 0.24 * n) / 0.8))
    img = 0.5 * img + 0.3 * outer + 0.2 * inner
    return (img - img.min()) / (np.ptp(img) + 1e-12)


def _raw_flow(spec: SynthSpec, rng):
    dims = spec.dims
    n = min(dims)
    window = border_window(dims)
    if spec.kind == "translation":
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        return direction[:, None, None, None] * window[None]
    if spec.kind == "gaussian_bumps":
        flow = np.zeros((3,) + dims)
        centers = [_center(dims) + rng.uniform(-0.05, 0.05, 3) * n]
        centers += [_center(dims) + rng.uniform(-0.25, 0.25, 3) * n for _ in range(2)]
        for i, c in enumerate(centers):
            sigma = rng.uniform(0.2, 0.25) * n
            direction = rng.normal(size=3)
            direction *= (1.0 if i == 0 else 0.5) / np.linalg.norm(direction)
            bump = np.exp(-(_radius(dims, c) ** 2).sum(0) / (2 * sigma ** 2))
            flow += direction[:, None, None, None] * bump[None]
        return flow * window[None]
    # radial contraction toward a point near the centre
    c = _center(dims) + rng.uniform(-0.05, 0.05, 3) * n
    sigma = rng.uniform(0.28, 0.33) * n
    rel = _radius(dims, c)
    envelope = np.exp(-(rel ** 2).sum(0) / (2 * sigma ** 2))
    return -rel * envelope[None] * window[None]


def synth_flow(spec: SynthSpec, rng=None):
    """Smooth displacement of the requested kind with ``max |u| = spec.max_disp``."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    flow = _raw_flow(spec, rng)
    peak = np.sqrt((flow ** 2).sum(0)).max()
    flow = flow * (spec.max_disp / peak) if peak > 0 else flow
    # shrink until the map is comfortably invertible
    while flow.any() and jacobian_determinant(flow).min() < MIN_JACOBIAN:
        flow = 0.9 * flow
    return flow


def synth_pair(spec: SynthSpec) -> SynthPair:
    """Deterministic (in ``spec.seed``) phantom pair with its ground-truth flow."""
    rng = np.random.default_rng(spec.seed)
    fixed = phantom(spec.dims, rng)
    gt = synth_flow(spec, rng)
    moving = warp(fixed, gt)
    pair = SynthPair(moving, fixed, gt)
    if spec.labels:
        pair.labels_fixed = sphere_labels(spec.dims)
        pair.labels_moving = warp_labels(pair.labels_fixed, gt)
    return pair


def invert_displacement(flow, iterations=100, tol=1e-8):
    """Fixed-point inverse ``psi(x) = -flow(x + psi(x))`` of a small-gradient displacement."""
    psi = -np.asarray(flow, dtype=np.float64)
    for _ in range(iterations):
        nxt = -warp_field(flow, psi)
        delta = np.abs(nxt - psi).max()
        psi = nxt
        if delta < tol:
            break
    return psi


def interior_mask(dims, margin=None):
    """Voxels whose ground-truth displacement is not forced to zero by the border window."""
    return border_window(dims) > 0.5 if margin is None else border_window(dims, margin) > 0.5

