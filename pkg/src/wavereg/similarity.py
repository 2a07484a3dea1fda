"""Registration loss terms with analytic gradients.

Similarity is either mean squared error or windowed squared NCC; the
regularizer is the mean squared forward difference of the field. Losses are
minimised, so NCC enters as ``-value``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from .diffeo import DEFAULT_STEPS, scaling_and_squaring, exp_backward
from .errors import ConfigurationError, ShapeError
from .volume import check_field, check_scalar, forward_difference_energy, warp, warp_backward

NCC_EPS = 1e-5
DEFAULT_LAMBDA = {"ncc": 2.0, "mse": 0.01}


@dataclass(frozen=True)
class LossConfig:
    kind: str = "ncc"
    lam: float | None = None
    ncc_window: int = 9

    def __post_init__(self):
        if self.kind not in DEFAULT_LAMBDA:
            raise ConfigurationError(f"unknown loss {self.kind!r}; choose ncc or mse")
        if self.lam is None:
            object.__setattr__(self, "lam", DEFAULT_LAMBDA[self.kind])
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigurationError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.ncc_window < 3 or self.ncc_window % 2 == 0:
            raise ConfigurationError(f"ncc_window must be odd and >= 3, got {self.ncc_window}")


def _same_dims(a, b):
    a = check_scalar(a, "warped")
    b = check_scalar(b, "fixed")
    if a.shape != b.shape:
        raise ShapeError(f"dims differ: {a.shape} vs {b.shape}")
    return a, b


def mse(warped, fixed):
    """Returns ``(mean((warped - fixed)**2), d/d warped)``."""
    warped, fixed = _same_dims(warped, fixed)
    diff = warped - fixed
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def _box_sum(x, window):
    # zero-padded window sum; symmetric, so it is its own adjoint
    return uniform_filter(x, size=window, mode="constant", cval=0.0) * window ** 3


def _ncc_terms(warped, fixed, window):
    if window < 3 or window % 2 == 0:
        raise ConfigurationError(f"NCC window must be odd and >= 3, got {window}")
    i, j = _same_dims(warped, fixed)
    if window > min(i.shape):
        raise ShapeError(f"window {window} larger than volume dims {i.shape}")
    n = window ** 3
    i_sum, j_sum = _box_sum(i, window), _box_sum(j, window)
    i2, j2, ij = _box_sum(i * i, window), _box_sum(j * j, window), _box_sum(i * j, window)
    cross = ij - i_sum * j_sum / n
    i_var = i2 - i_sum * i_sum / n
    j_var = j2 - j_sum * j_sum / n
    den = i_var * j_var + NCC_EPS
    return i, j, i_sum, j_sum, cross, i_var, j_var, den


def ncc_map(warped, fixed, window: int = 9):
    """Per-voxel squared correlation coefficient over ``window**3`` neighbourhoods."""
    *_, cross, _, _, den = _ncc_terms(warped, fixed, window)
    return cross * cross / den


def local_ncc(warped, fixed, window: int = 9):
    """Mean squared local correlation coefficient over ``window**3`` neighbourhoods.

    Returns ``(value, d value / d warped)``; ``value`` lies in [0, 1] and is 1
    for perfectly (affinely) correlated images. Window sums are zero-padded.
    """
    i, j, i_sum, j_sum, cross, i_var, j_var, den = _ncc_terms(warped, fixed, window)
    n = window ** 3
    cc = cross * cross / den
    value = float(np.mean(cc))

    scale = 1.0 / cc.size
    d_cross = 2.0 * cross / den * scale
    d_ivar = -cross * cross * j_var / (den * den) * scale
    a_isum = -d_cross * j_sum / n - 2.0 * d_ivar * i_sum / n
    grad = _box_sum(a_isum, window) + 2.0 * i * _box_sum(d_ivar, window) + j * _box_sum(d_cross, window)
    return value, grad


def smoothness(field):
    """Mean over voxels, channels and axes of squared forward differences, and its gradient."""
    total, grad = forward_difference_energy(field)
    n = 3 * grad.size
    return total / n, grad / n


@dataclass
class LossEvaluation:
    value: float
    grad: np.ndarray
    similarity: float
    smoothness: float
    flow: np.ndarray
    warped: np.ndarray = field(repr=False)


def similarity_loss(warped, fixed, config: LossConfig):
    """Similarity as a quantity to minimise, with its gradient."""
    if config.kind == "mse":
        return mse(warped, fixed)
    value, grad = local_ncc(warped, fixed, config.ncc_window)
    return -value, -grad


def evaluate_loss(moving, fixed, field, config: LossConfig, diffeomorphic: bool = False,
                  sq_steps: int = DEFAULT_STEPS) -> LossEvaluation:
    """Total loss and its gradient with respect to ``field``.

    ``field`` is the displacement, or in diffeomorphic mode the stationary
    velocity; the regularizer always acts on ``field`` itself.
    """
    moving, fixed = _same_dims(moving, fixed)
    field = check_field(field, "field")
    if field.shape[1:] != moving.shape:
        raise ShapeError(f"field dims {field.shape[1:]} do not match image dims {moving.shape}")
    if diffeomorphic:
        flow, trace = scaling_and_squaring(field, sq_steps)
    else:
        flow = field
    warped = warp(moving, flow)
    sim, d_warped = similarity_loss(warped, fixed, config)
    grad = warp_backward(moving, flow, d_warped)
    if diffeomorphic:
        grad = exp_backward(grad, trace, field)
    reg, d_reg = smoothness(field)
    if config.lam > 0:
        grad = grad + config.lam * d_reg
    value = sim + config.lam * reg
    return LossEvaluation(value, grad, sim, reg, flow, warped)


def total_loss(moving, fixed, field, config: LossConfig, diffeomorphic: bool = False,
               sq_steps: int = DEFAULT_STEPS):
    """``(value, gradient w.r.t. field)`` of similarity plus weighted smoothness."""
    ev = evaluate_loss(moving, fixed, field, config, diffeomorphic, sq_steps)
    return ev.value, ev.grad
