"""Adam over pyramid parameters and the coarse-to-fine registration driver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import metrics
from .diffeo import DEFAULT_STEPS, scaling_and_squaring
from .errors import ConfigurationError, DivergenceError, ShapeError
from .pyramid import (
    CoefficientPyramid,
    flow_gradient_to_coeffs,
    init_pyramid,
    reconstruct_flow,
    reconstruct_with_cache,
)
from .similarity import LossConfig, evaluate_loss
from .volume import check_scalar
from .wavelet import filter_bank

log = logging.getLogger(__name__)

GROUPS = ("phi1", "level2", "level3")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, lr, **kw):
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64), lr=lr, **kw)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update. ``state`` is advanced in place; new params are returned."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(f"params {params.shape}, grads {grads.shape}, state {state.m.shape} must match")
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = state.m / (1 - state.beta1 ** state.t)
    v_hat = state.v / (1 - state.beta2 ** state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass(frozen=True)
class RegistrationConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    diffeomorphic: bool = False
    wavelet: str = "haar"
    stage_iterations: tuple = (100, 100, 100)
    # largest displacement change (voxels) one Adam step of a single coefficient can cause
    lr: float = 0.05
    gate_lr: float = 0.01
    sq_steps: int = DEFAULT_STEPS

    def __post_init__(self):
        its = tuple(int(n) for n in self.stage_iterations)
        if len(its) != 3 or any(n < 0 for n in its):
            raise ConfigurationError(f"stage_iterations must be three integers >= 0, got {self.stage_iterations}")
        object.__setattr__(self, "stage_iterations", its)
        for name in ("lr", "gate_lr"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ConfigurationError(f"{name} must be > 0, got {val}")
        if self.sq_steps < 0:
            raise ConfigurationError(f"sq_steps must be >= 0, got {self.sq_steps}")
        filter_bank(self.wavelet)


@dataclass
class RegistrationResult:
    pyramid: CoefficientPyramid
    flow: np.ndarray
    field: np.ndarray
    loss_history: list
    stage_bounds: list
    stage_best: list
    diagnostics: dict


def _group_vector(p: CoefficientPyramid, group):
    return np.concatenate([a.ravel() for a in p.groups()[group]])


def _set_group(p: CoefficientPyramid, group, vec):
    offset = 0
    for arr in p.groups()[group]:
        arr[...] = vec[offset:offset + arr.size].reshape(arr.shape)
        offset += arr.size


@lru_cache(maxsize=16)
def band_gains(dims, wavelet: str) -> dict:
    """Peak displacement produced by a unit coefficient in each band at initial gates.

    Keys are ``(level, band)`` with level in ``phi1, res2, res3``. Coarse high
    bands also feed every finer level through the upsampling path, so their
    reach is far larger than one synthesis level would suggest.
    """
    fb = filter_bank(wavelet)
    gains = {}
    base = init_pyramid(dims)
    for level, bands in (("phi1", base.phi1), ("res2", base.res2), ("res3", base.res3)):
        for band, arr in bands.items():
            p = init_pyramid(dims)
            probe = getattr(p, level)[band]
            probe[(0,) + tuple(n // 2 for n in arr.shape[1:])] = 1.0
            gains[level, band] = float(np.abs(reconstruct_flow(p, fb)).max())
    return gains


def step_sizes(p: CoefficientPyramid, cfg: RegistrationConfig) -> CoefficientPyramid:
    """Per-entry Adam learning rates: ``lr / gain`` for coefficients, ``gate_lr`` for gates."""
    gains = band_gains(p.dims, cfg.wavelet)
    out = init_pyramid(p.dims)
    for level in ("phi1", "res2", "res3"):
        for band, arr in getattr(out, level).items():
            arr[...] = cfg.lr / gains[level, band]
    out.gates2[...] = cfg.gate_lr
    out.gates3[...] = cfg.gate_lr
    return out


def register(moving, fixed, config: RegistrationConfig | None = None) -> RegistrationResult:
    """Fit a coefficient pyramid so that ``warp(moving, flow)`` matches ``fixed``.

    Runs three warm-started stages: the 1/8-scale coefficients alone, then
    with the 1/4-scale residuals and gates, then with the 1/2-scale ones.
    Each stage ends on the best parameters it has seen, so the loss entering
    a stage equals the best loss of the one before.
    """
    cfg = config or RegistrationConfig()
    moving = check_scalar(moving, "moving")
    fixed = check_scalar(fixed, "fixed")
    if moving.shape != fixed.shape:
        raise ShapeError(f"moving {moving.shape} and fixed {fixed.shape} differ")
    if not (np.all(np.isfinite(moving)) and np.all(np.isfinite(fixed))):
        raise ValueError("input intensities must be finite")
    fb = filter_bank(cfg.wavelet)
    p = init_pyramid(moving.shape)
    lrs = step_sizes(p, cfg)

    def objective(pyr):
        fld, cache = reconstruct_with_cache(pyr, fb)
        ev = evaluate_loss(moving, fixed, fld, cfg.loss, cfg.diffeomorphic, cfg.sq_steps)
        return ev, fld, cache

    history, bounds, stage_best = [], [], []
    states = {}
    best_value, best_p = None, None
    for stage, n_iter in enumerate(cfg.stage_iterations):
        active = GROUPS[:stage + 1]
        for g in active:
            if g not in states:
                states[g] = AdamState.zeros_like(_group_vector(p, g), lr=_group_vector(lrs, g))
        bounds.append(len(history))
        for it in range(n_iter):
            ev, _, cache = objective(p)
            if not np.isfinite(ev.value):
                raise DivergenceError(len(history), ev.value)
            history.append(ev.value)
            if best_value is None or ev.value < best_value:
                best_value, best_p = ev.value, p.copy()
            grad = flow_gradient_to_coeffs(ev.grad, p, fb, cache)
            for g in active:
                _set_group(p, g, adam_step(_group_vector(p, g), _group_vector(grad, g), states[g]))
        if n_iter:
            ev = objective(p)[0]
            if not np.isfinite(ev.value):
                raise DivergenceError(len(history), ev.value)
            if ev.value < best_value:
                best_value, best_p = ev.value, p.copy()
            p = best_p.copy()
        stage_best.append(best_value)
        log.info("stage %d: %d iterations, best loss %s", stage + 1, n_iter, best_value)

    ev, fld, _ = objective(p)
    diagnostics = {
        "loss": ev.value,
        "similarity": ev.similarity,
        "smoothness": ev.smoothness,
        "neg_jacobian_percent": metrics.neg_jac_fraction(ev.flow),
    }
    return RegistrationResult(p, ev.flow, fld, history, bounds, stage_best, diagnostics)


def integrate(field, cfg: RegistrationConfig):
    """Map a fitted field to a displacement (identity unless diffeomorphic)."""
    return scaling_and_squaring(field, cfg.sq_steps)[0] if cfg.diffeomorphic else field
