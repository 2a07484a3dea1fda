"""Three-level wavelet coefficient pyramid parameterising a dense 3-channel field.

Layout (``D, H, W`` are the full dims, each divisible by 8)::

    phi1   all 8 sub-bands at 1/8 resolution
    res2   7 high-frequency residual bands at 1/4 resolution
    res3   7 high-frequency residual bands at 1/2 resolution
    gates2, gates3   (7, 2) arrays of (a, b) per high band

Reconstruction runs coarse to fine. At each level the high bands from the
previous level are upsampled (trilinear, align-corners), blended with the
level's residual as ``a * up + b * res``, and passed with the running low-pass
band through one inverse DWT. Everything is linear in the coefficients for
fixed gates, and :func:`flow_gradient_to_coeffs` is its exact adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ShapeError
from .wavelet import HIGH_BANDS, SUBBANDS, FilterBank, dwt3_unchecked, idwt3

@dataclass
class CoefficientPyramid:
    phi1: dict
    res2: dict
    res3: dict
    gates2: np.ndarray
    gates3: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(8 * n for n in self.phi1["lll"].shape[1:])

    def copy(self) -> "CoefficientPyramid":
        return CoefficientPyramid(
            {k: v.copy() for k, v in self.phi1.items()},
            {k: v.copy() for k, v in self.res2.items()},
            {k: v.copy() for k, v in self.res3.items()},
            self.gates2.copy(),
            self.gates3.copy(),
        )

    def groups(self) -> dict:
        """Parameter groups as lists of arrays, in serialization order."""
        return {
            "phi1": [self.phi1[k] for k in SUBBANDS],
            "level2": [self.res2[k] for k in HIGH_BANDS] + [self.gates2],
            "level3": [self.res3[k] for k in HIGH_BANDS] + [self.gates3],
        }

    def arrays(self) -> list:
        """All parameter arrays in the fixed serialization order."""
        return ([self.phi1[k] for k in SUBBANDS]
                + [self.res2[k] for k in HIGH_BANDS]
                + [self.res3[k] for k in HIGH_BANDS]
                + [self.gates2, self.gates3])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_vector(cls, vec, dims) -> "CoefficientPyramid":
        p = init_pyramid(dims)
        vec = np.asarray(vec, dtype=np.float64).ravel()
        if vec.size != parameter_count(dims):
            raise ShapeError(f"vector has {vec.size} entries, pyramid for {dims} needs {parameter_count(dims)}")
        offset = 0
        for arr in p.arrays():
            arr[...] = vec[offset:offset + arr.size].reshape(arr.shape)
            offset += arr.size
        return p

    def validate(self):
        d, h, w = self.dims
        for name, bands, keys, f in (("phi1", self.phi1, SUBBANDS, 8),
                                     ("res2", self.res2, HIGH_BANDS, 4),
                                     ("res3", self.res3, HIGH_BANDS, 2)):
            if set(bands) != set(keys):
                raise ShapeError(f"{name} must hold bands {keys}, got {sorted(bands)}")
            want = (3, d // f, h // f, w // f)
            for k in keys:
                if bands[k].shape != want:
                    raise ShapeError(f"{name}[{k}] has shape {bands[k].shape}, expected {want}")
        for name, g in (("gates2", self.gates2), ("gates3", self.gates3)):
            if g.shape != (7, 2):
                raise ShapeError(f"{name} must be (7, 2), got {g.shape}")
            if not np.all(np.isfinite(g)):
                raise ValueError(f"{name} contains non-finite values")


def _check_dims(dims):
    dims = tuple(int(n) for n in dims)
    if len(dims) != 3 or any(n <= 0 or n % 8 for n in dims):
        raise ShapeError(f"pyramid dims must be positive multiples of 8, got {dims}")
    return dims


def init_pyramid(dims) -> CoefficientPyramid:
    """Zero coefficients everywhere, gates (a, b) = (1, 1)."""
    d, h, w = _check_dims(dims)

    def bands(keys, f):
        return {k: np.zeros((3, d // f, h // f, w // f)) for k in keys}

    return CoefficientPyramid(bands(SUBBANDS, 8), bands(HIGH_BANDS, 4), bands(HIGH_BANDS, 2),
                              np.ones((7, 2)), np.ones((7, 2)))


def parameter_count(dims) -> int:
    d, h, w = _check_dims(dims)
    n = d * h * w
    return 3 * (8 * n // 512 + 7 * n // 64 + 7 * n // 8) + 2 * 7 * 2


# ---------------------------------------------------------------------------
# upsampling


@lru_cache(maxsize=32)
def _upsample_matrix(n: int) -> np.ndarray:
    # (2n, n) align-corners linear interpolation
    m = 2 * n
    mat = np.zeros((m, n))
    if n == 1:
        mat[:, 0] = 1.0
        return mat
    pos = np.arange(m) * (n - 1) / (m - 1)
    i0 = np.minimum(np.floor(pos).astype(int), n - 2)
    frac = pos - i0
    mat[np.arange(m), i0] = 1.0 - frac
    mat[np.arange(m), i0 + 1] = frac
    mat.flags.writeable = False
    return mat


def _apply_per_axis(x, mats):
    # contract each of the last three axes with the matching matrix
    for i, mat in enumerate(mats):
        axis = x.ndim - 3 + i
        x = np.moveaxis(np.tensordot(mat, x, axes=(1, axis)), 0, axis)
    return np.ascontiguousarray(x)


def upsample_grid(x, factor=2):
    if factor != 2:
        raise ValueError(f"only factor 2 is supported, got {factor}")
    x = np.asarray(x, dtype=np.float64)
    return _apply_per_axis(x, [_upsample_matrix(n) for n in x.shape[-3:]])


def upsample_grid_adjoint(y):
    y = np.asarray(y, dtype=np.float64)
    return _apply_per_axis(y, [_upsample_matrix(n // 2).T for n in y.shape[-3:]])


def upsample_subbands(bands: dict, factor: int = 2) -> dict:
    """Trilinear (align-corners) 2x upsampling of each sub-band grid."""
    return {k: upsample_grid(v, factor) for k, v in bands.items()}


def refine_subbands(upsampled: dict, residual: dict, gates) -> dict:
    """Blend each band as ``a_k * upsampled_k + b_k * residual_k``."""
    gates = np.asarray(gates, dtype=np.float64)
    out = {}
    for i, k in enumerate(HIGH_BANDS):
        u, r = upsampled[k], residual[k]
        if np.shape(u) != np.shape(r):
            raise ShapeError(f"band {k}: upsampled {np.shape(u)} vs residual {np.shape(r)}")
        out[k] = gates[i, 0] * u + gates[i, 1] * r
    return out


# ---------------------------------------------------------------------------
# forward chain and adjoint


def _forward(p: CoefficientPyramid, fb: FilterBank):
    p.validate()
    lll2 = idwt3(p.phi1, fb)
    up1 = upsample_subbands({k: p.phi1[k] for k in HIGH_BANDS})
    bar2 = refine_subbands(up1, p.res2, p.gates2)
    lll3 = idwt3({"lll": lll2, **bar2}, fb)
    up2 = upsample_subbands(bar2)
    bar3 = refine_subbands(up2, p.res3, p.gates3)
    flow = idwt3({"lll": lll3, **bar3}, fb)
    return flow, up1, up2


def reconstruct_flow(p: CoefficientPyramid, fb: FilterBank) -> np.ndarray:
    """Synthesise the full-resolution ``(3, D, H, W)`` field from the pyramid."""
    return _forward(p, fb)[0]


def reconstruct_with_cache(p: CoefficientPyramid, fb: FilterBank):
    """Like :func:`reconstruct_flow`, also returning the upsampled bands the adjoint needs."""
    flow, up1, up2 = _forward(p, fb)
    return flow, (up1, up2)


def flow_gradient_to_coeffs(g, p: CoefficientPyramid, fb: FilterBank, cache=None) -> CoefficientPyramid:
    """Pull a field-space gradient back onto every pyramid parameter.

    Returns a pyramid-shaped container whose entries are
    ``d<g, reconstruct_flow(p)>/d theta``, gate gradients included. ``cache``
    from :func:`reconstruct_with_cache` on the same ``p`` skips the forward pass.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (3,) + p.dims:
        raise ShapeError(f"gradient shape {g.shape} does not match pyramid field {(3,) + p.dims}")
    up1, up2 = cache if cache is not None else _forward(p, fb)[1:]
    grad = init_pyramid(p.dims)

    c3 = dwt3_unchecked(g, fb)
    g_bar2 = {}
    for i, k in enumerate(HIGH_BANDS):
        gk = c3[k]
        grad.gates3[i] = (np.vdot(gk, up2[k]), np.vdot(gk, p.res3[k]))
        grad.res3[k] = p.gates3[i, 1] * gk
        g_bar2[k] = upsample_grid_adjoint(p.gates3[i, 0] * gk)

    c2 = dwt3_unchecked(c3["lll"], fb)
    g_hb1 = {}
    for i, k in enumerate(HIGH_BANDS):
        gk = g_bar2[k] + c2[k]
        grad.gates2[i] = (np.vdot(gk, up1[k]), np.vdot(gk, p.res2[k]))
        grad.res2[k] = p.gates2[i, 1] * gk
        g_hb1[k] = upsample_grid_adjoint(p.gates2[i, 0] * gk)

    c1 = dwt3_unchecked(c2["lll"], fb)
    grad.phi1["lll"] = c1["lll"]
    for k in HIGH_BANDS:
        grad.phi1[k] = c1[k] + g_hb1[k]
    return grad
