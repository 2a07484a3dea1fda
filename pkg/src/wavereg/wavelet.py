"""Separable 3D orthogonal discrete wavelet transform with periodic extension.

A grid is decomposed into eight half-resolution sub-bands. Sub-band labels
name the filter applied along each array axis in (D, H, W) order, so ``"lhh"``
is low-pass along D and high-pass along H and W. Any leading axes (e.g. the
channel axis of a vector field) are carried through untouched.

With periodic extension the transform matrix is exactly orthogonal, so the
inverse transform is also the adjoint of the forward one.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ConfigurationError, ShapeError

SUBBANDS = tuple("".join(p) for p in product("lh", repeat=3))
HIGH_BANDS = SUBBANDS[1:]

_SQ3 = np.sqrt(3.0)
_LOW_TAPS = {
    "haar": np.array([1.0, 1.0]) / np.sqrt(2.0),
    "db2": np.array([1 + _SQ3, 3 + _SQ3, 3 - _SQ3, 1 - _SQ3]) / (4 * np.sqrt(2.0)),
}


@dataclass(frozen=True)
class FilterBank:
    kind: str
    low: np.ndarray
    high: np.ndarray

    def __len__(self):
        return len(self.low)


def filter_bank(kind: str = "haar") -> FilterBank:
    """Orthonormal analysis filters; the high-pass is the quadrature mirror of the low-pass."""
    try:
        low = _LOW_TAPS[kind].copy()
    except KeyError:
        raise ConfigurationError(f"unknown wavelet {kind!r}; choose from {sorted(_LOW_TAPS)}") from None
    n = len(low)
    high = np.array([(-1) ** k * low[n - 1 - k] for k in range(n)])
    low.flags.writeable = False
    high.flags.writeable = False
    return FilterBank(kind, low, high)


def _take(x, axis, sl):
    idx = [slice(None)] * x.ndim
    idx[axis] = sl
    return x[tuple(idx)]


def _analysis(x, taps, axis):
    # y[n] = sum_k taps[k] * x[(2n + k) mod N], split into even/odd phases
    phases = (_take(x, axis, slice(0, None, 2)), _take(x, axis, slice(1, None, 2)))
    out = 0.0
    for k, t in enumerate(taps):
        src = phases[k % 2]
        shift = k // 2
        out = out + t * (np.roll(src, -shift, axis=axis) if shift else src)
    return out


def _synthesis(lo, hi, fb, axis):
    # transpose of the stacked [low; high] analysis operator
    phases = [0.0, 0.0]
    for k in range(len(fb)):
        shift = k // 2
        a = np.roll(lo, shift, axis=axis) if shift else lo
        b = np.roll(hi, shift, axis=axis) if shift else hi
        phases[k % 2] = phases[k % 2] + fb.low[k] * a + fb.high[k] * b
    out = np.stack(phases, axis=axis + 1)
    shape = list(lo.shape)
    shape[axis] *= 2
    return out.reshape(shape)


def _spatial_axes(ndim):
    return (ndim - 3, ndim - 2, ndim - 1)


def dwt3_unchecked(x, fb: FilterBank) -> dict:
    """Forward transform without the filter-length precondition (even dims only)."""
    x = np.asarray(x, dtype=np.float64)
    bands = {"": x}
    for ax in _spatial_axes(x.ndim):
        bands = {
            key + tag: _analysis(arr, taps, ax)
            for key, arr in bands.items()
            for tag, taps in (("l", fb.low), ("h", fb.high))
        }
    return bands


def dwt3(x, fb: FilterBank) -> dict:
    """One level of the 3D DWT; returns a dict of the eight sub-bands keyed by label."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 3:
        raise ShapeError(f"dwt3 needs at least 3 dims, got shape {x.shape}")
    dims = x.shape[-3:]
    if any(n % 2 for n in dims):
        raise ShapeError(f"dwt3 needs even dims, got {dims}")
    if min(dims) < len(fb):
        raise ShapeError(f"dims {dims} shorter than the {len(fb)}-tap {fb.kind} filter")
    return dwt3_unchecked(x, fb)


def idwt3(coeffs: dict, fb: FilterBank) -> np.ndarray:
    """Inverse of :func:`dwt3`: synthesise a grid with doubled spatial dims."""
    if set(coeffs) != set(SUBBANDS):
        raise ShapeError(f"expected sub-bands {SUBBANDS}, got {sorted(coeffs)}")
    shapes = {np.shape(c) for c in coeffs.values()}
    if len(shapes) != 1:
        raise ShapeError(f"inconsistent sub-band shapes {sorted(shapes)}")
    ndim = len(shapes.pop())
    if ndim < 3:
        raise ShapeError("sub-bands must have at least 3 dims")
    bands = {k: np.asarray(v, dtype=np.float64) for k, v in coeffs.items()}
    for ax in reversed(_spatial_axes(ndim)):
        bands = {
            key: _synthesis(bands[key + "l"], bands[key + "h"], fb, ax)
            for key in {k[:-1] for k in bands}
        }
    return bands[""]
