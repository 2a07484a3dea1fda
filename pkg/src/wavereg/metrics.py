"""Overlap, distance and folding metrics for evaluating a registration."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, UndefinedMetricError
from .volume import Volume, jacobian_determinant


def _labels(v):
    data = v.data if isinstance(v, Volume) else np.asarray(v)
    if data.ndim != 3:
        raise ShapeError(f"label volume must be (D,H,W), got {data.shape}")
    return data


def dice(a, b, labels=None) -> dict:
    """Per-label Dice ``2|A & B| / (|A| + |B|)``.

    Labels absent from both volumes map to ``nan`` (undefined). When ``labels``
    is omitted every non-zero label found in either volume is scored.
    """
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise ShapeError(f"label dims differ: {a.shape} vs {b.shape}")
    if labels is None:
        labels = sorted((set(np.unique(a).tolist()) | set(np.unique(b).tolist())) - {0})
    out = {}
    for lab in labels:
        ma, mb = a == lab, b == lab
        total = int(ma.sum()) + int(mb.sum())
        out[int(lab)] = 2.0 * int(np.logical_and(ma, mb).sum()) / total if total else float("nan")
    return out


def _directed(src, dst, chunk=2048):
    # max over src of the distance to the nearest point of dst
    worst = 0.0
    for i in range(0, len(src), chunk):
        block = src[i:i + chunk]
        d2 = ((block[:, None, :] - dst[None, :, :]) ** 2).sum(-1)
        worst = max(worst, float(d2.min(axis=1).max()))
    return np.sqrt(worst)


def hausdorff(a, b, label: int, spacing=None) -> float:
    """Symmetric Hausdorff distance (mm) between the voxel centres of ``label`` in a and b.

    Spacing comes from ``a`` when it is a :class:`Volume`, else from ``spacing``
    (default isotropic 1 mm). Exact brute force.
    """
    if spacing is None:
        spacing = a.spacing if isinstance(a, Volume) else (1.0, 1.0, 1.0)
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise ShapeError(f"label dims differ: {a.shape} vs {b.shape}")
    pa = np.argwhere(a == label) * np.asarray(spacing, dtype=np.float64)
    pb = np.argwhere(b == label) * np.asarray(spacing, dtype=np.float64)
    if len(pa) == 0 or len(pb) == 0:
        raise UndefinedMetricError(f"label {label} missing from {'first' if len(pa) == 0 else 'second'} volume")
    return max(_directed(pa, pb), _directed(pb, pa))


def neg_jac_fraction(flow) -> float:
    """Percentage of interior voxels where the Jacobian determinant is negative."""
    det = jacobian_determinant(flow)[1:-1, 1:-1, 1:-1]
    return 100.0 * float(np.count_nonzero(det < 0)) / det.size


def endpoint_error(flow, reference, mask=None) -> float:
    """Mean Euclidean distance between two displacement fields (voxels)."""
    err = np.sqrt(((np.asarray(flow) - np.asarray(reference)) ** 2).sum(0))
    return float(err[mask].mean() if mask is not None else err.mean())
