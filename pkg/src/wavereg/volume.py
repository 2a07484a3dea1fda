"""Volume containers, trilinear backward warping and finite-difference operators.

Array conventions used throughout the package:

* scalar volumes are float arrays of shape ``(D, H, W)`` in C order (W fastest);
* vector fields are arrays of shape ``(3, D, H, W)``; channel ``i`` holds the
  displacement along coordinate ``x_i`` where ``x_0`` runs along W, ``x_1``
  along H and ``x_2`` along D (so channel ``i`` moves array axis ``2 - i``);
* displacements are in voxel units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ShapeError

# array axis of (D, H, W) moved by each flow channel
CHANNEL_AXIS = (2, 1, 0)


@dataclass
class Volume:
    """A grid with physical spacing attached.

    ``data`` is either a scalar grid ``(D, H, W)`` or a field ``(3, D, H, W)``.
    The numerical routines work on bare arrays; this container carries the
    spacing (mm per voxel, ordered like the array axes D, H, W) through I/O
    and into the distance metrics.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = field(default=(1.0, 1.0, 1.0))

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim not in (3, 4) or (self.data.ndim == 4 and self.data.shape[0] != 3):
            raise ShapeError(f"expected (D,H,W) or (3,D,H,W) data, got {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be three positive reals, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape[-3:])

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 3 else 3


def check_scalar(vol, name="volume"):
    vol = np.asarray(vol, dtype=np.float64)
    if vol.ndim != 3:
        raise ShapeError(f"{name} must be a (D,H,W) grid, got shape {vol.shape}")
    return vol


def check_field(flow, name="flow"):
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 4 or flow.shape[0] != 3:
        raise ShapeError(f"{name} must be a (3,D,H,W) field, got shape {flow.shape}")
    return flow


# ---------------------------------------------------------------------------
# trilinear kernels


@numba.njit(cache=True, inline="always")
def _axis_setup(p, n):
    # returns (i0, i1, frac, slope_mask); clamp-to-border semantics
    if n == 1:
        return 0, 0, 0.0, 0.0
    inside = 1.0 if (p >= 0.0 and p <= n - 1.0) else 0.0
    pc = min(max(p, 0.0), n - 1.0)
    i0 = min(int(np.floor(pc)), n - 2)
    return i0, i0 + 1, pc - i0, inside


@numba.njit(cache=True)
def _warp_kernel(imgs, flow, out):
    C, D, H, W = imgs.shape
    for z in range(D):
        for y in range(H):
            for x in range(W):
                x0, x1, fx, _ = _axis_setup(x + flow[0, z, y, x], W)
                y0, y1, fy, _ = _axis_setup(y + flow[1, z, y, x], H)
                z0, z1, fz, _ = _axis_setup(z + flow[2, z, y, x], D)
                gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
                for c in range(C):
                    im = imgs[c]
                    out[c, z, y, x] = (
                        gz * (gy * (gx * im[z0, y0, x0] + fx * im[z0, y0, x1])
                              + fy * (gx * im[z0, y1, x0] + fx * im[z0, y1, x1]))
                        + fz * (gy * (gx * im[z1, y0, x0] + fx * im[z1, y0, x1])
                                + fy * (gx * im[z1, y1, x0] + fx * im[z1, y1, x1]))
                    )


@numba.njit(cache=True)
def _warp_flow_grad_kernel(imgs, flow, upstream, out):
    # out[k] = sum_c upstream[c] * d(sample of imgs[c])/d(coord k)
    C, D, H, W = imgs.shape
    for z in range(D):
        for y in range(H):
            for x in range(W):
                x0, x1, fx, mx = _axis_setup(x + flow[0, z, y, x], W)
                y0, y1, fy, my = _axis_setup(y + flow[1, z, y, x], H)
                z0, z1, fz, mz = _axis_setup(z + flow[2, z, y, x], D)
                gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
                ax = 0.0
                ay = 0.0
                az = 0.0
                for c in range(C):
                    u = upstream[c, z, y, x]
                    if u == 0.0:
                        continue
                    im = imgs[c]
                    v000 = im[z0, y0, x0]
                    v001 = im[z0, y0, x1]
                    v010 = im[z0, y1, x0]
                    v011 = im[z0, y1, x1]
                    v100 = im[z1, y0, x0]
                    v101 = im[z1, y0, x1]
                    v110 = im[z1, y1, x0]
                    v111 = im[z1, y1, x1]
                    dx = (gz * (gy * (v001 - v000) + fy * (v011 - v010))
                          + fz * (gy * (v101 - v100) + fy * (v111 - v110)))
                    dy = (gz * (gx * (v010 - v000) + fx * (v011 - v001))
                          + fz * (gx * (v110 - v100) + fx * (v111 - v101)))
                    dz = (gy * (gx * (v100 - v000) + fx * (v101 - v001))
                          + fy * (gx * (v110 - v010) + fx * (v111 - v011)))
                    ax += u * dx
                    ay += u * dy
                    az += u * dz
                out[0, z, y, x] = ax * mx
                out[1, z, y, x] = ay * my
                out[2, z, y, x] = az * mz


@numba.njit(cache=True)
def _warp_image_adjoint_kernel(upstream, flow, out):
    # transpose of the sampling operator: scatter upstream into out
    C, D, H, W = upstream.shape
    for z in range(D):
        for y in range(H):
            for x in range(W):
                x0, x1, fx, _ = _axis_setup(x + flow[0, z, y, x], W)
                y0, y1, fy, _ = _axis_setup(y + flow[1, z, y, x], H)
                z0, z1, fz, _ = _axis_setup(z + flow[2, z, y, x], D)
                gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
                for c in range(C):
                    u = upstream[c, z, y, x]
                    o = out[c]
                    o[z0, y0, x0] += gz * gy * gx * u
                    o[z0, y0, x1] += gz * gy * fx * u
                    o[z0, y1, x0] += gz * fy * gx * u
                    o[z0, y1, x1] += gz * fy * fx * u
                    o[z1, y0, x0] += fz * gy * gx * u
                    o[z1, y0, x1] += fz * gy * fx * u
                    o[z1, y1, x0] += fz * fy * gx * u
                    o[z1, y1, x1] += fz * fy * fx * u


@numba.njit(cache=True)
def _sample_point(im, px, py, pz):
    D, H, W = im.shape
    x0, x1, fx, _ = _axis_setup(px, W)
    y0, y1, fy, _ = _axis_setup(py, H)
    z0, z1, fz, _ = _axis_setup(pz, D)
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    return (gz * (gy * (gx * im[z0, y0, x0] + fx * im[z0, y0, x1])
                  + fy * (gx * im[z0, y1, x0] + fx * im[z0, y1, x1]))
            + fz * (gy * (gx * im[z1, y0, x0] + fx * im[z1, y0, x1])
                    + fy * (gx * im[z1, y1, x0] + fx * im[z1, y1, x1])))


@numba.njit(cache=True)
def _forward_diff_energy(field, out):
    # sum of squared forward differences over channels and axes; out <- gradient of that sum
    C, D, H, W = field.shape
    total = 0.0
    for c in range(C):
        for z in range(D):
            for y in range(H):
                for x in range(W):
                    v = field[c, z, y, x]
                    if x + 1 < W:
                        d = field[c, z, y, x + 1] - v
                        total += d * d
                        out[c, z, y, x + 1] += 2.0 * d
                        out[c, z, y, x] -= 2.0 * d
                    if y + 1 < H:
                        d = field[c, z, y + 1, x] - v
                        total += d * d
                        out[c, z, y + 1, x] += 2.0 * d
                        out[c, z, y, x] -= 2.0 * d
                    if z + 1 < D:
                        d = field[c, z + 1, y, x] - v
                        total += d * d
                        out[c, z + 1, y, x] += 2.0 * d
                        out[c, z, y, x] -= 2.0 * d
    return total


# ---------------------------------------------------------------------------
# public operations


def trilinear_sample(vol, coord) -> float:
    """Sample ``vol`` at ``coord = (x0, x1, x2)`` (W, H, D order), clamping to the border."""
    vol = check_scalar(vol)
    coord = np.asarray(coord, dtype=np.float64)
    if coord.shape != (3,):
        raise ValueError(f"coordinate must be a triple, got {coord!r}")
    if not np.all(np.isfinite(coord)):
        raise ValueError(f"cannot sample at non-finite coordinate {tuple(coord)}")
    return float(_sample_point(np.ascontiguousarray(vol), coord[0], coord[1], coord[2]))


def _check_pair(moving, flow):
    moving = np.asarray(moving, dtype=np.float64)
    flow = check_field(flow)
    if moving.shape[-3:] != flow.shape[1:]:
        raise ShapeError(f"image dims {moving.shape[-3:]} do not match flow dims {flow.shape[1:]}")
    return moving, flow


def warp_channels(images, flow):
    """Backward-warp a stack ``(C, D, H, W)`` of images with one flow."""
    images, flow = _check_pair(images, flow)
    if images.ndim != 4:
        raise ShapeError(f"expected (C,D,H,W) stack, got {images.shape}")
    out = np.empty_like(images)
    _warp_kernel(np.ascontiguousarray(images), np.ascontiguousarray(flow), out)
    return out


def warp(moving, flow):
    """Backward warp: ``out(x) = moving(x + flow(x))`` with trilinear interpolation."""
    moving = check_scalar(moving, "moving")
    return warp_channels(moving[None], flow)[0]


def warp_field(field, flow):
    """Warp each channel of a vector field by ``flow`` (used for flow composition)."""
    field = check_field(field, "field")
    return warp_channels(field, flow)


def warp_flow_gradient(images, flow, upstream):
    """Gradient of ``<upstream, warp_channels(images, flow)>`` with respect to ``flow``."""
    images, flow = _check_pair(images, flow)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != images.shape:
        raise ShapeError(f"upstream shape {upstream.shape} != image shape {images.shape}")
    out = np.empty_like(flow)
    _warp_flow_grad_kernel(np.ascontiguousarray(images), np.ascontiguousarray(flow),
                           np.ascontiguousarray(upstream), out)
    return out


def warp_backward(moving, flow, upstream):
    """Adjoint of :func:`warp` with respect to the flow.

    Returns the field ``d<upstream, warp(moving, flow)>/d flow`` using the
    piecewise-constant derivative of trilinear interpolation. Samples that
    were clamped along an axis get zero gradient along that axis.
    """
    moving = check_scalar(moving, "moving")
    upstream = check_scalar(upstream, "upstream")
    return warp_flow_gradient(moving[None], flow, upstream[None])


def warp_image_adjoint(upstream, flow):
    """Transpose of the sampling operator, i.e. ``d<upstream, warp_channels(m, flow)>/dm``."""
    upstream, flow = _check_pair(upstream, flow)
    squeeze = upstream.ndim == 3
    if squeeze:
        upstream = upstream[None]
    out = np.zeros_like(upstream)
    _warp_image_adjoint_kernel(np.ascontiguousarray(upstream), np.ascontiguousarray(flow), out)
    return out[0] if squeeze else out


def spatial_gradient(field):
    """Forward differences of every channel along every coordinate axis.

    Returns an array ``g`` of shape ``(3, 3, D, H, W)`` with
    ``g[c, a] = u_c(x + e_a) - u_c(x)``; the trailing slice along ``a`` is zero.
    """
    field = check_field(field, "field")
    if min(field.shape[1:]) < 2:
        raise ShapeError(f"spatial_gradient needs every dim >= 2, got {field.shape[1:]}")
    out = np.zeros((3, 3) + field.shape[1:], dtype=np.float64)
    for a in range(3):
        ax = CHANNEL_AXIS[a] + 1
        n = field.shape[ax]
        lo = [slice(None)] * 4
        hi = [slice(None)] * 4
        lo[ax] = slice(0, n - 1)
        hi[ax] = slice(1, n)
        out[:, a][tuple(lo)] = field[tuple(hi)] - field[tuple(lo)]
    return out


def spatial_gradient_adjoint(grad):
    """Transpose of :func:`spatial_gradient`: maps ``(3, 3, D, H, W)`` back to a field."""
    grad = np.asarray(grad, dtype=np.float64)
    out = np.zeros(grad.shape[:1] + grad.shape[2:], dtype=np.float64)
    for a in range(3):
        ax = CHANNEL_AXIS[a] + 1
        n = out.shape[ax]
        lo = [slice(None)] * 4
        hi = [slice(None)] * 4
        lo[ax] = slice(0, n - 1)
        hi[ax] = slice(1, n)
        g = grad[:, a][tuple(lo)]
        out[tuple(hi)] += g
        out[tuple(lo)] -= g
    return out


def jacobian_matrix(flow):
    """Per-voxel ``I + du/dx`` as an array ``(3, 3, D, H, W)`` (row: channel, col: axis).

    Central differences in the interior, one-sided at the faces.
    """
    flow = check_field(flow)
    if min(flow.shape[1:]) < 3:
        raise ShapeError(f"jacobian needs every dim >= 3, got {flow.shape[1:]}")
    jac = np.empty((3, 3) + flow.shape[1:], dtype=np.float64)
    for c in range(3):
        for a in range(3):
            jac[c, a] = np.gradient(flow[c], axis=CHANNEL_AXIS[a])
        jac[c, c] += 1.0
    return jac


def jacobian_determinant(flow):
    """Determinant of ``I + du/dx`` at every voxel."""
    j = jacobian_matrix(flow)
    return (j[0, 0] * (j[1, 1] * j[2, 2] - j[1, 2] * j[2, 1])
            - j[0, 1] * (j[1, 0] * j[2, 2] - j[1, 2] * j[2, 0])
            + j[0, 2] * (j[1, 0] * j[2, 1] - j[1, 1] * j[2, 0]))


def identity_grid(dims):
    """Voxel coordinates as a field: channel ``i`` holds ``x_i``."""
    d, h, w = dims
    z, y, x = np.meshgrid(np.arange(d), np.arange(h), np.arange(w), indexing="ij")
    return np.stack([x, y, z]).astype(np.float64)


def warp_labels(labels, flow):
    """Nearest-neighbour backward warp of an integer label volume (border clamped)."""
    labels = np.asarray(labels)
    flow = check_field(flow)
    if labels.shape != flow.shape[1:]:
        raise ShapeError(f"label dims {labels.shape} do not match flow dims {flow.shape[1:]}")
    grid = identity_grid(labels.shape) + flow
    idx = []
    for c in (2, 1, 0):
        n = labels.shape[CHANNEL_AXIS[c]]
        idx.append(np.clip(np.floor(grid[c] + 0.5), 0, n - 1).astype(np.intp))
    return labels[tuple(idx)]


def forward_difference_energy(field):
    """``(sum of squared forward differences, its gradient)`` over all channels and axes."""
    field = check_field(field, "field")
    if min(field.shape[1:]) < 2:
        raise ShapeError(f"forward differences need every dim >= 2, got {field.shape[1:]}")
    grad = np.zeros_like(field)
    total = _forward_diff_energy(np.ascontiguousarray(field), grad)
    return total, grad
