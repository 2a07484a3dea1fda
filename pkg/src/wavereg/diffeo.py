"""Scaling and squaring for stationary velocity fields, with its reverse pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, StateError
from .volume import check_field, warp_field, warp_flow_gradient, warp_image_adjoint

DEFAULT_STEPS = 7


@dataclass(frozen=True)
class ExpTrace:
    """Inputs of every squaring step, kept for the reverse pass."""

    steps: int
    intermediates: list = field(default_factory=list)


def scaling_and_squaring(v, steps: int = DEFAULT_STEPS):
    """Integrate ``exp(v)``: halve ``v`` ``steps`` times, then compose it with itself.

    Returns the displacement ``phi`` and the trace needed by :func:`exp_backward`.
    """
    if steps < 0:
        raise ConfigurationError(f"steps must be >= 0, got {steps}")
    v = check_field(v, "velocity")
    if not np.all(np.isfinite(v)):
        raise ValueError("velocity field contains non-finite values")
    if steps == 0:
        return v.copy(), ExpTrace(0, [])
    phi = v / 2.0 ** steps
    snapshots = []
    for _ in range(steps):
        snapshots.append(phi)
        phi = phi + warp_field(phi, phi)
    return phi, ExpTrace(steps, snapshots)


def exp_backward(g, trace: ExpTrace, v):
    """Gradient of ``<g, scaling_and_squaring(v).flow>`` with respect to ``v``."""
    g = check_field(g, "gradient")
    v = check_field(v, "velocity")
    if len(trace.intermediates) != trace.steps:
        raise StateError(f"trace holds {len(trace.intermediates)} snapshots for {trace.steps} steps")
    if trace.steps == 0:
        return g.copy()
    if trace.intermediates[0].shape != v.shape or not np.array_equal(trace.intermediates[0], v / 2.0 ** trace.steps):
        raise StateError("trace was not produced from this velocity field")
    for phi in reversed(trace.intermediates):
        # phi_next = phi + W(phi, phi); phi enters both as the image and as the flow
        g = g + warp_image_adjoint(g, phi) + warp_flow_gradient(phi, phi, g)
    return g / 2.0 ** trace.steps
