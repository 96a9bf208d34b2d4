"""Central finite-difference check of tape gradients."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import GradTape, Tensor

log = logging.getLogger(__name__)


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped_kinks: int


def _scalar(fn, point) -> float:
    out = fn(point)
    return float(np.asarray(out.data).reshape(-1)[0])


def gradient_check_detail(
    fn: Callable[[Tensor], Tensor],
    point: Tensor,
    eps: float = 1e-3,
    *,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    kink_tol: float = 1e-6,
) -> GradCheckResult:
    """Compare tape gradients of scalar ``fn(point)`` against central differences.

    ``point.data`` is perturbed in place and restored, so ``fn`` may also close
    over ``point`` (that is how parameters are checked). ``point`` is promoted
    to float64 for the duration of the check; other tensors ``fn`` uses should
    be float64 too for full f64 accumulation. The relative error of
    one coordinate is |a - n| / max(|a|, |n|, 1e-8).

    ReLU and |.| make the graph piecewise linear. When a kink lies inside the
    +-eps stencil the central difference is not a valid oracle; such a
    coordinate shows up as disagreement between the eps and eps/2 central
    differences (which agree to O(eps^2) for smooth functions) and is counted
    in ``skipped_kinks`` instead of being scored.
    """
    saved_data, saved_flag = point.data, point.requires_grad
    point.data = np.array(saved_data, dtype=np.float64)
    point.requires_grad = True
    try:
        return _check(fn, point, eps, max_coords, rng, kink_tol)
    finally:
        point.data, point.requires_grad = saved_data, saved_flag


def _check(fn, point, eps, max_coords, rng, kink_tol) -> GradCheckResult:
    with GradTape() as tape:
        out = fn(point)
    grads = tape.backward(out)
    analytic = grads.get(point, np.zeros_like(point.data)).reshape(-1)

    flat = point.data.reshape(-1)
    if max_coords is not None and max_coords < flat.size:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(flat.size, size=max_coords, replace=False)
    else:
        coords = np.arange(flat.size)

    def central(i, h):
        orig = flat[i]
        flat[i] = orig + h
        fp = _scalar(fn, point)
        flat[i] = orig - h
        fm = _scalar(fn, point)
        flat[i] = orig
        return (fp - fm) / (2 * h)

    worst = 0.0
    skipped = 0
    for idx in coords:
        numeric = central(idx, eps)
        half = central(idx, eps / 2)
        if abs(numeric - half) > kink_tol * max(abs(numeric), abs(half), 1.0):
            skipped += 1
            continue
        a = float(analytic[idx])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    if skipped:
        log.debug("gradient_check: %d of %d coordinates straddle a kink", skipped, len(coords))
    return GradCheckResult(worst, len(coords) - skipped, skipped)


def gradient_check(fn: Callable[[Tensor], Tensor], point: Tensor, eps: float = 1e-3, **kwargs) -> float:
    """Max relative error between tape gradients and central differences."""
    return gradient_check_detail(fn, point, eps, **kwargs).max_rel_error
