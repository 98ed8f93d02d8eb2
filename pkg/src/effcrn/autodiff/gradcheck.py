"""Central-difference gradient checks against the tape."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..exceptions import UsageError
from .tensor import Tape, Tensor


def _analytic(fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> list[np.ndarray]:
    for t in tensors:
        t.grad = np.zeros_like(t.data)
    with Tape() as tape:
        loss = fn()
    if loss.size != 1:
        raise UsageError("grad_check: fn must return a scalar")
    tape.backward(loss)
    return [t.grad.copy() for t in tensors]


def _evaluate(fn: Callable[[], Tensor]) -> float:
    return float(np.asarray(fn().data, dtype=np.float64).reshape(()))


def _central(fn, flat, i, eps) -> float:
    orig = flat[i]
    flat[i] = orig + eps
    up = _evaluate(fn)
    flat[i] = orig - eps
    down = _evaluate(fn)
    flat[i] = orig
    return (up - down) / (2 * eps)


def grad_check_report(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-6,
    samples: int | None = 8,
    floor: float = 1e-7,
    rng: np.random.Generator | int | None = 0,
    names: Sequence[str] | None = None,
    kink_tol: float | None = None,
    skipped: dict[str, int] | None = None,
) -> dict[str, float]:
    """Per-tensor max relative error between tape gradients and central differences.

    ``samples`` coordinates are drawn per tensor (all of them when ``None`` or
    when the tensor is smaller).  Run in float64; single precision leaves too
    little headroom for the finite differences.

    With ``kink_tol`` set, each coordinate is also differenced at ``eps / 4``;
    when the two estimates disagree by more than ``kink_tol`` (relative) the
    perturbation straddles a kink of a piecewise-linear activation, the
    difference quotient is not a derivative there, and another coordinate is
    drawn instead.  Replaced coordinates are counted in ``skipped``.
    """
    rng = np.random.default_rng(rng)
    analytic = _analytic(fn, tensors)
    report = {}
    for k, (t, grad) in enumerate(zip(tensors, analytic)):
        name = names[k] if names else (getattr(t, "name", "") or f"tensor{k}")
        flat = t.data.reshape(-1)
        if samples is None or flat.size <= samples:
            candidates, want = np.arange(flat.size), flat.size
        else:
            candidates, want = rng.permutation(flat.size), samples
        worst, used, dropped = 0.0, 0, 0
        for i in candidates:
            if used == want:
                break
            numeric = _central(fn, flat, i, eps)
            if kink_tol is not None:
                fine = _central(fn, flat, i, eps / 4)
                if abs(numeric - fine) > kink_tol * max(abs(numeric), abs(fine), floor):
                    dropped += 1
                    continue
            a = float(grad.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
            used += 1
        report[name] = worst
        if skipped is not None and dropped:
            skipped[name] = dropped
    return report


def grad_check(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-6,
    samples: int | None = 8,
    floor: float = 1e-7,
    rng: np.random.Generator | int | None = 0,
) -> float:
    """Max relative error over ``tensors``; see :func:`grad_check_report`."""
    report = grad_check_report(fn, tensors, eps=eps, samples=samples, floor=floor, rng=rng)
    return max(report.values(), default=0.0)
