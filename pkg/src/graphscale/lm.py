"""Levenberg-Marquardt for small dense least-squares problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

CONVERGED = "Converged"
MAX_ITERATIONS = "MaxIterations"

# damping beyond this means the local model is useless; treat as stalled
_MAX_DAMPING = 1e16


@dataclass
class LMResult:
    x: np.ndarray
    sse: float
    status: str
    iterations: int
    sse_history: list[float] = field(default_factory=list)


def levenberg_marquardt(
    fun: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    x0,
    *,
    max_iterations: int = 200,
    sse_rel_tol: float = 1e-10,
    step_tol: float = 1e-12,
    initial_damping: float = 1e-3,
    damping_up: float = 10.0,
    damping_down: float = 0.1,
) -> LMResult:
    """Minimise ``sum(r(x)**2)``.

    Args:
        fun: Returns ``(r, J)`` with residuals ``r`` (m,) and Jacobian
            ``J = dr/dx`` (m, k). Non-finite residuals mark a point as
            infeasible; such trial steps are rejected.
        x0: Starting point (k,).

    Returns:
        LMResult whose ``sse_history`` holds the SSE after every accepted step
        (first entry is the starting SSE), so it is non-increasing.

    The damping term is Marquardt's ``lambda * diag(J^T J)``. Iteration stops
    when an accepted step improves SSE by less than ``sse_rel_tol`` relative,
    when a trial step is shorter than ``step_tol``, or after
    ``max_iterations`` trial steps.
    """
    x = np.array(x0, dtype=float)
    with np.errstate(all="ignore"):
        r, jac = fun(x)
        sse = float(r @ r)
    if not np.isfinite(sse) or not np.all(np.isfinite(jac)):
        return LMResult(x, float("inf"), MAX_ITERATIONS, 0, [])
    history = [sse]
    lam = initial_damping
    status = MAX_ITERATIONS
    it = 0
    while it < max_iterations:
        if sse == 0.0:
            status = CONVERGED
            break
        it += 1
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.diag(jtj).copy()
        floor = 1e-12 * max(diag.max(), 1e-300)
        diag[diag < floor] = floor
        try:
            step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
        except np.linalg.LinAlgError:
            lam *= damping_up
            continue
        step_norm = float(np.linalg.norm(step))
        if not np.isfinite(step_norm):
            lam *= damping_up
            continue
        x_new = x + step
        with np.errstate(all="ignore"):
            r_new, jac_new = fun(x_new)
            sse_new = float(r_new @ r_new)
        if np.isfinite(sse_new) and sse_new <= sse and np.all(np.isfinite(jac_new)):
            rel = (sse - sse_new) / sse
            x, r, jac, sse = x_new, r_new, jac_new, sse_new
            history.append(sse)
            lam = max(lam * damping_down, 1e-20)
            if rel < sse_rel_tol or step_norm < step_tol:
                status = CONVERGED
                break
        else:
            if step_norm < step_tol:
                status = CONVERGED
                break
            lam *= damping_up
            if lam > _MAX_DAMPING:
                status = CONVERGED
                break
    return LMResult(x, sse, status, it, history)
