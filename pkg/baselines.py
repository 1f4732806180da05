"""
Lasso and adaptive Lasso comparators.

Both minimize (1/2n)‖y − Xβ‖₂² + Σ_j λ_j|β_j| by accelerated proximal
gradient with objective restart, step 1/L̂, where L̂ estimates the top
eigenvalue of XᵀX/n by power iteration.
"""

from dataclasses import dataclass

import numpy as np

from rct_base import (
    ADAPTIVE_WEIGHT_EPS, BASELINE_MAX_ITER, BASELINE_TOL, MOVE_TOL, POWER_ITERATIONS, TRACE_EVERY,
    DivergenceError, ShapeError, debug_print, require_nonnegative, require_positive,
)
from optimizer import FitResult

# Power iteration approaches the top eigenvalue from below.
LIPSCHITZ_MARGIN = 1.01


@dataclass(frozen=True)
class ConvergenceControls:
    max_iter: int = BASELINE_MAX_ITER
    tol: float = BASELINE_TOL
    init: np.ndarray = None

    def __post_init__(self):
        require_positive('max_iter', self.max_iter)
        require_positive('tol', self.tol)


def lipschitz_estimate(design, iterations=POWER_ITERATIONS):
    """Top eigenvalue of XᵀX/n by power iteration from a fixed start."""
    n, p = design.shape
    v = np.ones(p) / np.sqrt(p)
    value = 0.0
    for _ in range(iterations):
        w = design.T @ (design @ v) / n
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        value = float(v @ w)
        v = w / norm
    return value


def soft_threshold(v, thresholds):
    """Coordinate-wise sign(v)(|v| − t)_+ with +0.0 for thresholded entries."""
    magnitude = np.abs(v) - thresholds
    return np.where(magnitude > 0, np.sign(v) * magnitude, 0.0)


def _l1_stationarity(grad, beta, thresholds):
    on = beta != 0
    residual = np.where(on, grad + thresholds * np.sign(beta), np.maximum(0.0, np.abs(grad) - thresholds))
    return float(np.linalg.norm(residual))


def _weighted_lasso(data, lam, thresholds, controls, method):
    design, response, n = data.design, data.response, data.n
    lipschitz = lipschitz_estimate(design) * LIPSCHITZ_MARGIN
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0

    def objective(beta, residual):
        return 0.5 * float(residual @ residual) / n + float(np.sum(thresholds * np.abs(beta)))

    if controls.init is None:
        beta = np.zeros(data.p)
    else:
        beta = np.asarray(controls.init, dtype=float)
        if beta.shape != (data.p,):
            raise ShapeError(f"init has shape {beta.shape}, expected ({data.p},)")

    debug_print(f"{method} start: n={n} p={data.p} step={step:.4g} max_threshold={np.max(thresholds):.4g}")

    residual = design @ beta - response
    obj = objective(beta, residual)
    z = beta.copy()
    t = 1.0
    objective_trace = []
    stationarity_trace = []
    stop_reason = 'max_iter'
    iteration = 0

    for iteration in range(1, controls.max_iter + 1):
        grad_z = design.T @ (design @ z - response) / n
        candidate = soft_threshold(z - step * grad_z, step * thresholds)
        cand_residual = design @ candidate - response
        cand_obj = objective(candidate, cand_residual)

        if cand_obj > obj:
            # restart momentum with a plain proximal step from beta
            t = 1.0
            grad_beta = design.T @ residual / n
            candidate = soft_threshold(beta - step * grad_beta, step * thresholds)
            cand_residual = design @ candidate - response
            cand_obj = objective(candidate, cand_residual)
        if not np.isfinite(cand_obj):
            raise DivergenceError(iteration)

        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = candidate + ((t - 1.0) / t_next) * (candidate - beta)
        move = float(np.linalg.norm(candidate - beta))
        beta, residual, obj, t = candidate, cand_residual, cand_obj, t_next

        stationarity = _l1_stationarity(design.T @ residual / n, beta, thresholds)
        objective_trace.append(obj)
        stationarity_trace.append(stationarity)
        if iteration % TRACE_EVERY == 0:
            debug_print(f"{method} iteration {iteration}: objective={obj:.10g} stationarity={stationarity:.3e}")

        if stationarity <= controls.tol:
            stop_reason = 'stationary'
            break
        if move <= MOVE_TOL:
            stop_reason = 'stalled'
            break

    debug_print(f"{method} done: {iteration} iterations, {stop_reason}")
    return FitResult(
        beta=beta,
        beta_thresholded=beta.copy(),
        iterations=iteration,
        converged=stop_reason != 'max_iter',
        objective_trace=np.array(objective_trace),
        stationarity_trace=np.array(stationarity_trace),
        active_groups=[int(j) for j in np.flatnonzero(beta)],
        stop_reason=stop_reason,
        lam=float(lam),
        step=step,
        method=method,
    )


def fit_lasso(data, lam, controls=None):
    """ℓ1-penalized least squares at level λ."""
    require_nonnegative('lambda', lam)
    controls = controls or ConvergenceControls()
    return _weighted_lasso(data, lam, np.full(data.p, float(lam)), controls, 'lasso')


def adaptive_weights(pilot_beta, eps=ADAPTIVE_WEIGHT_EPS):
    return 1.0 / (np.abs(np.asarray(pilot_beta, dtype=float)) + eps)


def fit_adaptive_lasso(data, lam, pilot, controls=None):
    """
    Weighted ℓ1 fit with w_j = 1/(|β̂_pilot,j| + 1e−6).

    Pilot zeros get weight 1e6, which in practice excludes them.
    """
    require_nonnegative('lambda', lam)
    if pilot.beta.shape != (data.p,):
        raise ShapeError(f"pilot has {pilot.beta.shape[0]} coefficients, design has {data.p} columns")
    controls = controls or ConvergenceControls()
    return _weighted_lasso(data, lam, float(lam) * adaptive_weights(pilot.beta), controls, 'adalasso')
