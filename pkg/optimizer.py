"""
Composite gradient descent for the thresholded pseudo-Huber group program

    min_{‖β‖₂ ≤ r}  R̂_n(β) + λ Σ_b ‖β_b‖₂

Each iteration takes a gradient step on the empirical risk, applies the
group soft-threshold prox and projects back onto the ℓ2 ball. Traces of
the penalized objective and of the stationarity measure are recorded at
every iterate.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from loss import default_huber
from penalty import group_soft_threshold, penalty_value, project_l2_ball
from rct_base import (
    BACKTRACK_SLACK, MAX_HALVINGS, MOVE_TOL, TRACE_EVERY,
    DivergenceError, ParameterError, ShapeError, debug_print,
)
from risk import empirical_gradient, empirical_risk, stationarity_norm
from thresholding import apply_G

STOP_REASONS = ('stationary', 'stalled', 'max_iter')


# ==================== RESULT TYPES ====================

@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of one solver run. Traces hold one entry per iteration."""

    beta: np.ndarray
    beta_thresholded: np.ndarray
    iterations: int
    converged: bool
    objective_trace: np.ndarray
    stationarity_trace: np.ndarray
    active_groups: list
    stop_reason: str = 'max_iter'
    lam: float = 0.0
    omega: float = None
    step: float = None
    method: str = 'rct'
    extras: dict = field(default_factory=dict)

    @property
    def final_stationarity(self):
        return float(self.stationarity_trace[-1]) if len(self.stationarity_trace) else float('nan')

    def to_dict(self, include_traces=False):
        payload = {
            'method': self.method,
            'iterations': int(self.iterations),
            'converged': bool(self.converged),
            'stop_reason': self.stop_reason,
            'lambda': float(self.lam),
            'omega': None if self.omega is None else float(self.omega),
            'step': None if self.step is None else float(self.step),
            'final_objective': float(self.objective_trace[-1]) if len(self.objective_trace) else None,
            'final_stationarity': self.final_stationarity,
            'active_groups': [int(b) for b in self.active_groups],
            'beta': [float(v) for v in self.beta],
            'beta_thresholded': [float(v) for v in self.beta_thresholded],
        }
        payload.update(self.extras)
        if include_traces:
            payload['objective_trace'] = [float(v) for v in self.objective_trace]
            payload['stationarity_trace'] = [float(v) for v in self.stationarity_trace]
        return payload


@dataclass(frozen=True)
class ContinuationPath:
    """Fits along a decreasing τ sequence and the distances between consecutive solutions."""

    results: list
    distances: list
    taus: tuple

    def __len__(self):
        return len(self.results)

    def __iter__(self):
        return iter(self.results)

    def __getitem__(self, index):
        return self.results[index]


# ==================== OBJECTIVE ====================

def penalized_objective(data, beta, groups, lam, thresh, huber):
    """R̂_n(β) + λ Σ_b ‖β_b‖₂."""
    return empirical_risk(data, beta, thresh, huber) + penalty_value(beta, groups, lam)


def effective_lambda(config):
    """
    Penalty level the iteration actually minimizes.

    The prox threshold is h·λ in 'step-scaled' mode, so the level is λ.
    In 'lambda-over-h' mode the threshold is λ/h, which corresponds to a
    penalty of λ/h².
    """
    if config.threshold_mode == 'step-scaled':
        return float(config.lam)
    return float(config.lam) / (config.step * config.step)


# ==================== SOLVER ====================

def fit_rct(data, groups, config):
    """
    Run composite gradient descent from config.init (zero by default).

    Stops when the stationarity measure reaches config.tol ('stationary'),
    when an iterate moves by at most 1e−10 ('stalled'), or after
    config.max_iter iterations ('max_iter'). The fit counts as converged
    only when the final stationarity measure is within config.tol.

    Raises:
        ShapeError: groups or init do not match the design.
        DivergenceError: the penalized objective became non-finite.
    """
    if groups.p != data.p:
        raise ShapeError(f"groups cover {groups.p} coordinates, design has {data.p} columns")

    huber = config.huber if config.huber is not None else default_huber(data.response)
    thresh = config.thresh
    lam = effective_lambda(config)
    step = config.step

    if config.init is None:
        beta = np.zeros(data.p)
    else:
        if config.init.shape != (data.p,):
            raise ShapeError(f"init has shape {config.init.shape}, expected ({data.p},)")
        beta = project_l2_ball(config.init, config.radius)

    debug_print(f"fit_rct start: n={data.n} p={data.p} groups={groups.n_groups} lambda={lam:.6g} "
                f"eta={thresh.eta:.6g} tau={thresh.tau:.6g} step={step:.6g} omega={huber.omega:.6g}")

    grad = empirical_gradient(data, beta, thresh, huber)
    objective = penalized_objective(data, beta, groups, lam, thresh, huber)
    if not np.isfinite(objective):
        raise DivergenceError(0)

    objective_trace = []
    stationarity_trace = []
    stop_reason = 'max_iter'
    iteration = 0

    for iteration in range(1, config.max_iter + 1):
        halvings = 0
        while True:
            candidate = group_soft_threshold(beta - step * grad, groups, step * lam)
            candidate = project_l2_ball(candidate, config.radius)
            new_objective = penalized_objective(data, candidate, groups, lam, thresh, huber)
            if not np.isfinite(new_objective):
                if config.backtrack and halvings < MAX_HALVINGS:
                    step *= 0.5
                    halvings += 1
                    continue
                raise DivergenceError(iteration)
            if config.backtrack and new_objective > objective + BACKTRACK_SLACK and halvings < MAX_HALVINGS:
                step *= 0.5
                halvings += 1
                continue
            break
        if halvings:
            debug_print(f"iteration {iteration}: step halved {halvings}x to {step:.3g}")

        move = float(np.linalg.norm(candidate - beta))
        beta = candidate
        objective = new_objective
        grad = empirical_gradient(data, beta, thresh, huber)
        stationarity = stationarity_norm(grad, beta, groups, lam)
        objective_trace.append(objective)
        stationarity_trace.append(stationarity)

        if iteration % TRACE_EVERY == 0:
            debug_print(f"iteration {iteration}: objective={objective:.10g} stationarity={stationarity:.3e}")

        if stationarity <= config.tol:
            stop_reason = 'stationary'
            break
        if move <= MOVE_TOL:
            stop_reason = 'stalled'
            break

    debug_print(f"fit_rct done: {iteration} iterations, {stop_reason}, "
                f"stationarity={stationarity_trace[-1]:.3e}")

    return FitResult(
        beta=beta,
        beta_thresholded=apply_G(beta, thresh),
        iterations=iteration,
        converged=stationarity_trace[-1] <= config.tol,
        objective_trace=np.array(objective_trace),
        stationarity_trace=np.array(stationarity_trace),
        active_groups=groups.active(beta),
        stop_reason=stop_reason,
        lam=lam,
        omega=huber.omega,
        step=step,
        extras={'eta': float(thresh.eta), 'tau': float(thresh.tau)},
    )


def fit_rct_path(data, groups, base, lambdas, warm_start=True):
    """
    Fits along a nonincreasing λ sequence.

    With warm_start each fit starts from the previous solution; otherwise
    every fit starts from base.init.
    """
    lambdas = [float(lam) for lam in lambdas]
    if not lambdas:
        raise ParameterError("lambda path is empty")
    if any(b > a for a, b in zip(lambdas, lambdas[1:])):
        raise ParameterError("lambda path must be nonincreasing")
    if base.huber is None:
        base = replace(base, huber=default_huber(data.response))

    results = []
    config = base
    for lam in lambdas:
        config = replace(config, lam=lam)
        fit = fit_rct(data, groups, config)
        results.append(fit)
        if warm_start:
            config = replace(config, init=fit.beta)
    return results


def tau_continuation(data, groups, base, taus):
    """
    Fits along a strictly decreasing τ sequence with warm starts.

    Returns a ContinuationPath holding every FitResult and the distances
    ‖β̂(τ_{k+1}) − β̂(τ_k)‖₂ between consecutive solutions.
    """
    taus = tuple(float(t) for t in taus)
    if not taus:
        raise ParameterError("tau sequence is empty")
    if any(not t > 0 for t in taus):
        raise ParameterError(f"taus must all be positive, got {taus}")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ParameterError(f"taus must be strictly decreasing, got {taus}")

    results = []
    distances = []
    config = base
    for tau in taus:
        config = config.with_tau(tau)
        fit = fit_rct(data, groups, config)
        if results:
            distances.append(float(np.linalg.norm(fit.beta - results[-1].beta)))
        results.append(fit)
        config = replace(config, init=fit.beta)
    return ContinuationPath(results=results, distances=distances, taus=taus)
