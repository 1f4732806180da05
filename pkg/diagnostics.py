"""
Empirical checks run by `cli.py check`.

Every check builds its own small instances from a seed and returns a
CheckResult; run_all_checks() runs the whole suite. The gradient
implementation is injectable so a deliberately broken derivative can be
shown to fail.
"""

from dataclasses import dataclass

import numpy as np

from loss import HuberParams, default_huber
from optimizer import fit_rct, tau_continuation
from penalty import GroupPartition, group_soft_threshold, project_l2_ball
from risk import Dataset, SolverConfig, empirical_gradient, finite_difference_gradient
from thresholding import ThresholdParams

GRADIENT_TOL = 1e-6
PROX_GAP_TOL = 1e-5
DECAY_SLOPE_MAX = -0.4
DECAY_FINAL_MAX = 1e-4
STATIONARITY_FLOOR = 1e-16


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ''

    def to_dict(self):
        return {'name': self.name, 'passed': bool(self.passed), 'measured': float(self.measured),
                'threshold': float(self.threshold), 'detail': self.detail}


def _mixture_noise(rng, n, sigma1=0.5, sigma2=3.0):
    return np.where(rng.random(n) < 0.1, sigma2 * rng.standard_normal(n), sigma1 * rng.standard_normal(n))


def desk_instance(rng, n=100, p=50, support=5, magnitude=(1.0, 2.0), noise_scale=0.5):
    """Standard normal design, a few strong coefficients with random signs, contaminated noise."""
    design = rng.standard_normal((n, p))
    truth = np.zeros(p)
    truth[:support] = rng.uniform(*magnitude, size=support) * rng.choice([-1.0, 1.0], size=support)
    response = design @ truth + _mixture_noise(rng, n, noise_scale, 6 * noise_scale)
    return Dataset(design=design, response=response, truth=truth)


# ==================== GRADIENT ====================

def _away_from_kinks(beta, eta, margin):
    """Push coordinates with ||β_j| − η| < margin out of the transition band."""
    magnitude = np.abs(beta)
    near = np.abs(magnitude - eta) < margin
    sign = np.where(beta < 0, -1.0, 1.0)
    beta = beta.copy()
    beta[near] = sign[near] * (eta + margin + (magnitude[near] % margin))
    return beta


def check_gradient(seed=0, instances=100, gradient_fn=empirical_gradient):
    """
    Analytic gradient against central differences.

    The error is max_j |Δ_j| / max(1, |∇_j|): relative for large entries,
    absolute below 1. Points are drawn outside the 50τ band around η, where
    central differences resolve G to the tolerance.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_case = ''
    for i in range(instances):
        n = int(rng.integers(5, 31))
        p = int(rng.integers(1, 51))
        tau = float(10 ** rng.uniform(-3, -1))
        eta = float(rng.uniform(0, 1))
        omega = float(rng.uniform(0.5, 5))
        data = Dataset(design=rng.standard_normal((n, p)) / np.sqrt(p), response=3 * rng.standard_normal(n))
        beta = _away_from_kinks(rng.uniform(-2, 2, size=p), eta, 50 * tau)
        thresh = ThresholdParams(tau, eta)
        huber = HuberParams(omega)

        analytic = gradient_fn(data, beta, thresh, huber)
        numeric = finite_difference_gradient(data, beta, thresh, huber)
        error = float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))
        if error > worst:
            worst = error
            worst_case = f"instance {i}: n={n} p={p} tau={tau:.3g} eta={eta:.3g} omega={omega:.3g}"
    return CheckResult('gradient', worst <= GRADIENT_TOL, worst, GRADIENT_TOL, worst_case)


# ==================== PROX AND PROJECTION ====================

def _prox_objective(points, v, t):
    return 0.5 * np.sum((points - v) ** 2, axis=-1) + t * np.linalg.norm(points, axis=-1)


def _grid_minimum(v, t, candidate):
    """
    Grid-search minimum of ½‖x − v‖² + t‖x‖ over the ball ‖x‖ ≤ ‖v‖.

    One dimension uses a 1e−3 grid over the whole interval. Higher
    dimensions use a 2e−2 grid over the box plus a 1e−3 grid within ±0.02
    of the candidate.
    """
    d = v.size
    reach = float(np.linalg.norm(v)) + 1e-3
    if d == 1:
        axes = [np.arange(-reach, reach + 1e-3, 1e-3)]
        grids = [np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, d)]
    else:
        coarse = [np.arange(-reach, reach + 2e-2, 2e-2)] * d
        fine = [np.arange(c - 0.02, c + 0.02 + 1e-3, 1e-3) for c in candidate]
        grids = [np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, d) for axes in (coarse, fine)]
    return min(float(np.min(_prox_objective(grid, v, t))) for grid in grids)


def check_prox(seed=0, blocks=50):
    """The group soft-threshold attains the grid-search minimum of the one-block prox objective."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    worst_case = ''
    for i in range(blocks):
        d = int(rng.integers(1, 4))
        direction = rng.standard_normal(d)
        v = direction / np.linalg.norm(direction) * rng.uniform(0.0, 1.0)
        t = float(rng.uniform(0.0, 1.2))
        prox = group_soft_threshold(v, GroupPartition([range(d)]), t)
        gap = float(_prox_objective(prox, v, t) - _grid_minimum(v, t, prox))
        if gap > worst:
            worst = gap
            worst_case = f"block {i}: d={d} t={t:.3g}"
    return CheckResult('prox', worst <= PROX_GAP_TOL, worst, PROX_GAP_TOL, worst_case)


def check_projection(seed=0, vectors=1000):
    """Projection is feasible and idempotent (bitwise)."""
    rng = np.random.default_rng(seed)
    violations = 0
    worst_excess = 0.0
    for _ in range(vectors):
        p = int(rng.integers(1, 40))
        radius = float(10 ** rng.uniform(-2, 2))
        v = rng.standard_normal(p) * 10 ** rng.uniform(-3, 3)
        once = project_l2_ball(v, radius)
        twice = project_l2_ball(once, radius)
        excess = float(np.linalg.norm(once) - radius)
        worst_excess = max(worst_excess, excess)
        if excess > 0 or not np.array_equal(once, twice):
            violations += 1
    return CheckResult('projection', violations == 0, worst_excess, 0.0, f"{violations} of {vectors} failed")


# ==================== CONVERGENCE ====================

def stationarity_decay_slope(trace, k_min=100, k_max=10000):
    """
    Log-log slope of the running-minimum stationarity over iterations k_min..k_max.

    A trace that stops before k_min converged early and returns −inf.
    """
    trace = np.asarray(trace, dtype=float)
    if trace.size < k_min:
        return float('-inf')
    running = np.maximum(np.minimum.accumulate(trace), STATIONARITY_FLOOR)
    ks = np.arange(1, trace.size + 1)
    window = (ks >= k_min) & (ks <= k_max)
    slope, _ = np.polyfit(np.log(ks[window]), np.log(running[window]), 1)
    return float(slope)


def check_stationarity_decay(seed=0, instances=5, max_iter=10000):
    """Running-minimum stationarity decays at least like k^−0.4 and ends below 1e−4."""
    rng = np.random.default_rng(seed)
    slopes = []
    finals = []
    for _ in range(instances):
        data = desk_instance(rng)
        config = SolverConfig(lam=0.05, step=0.01, radius=50.0, thresh=ThresholdParams(0.01, 0.1),
                              huber=default_huber(data.response), max_iter=max_iter, tol=1e-12)
        fit = fit_rct(data, GroupPartition.singletons(data.p), config)
        slopes.append(stationarity_decay_slope(fit.stationarity_trace, 100, max_iter))
        finals.append(float(np.min(fit.stationarity_trace)))
    worst_slope = max(slopes)
    worst_final = max(finals)
    passed = worst_slope <= DECAY_SLOPE_MAX and worst_final <= DECAY_FINAL_MAX
    return CheckResult('stationarity-decay', passed, worst_slope, DECAY_SLOPE_MAX,
                       f"worst final stationarity {worst_final:.3e}")


def check_continuation(seed=0, taus=(1e-1, 1e-2, 1e-3, 1e-4)):
    """Consecutive solution distances shrink along the τ sequence and the support settles."""
    rng = np.random.default_rng(seed)
    data = desk_instance(rng, n=100, p=20, support=5, magnitude=(1.0, 1.0), noise_scale=0.1)
    groups = GroupPartition.singletons(data.p)
    base = SolverConfig(lam=0.05, step=0.01, radius=50.0, thresh=ThresholdParams(taus[0], 0.5),
                        huber=default_huber(data.response), max_iter=20000, tol=1e-9)
    path = tau_continuation(data, groups, base, taus)
    distances = path.distances
    ratios = [b / a for a, b in zip(distances, distances[1:]) if a > 0]
    decreasing = all(b < a for a, b in zip(distances, distances[1:]))
    stable = groups.active(path[-1].beta) == groups.active(path[-2].beta)
    worst_ratio = max(ratios) if ratios else 0.0
    detail = 'distances ' + ', '.join(f"{d:.3e}" for d in distances) + ('' if stable else '; support changed')
    return CheckResult('tau-continuation', decreasing and stable, worst_ratio, 1.0, detail)


def run_all_checks(seed=0, gradient_fn=empirical_gradient):
    return [
        check_gradient(seed, gradient_fn=gradient_fn),
        check_prox(seed),
        check_projection(seed),
        check_stationarity_decay(seed),
        check_continuation(seed),
    ]
