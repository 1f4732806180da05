"""
Selection and estimation metrics, cross-validated tuning and the replication
benchmark that rebuilds the simulation tables.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from baselines import ConvergenceControls, fit_adaptive_lasso, fit_lasso
from datagen import parse_model_case, sample_dataset
from loss import default_huber
from optimizer import fit_rct, fit_rct_path
from penalty import GroupPartition
from rct_base import (
    CV_FOLDS, CV_MAX_ITER, CV_TOL, CSV_FLOAT_FORMAT, ETA_GRID_QUANTILES, ETA_QUANTILE,
    LAMBDA_GRID_POINTS, LAMBDA_GRID_RATIO, DEFAULT_TAU,
    ParameterError, ShapeError, debug_print, map_tasks, require_positive,
)
from risk import SolverConfig, empirical_gradient
from thresholding import ThresholdParams

METHODS = ('rct', 'lasso', 'adalasso')
METHOD_LABELS = {'rct': 'RCT', 'lasso': 'Lasso', 'adalasso': 'AdaLasso'}
TUNING_RULES = ('cv', 'lasso-quantile')

# Reference mean values, quoted for comparison and never recomputed.
# label -> method -> (FPR, FNR, l2) or (FPR, FNR, region FPR, region FNR, l2)
_REFERENCE_TABLE = {
    # AR(1) designs
    '1a': {'Lasso': (0.021, 0.199, 3.198), 'AdaLasso': (0.020, 0.212, 3.787), 'SCAD': (0.007, 0.422, 4.148),
           'MCP': (0.003, 0.625, 4.709), 'RCT': (0.010, 0.177, 2.860)},
    '2a': {'Lasso': (0.017, 0.165, 3.032), 'AdaLasso': (0.016, 0.180, 3.716), 'SCAD': (0.008, 0.474, 4.750),
           'MCP': (0.004, 0.654, 5.430), 'RCT': (0.004, 0.071, 2.041)},
    '3a': {'Lasso': (0.014, 0.153, 3.035), 'AdaLasso': (0.014, 0.156, 3.739), 'SCAD': (0.010, 0.575, 5.979),
           'MCP': (0.003, 0.694, 6.201), 'RCT': (0.002, 0.018, 1.466)},
    '1b': {'Lasso': (0.019, 0.243, 3.446), 'AdaLasso': (0.018, 0.256, 4.134), 'SCAD': (0.008, 0.443, 4.233),
           'MCP': (0.003, 0.636, 4.771), 'RCT': (0.018, 0.242, 3.879)},
    '2b': {'Lasso': (0.017, 0.209, 3.319), 'AdaLasso': (0.016, 0.330, 4.027), 'SCAD': (0.008, 0.477, 4.772),
           'MCP': (0.003, 0.674, 5.573), 'RCT': (0.010, 0.154, 3.331)},
    '3b': {'Lasso': (0.014, 0.187, 3.273), 'AdaLasso': (0.013, 0.199, 4.062), 'SCAD': (0.009, 0.566, 5.726),
           'MCP': (0.003, 0.708, 6.386), 'RCT': (0.007, 0.084, 2.939)},
    '1c': {'Lasso': (0.018, 0.338, 3.706), 'AdaLasso': (0.019, 0.195, 4.148), 'SCAD': (0.008, 0.498, 4.390),
           'MCP': (0.003, 0.678, 4.968), 'RCT': (0.025, 0.294, 4.305)},
    '2c': {'Lasso': (0.017, 0.244, 3.589), 'AdaLasso': (0.016, 0.258, 4.469), 'SCAD': (0.007, 0.481, 4.722),
           'MCP': (0.003, 0.697, 5.624), 'RCT': (0.019, 0.195, 4.148)},
    '3c': {'Lasso': (0.014, 0.242, 3.611), 'AdaLasso': (0.012, 0.243, 4.459), 'SCAD': (0.006, 0.549, 5.599),
           'MCP': (0.003, 0.732, 6.506), 'RCT': (0.011, 0.164, 3.886)},
    # compound-symmetry designs
    '4a': {'Lasso': (0.040, 0.337, 4.075), 'AdaLasso': (0.033, 0.369, 4.035), 'SCAD': (0.021, 0.736, 5.849),
           'MCP': (0.008, 0.868, 6.763), 'RCT': (0.061, 0.215, 3.982)},
    '5a': {'Lasso': (0.041, 0.387, 4.183), 'AdaLasso': (0.033, 0.421, 3.726), 'SCAD': (0.021, 0.736, 5.849),
           'MCP': (0.008, 0.896, 7.129), 'RCT': (0.062, 0.244, 4.023)},
    '6a': {'Lasso': (0.041, 0.374, 4.144), 'AdaLasso': (0.032, 0.443, 4.512), 'SCAD': (0.020, 0.745, 5.711),
           'MCP': (0.007, 0.921, 7.348), 'RCT': (0.066, 0.253, 4.093)},
    '4b': {'Lasso': (0.040, 0.351, 4.092), 'AdaLasso': (0.033, 0.377, 4.083), 'SCAD': (0.022, 0.719, 5.563),
           'MCP': (0.008, 0.868, 6.738), 'RCT': (0.060, 0.226, 4.019)},
    '5b': {'Lasso': (0.041, 0.378, 4.173), 'AdaLasso': (0.033, 0.411, 4.283), 'SCAD': (0.021, 0.722, 5.668),
           'MCP': (0.007, 0.900, 7.142), 'RCT': (0.063, 0.260, 4.067)},
    '6b': {'Lasso': (0.041, 0.364, 4.124), 'AdaLasso': (0.033, 0.459, 4.553), 'SCAD': (0.020, 0.744, 5.802),
           'MCP': (0.008, 0.900, 7.146), 'RCT': (0.066, 0.275, 4.138)},
    '4c': {'Lasso': (0.040, 0.382, 4.173), 'AdaLasso': (0.034, 0.411, 4.264), 'SCAD': (0.023, 0.704, 5.343),
           'MCP': (0.008, 0.885, 6.979), 'RCT': (0.061, 0.267, 4.147)},
    '5c': {'Lasso': (0.041, 0.418, 4.265), 'AdaLasso': (0.033, 0.446, 4.347), 'SCAD': (0.021, 0.726, 5.688),
           'MCP': (0.007, 0.905, 7.217), 'RCT': (0.062, 0.290, 4.228)},
    '6c': {'Lasso': (0.040, 0.408, 4.324), 'AdaLasso': (0.032, 0.478, 4.633), 'SCAD': (0.021, 0.727, 5.612),
           'MCP': (0.007, 0.915, 7.441), 'RCT': (0.064, 0.314, 4.275)},
    # Gaussian-process images
    '7a': {'Lasso': (0.002, 0.814, 7.083), 'AdaLasso': (0.002, 0.820, 12.527), 'MCP': (0.007, 0.918, 7.526),
           'STGP(no-info)': (0.001, 0.435, 2.729), 'RCT': (0.025, 0.018, 2.302)},
    '8a': {'Lasso': (0.001, 0.784, 6.071), 'AdaLasso': (0.001, 0.784, 0.196), 'MCP': (0.007, 0.918, 7.532),
           'STGP(no-info)': (0.002, 0.461, 2.584), 'RCT': (0.027, 0.196, 3.038)},
    '7b': {'Lasso': (0.002, 0.825, 7.328), 'AdaLasso': (0.003, 0.815, 12.995), 'MCP': (0.007, 0.918, 7.525),
           'STGP(no-info)': (0.001, 0.460, 2.904), 'RCT': (0.030, 0.053, 2.520)},
    '8b': {'Lasso': (0.001, 0.805, 6.639), 'AdaLasso': (0.001, 0.807, 10.936), 'MCP': (0.007, 0.918, 7.532),
           'STGP(no-info)': (0.001, 0.485, 2.600), 'RCT': (0.030, 0.172, 2.949)},
    '7c': {'Lasso': (0.002, 0.854, 7.228), 'AdaLasso': (0.001, 0.853, 10.690), 'MCP': (0.007, 0.918, 7.524),
           'STGP(no-info)': (0.001, 0.484, 2.753), 'RCT': (0.034, 0.016, 2.761)},
    '8c': {'Lasso': (0.041, 0.418, 4.265), 'AdaLasso': (0.033, 0.446, 4.347), 'MCP': (0.007, 0.918, 7.535),
           'STGP(no-info)': (0.003, 0.476, 2.561), 'RCT': (0.045, 0.303, 3.284)},
    # Gaussian-process images with 25 regions
    '9a': {'Lasso': (0.019, 0.270, 0.101, 0.0, 25.607), 'GLasso': (0.220, 0.378, 0.232, 0.0, 16.101),
           'SGL': (0.115, 0.010, 0.135, 0.0, 12.507), 'STGP': (0.063, 0.0, 0.109, 0.0, 12.540),
           'RCT': (0.059, 0.0, 0.087, 0.0, 13.114)},
    '10a': {'Lasso': (0.028, 0.411, 0.140, 0.0, 33.091), 'GLasso': (0.215, 0.403, 0.232, 0.0, 16.128),
            'SGL': (0.126, 0.012, 0.126, 0.0, 13.366), 'STGP': (0.061, 0.0, 0.110, 0.0, 12.642),
            'RCT': (0.064, 0.0, 0.111, 0.0, 13.505)},
    '9b': {'Lasso': (0.019, 0.347, 0.166, 0.0, 27.557), 'GLasso': (0.223, 0.372, 0.232, 0.0, 16.084),
           'SGL': (0.130, 0.012, 0.170, 0.0, 12.656), 'STGP': (0.061, 0.0, 0.114, 0.0, 12.520),
           'RCT': (0.066, 0.0, 0.161, 0.0, 13.269)},
    '10b': {'Lasso': (0.028, 0.415, 0.145, 0.0, 32.957), 'GLasso': (0.214, 0.405, 0.232, 0.0, 16.119),
            'SGL': (0.128, 0.020, 0.165, 0.0, 13.353), 'STGP': (0.062, 0.0, 0.113, 0.0, 12.536),
            'RCT': (0.065, 0.0, 0.120, 0.0, 13.670)},
    '9c': {'Lasso': (0.019, 0.394, 0.180, 0.0, 27.949), 'GLasso': (0.223, 0.354, 0.232, 0.0, 16.064),
           'SGL': (0.128, 0.013, 0.165, 0.0, 12.869), 'STGP': (0.059, 0.0, 0.098, 0.0, 12.565),
           'RCT': (0.067, 0.0, 0.157, 0.0, 13.581)},
    '10c': {'Lasso': (0.027, 0.427, 0.151, 0.0, 32.553), 'GLasso': (0.211, 0.407, 0.232, 0.0, 16.114),
            'SGL': (0.135, 0.016, 0.213, 0.0, 13.566), 'STGP': (0.126, 0.012, 0.126, 0.0, 13.366),
            'RCT': (0.059, 0.0, 0.088, 0.0, 12.655)},
}
REFERENCE_RESULTS = {
    (label, method): values for label, rows in _REFERENCE_TABLE.items() for method, values in rows.items()
}


# ==================== METRICS ====================

@dataclass(frozen=True)
class MetricsReport:
    fpr: float
    fnr: float
    l2_loss: float
    l2_loss_thresholded: float
    region_fpr: float = None
    region_fnr: float = None

    def to_dict(self):
        return {
            'fpr': self.fpr,
            'fnr': self.fnr,
            'region_fpr': self.region_fpr,
            'region_fnr': self.region_fnr,
            'l2_loss': self.l2_loss,
            'l2_loss_thresholded': self.l2_loss_thresholded,
        }


def _rate(numerator, denominator):
    return float(numerator) / float(denominator) if denominator else 0.0


def _paired(estimate, truth):
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ShapeError(f"estimate has shape {estimate.shape}, truth has {truth.shape}")
    return estimate, truth


def _fpr_fnr(selected, active):
    fp = np.sum(selected & ~active)
    tn = np.sum(~selected & ~active)
    fn = np.sum(~selected & active)
    tp = np.sum(selected & active)
    return _rate(fp, fp + tn), _rate(fn, fn + tp)


def selection_metrics(estimate, truth, zero_tol=0.0):
    """FPR = FP/(FP+TN), FNR = FN/(FN+TP) and ‖estimate − truth‖₂."""
    estimate, truth = _paired(estimate, truth)
    fpr, fnr = _fpr_fnr(np.abs(estimate) > zero_tol, truth != 0)
    l2 = float(np.linalg.norm(estimate - truth))
    return MetricsReport(fpr=fpr, fnr=fnr, l2_loss=l2, l2_loss_thresholded=l2)


def region_metrics(estimate, truth, groups, zero_tol=0.0):
    """Region-level (FPR, FNR): a region is selected, or truly active, when any member is."""
    estimate, truth = _paired(estimate, truth)
    if estimate.shape != (groups.p,):
        raise ShapeError(f"vectors have length {estimate.shape[0]}, groups cover {groups.p}")
    selected = np.bincount(groups.labels, weights=(np.abs(estimate) > zero_tol), minlength=groups.n_groups) > 0
    active = np.bincount(groups.labels, weights=(truth != 0), minlength=groups.n_groups) > 0
    return _fpr_fnr(selected, active)


def evaluate_fit(fit, truth, groups=None, zero_tol=0.0):
    """Full report for a fit: selection on β̂, ℓ2 loss of both β̂ and G(β̂), region rates when groups exist."""
    report = selection_metrics(fit.beta, truth, zero_tol)
    thresholded = float(np.linalg.norm(np.asarray(fit.beta_thresholded) - np.asarray(truth, dtype=float)))
    region_fpr = region_fnr = None
    if groups is not None:
        region_fpr, region_fnr = region_metrics(fit.beta, truth, groups, zero_tol)
    return replace(report, l2_loss_thresholded=thresholded, region_fpr=region_fpr, region_fnr=region_fnr)


# ==================== GRIDS ====================

def lambda_max(data, groups, huber=None, tau=DEFAULT_TAU):
    """max_b ‖∇_b R̂_n(0)‖₂ at η = 0: the smallest λ that keeps the zero vector stationary."""
    huber = huber or default_huber(data.response)
    grad = empirical_gradient(data, np.zeros(data.p), ThresholdParams(tau, 0.0), huber)
    return float(np.max(groups.block_norms(grad)))


def lasso_lambda_max(data):
    return float(np.max(np.abs(data.design.T @ data.response)) / data.n)


def _log_grid(top, points, ratio):
    if not top > 0:
        raise ParameterError(f"lambda_max must be positive to build a grid, got {top}")
    require_positive('grid points', points)
    return [float(v) for v in np.geomspace(top, top * ratio, points)]


def default_lambda_grid(data, groups, huber=None, tau=DEFAULT_TAU, points=LAMBDA_GRID_POINTS,
                        ratio=LAMBDA_GRID_RATIO):
    """Decreasing log-spaced λ values over [ratio, 1]·λ_max."""
    return _log_grid(lambda_max(data, groups, huber, tau), points, ratio)


def lasso_lambda_grid(data, points=LAMBDA_GRID_POINTS, ratio=LAMBDA_GRID_RATIO):
    return _log_grid(lasso_lambda_max(data), points, ratio)


def eta_from_lasso(pilot, quantile=ETA_QUANTILE):
    """Linear-interpolation quantile of the pilot's nonzero magnitudes; 0 for an all-zero pilot."""
    if not 0 < quantile < 1:
        raise ParameterError(f"quantile must lie in (0, 1), got {quantile}")
    magnitudes = np.abs(pilot.beta[pilot.beta != 0])
    if magnitudes.size == 0:
        return 0.0
    return float(np.quantile(magnitudes, quantile))


def default_eta_grid(pilot, quantiles=ETA_GRID_QUANTILES):
    """{0} ∪ the pilot quantiles, ascending, duplicates removed."""
    values = [0.0] + [eta_from_lasso(pilot, q) for q in quantiles]
    return sorted(set(values))


# ==================== CROSS-VALIDATION ====================

@dataclass(frozen=True, eq=False)
class CVResult:
    grid: list
    fold_errors: np.ndarray
    best: tuple
    rule: str = 'cv'
    per_fold: np.ndarray = None
    extras: dict = field(default_factory=dict)

    @property
    def best_lambda(self):
        return self.best[0]

    @property
    def best_eta(self):
        return self.best[1]

    def to_dict(self):
        return {
            'rule': self.rule,
            'best': {'lambda': self.best[0], 'eta': self.best[1]},
            'grid': [{'lambda': lam, 'eta': eta, 'error': float(err)}
                     for (lam, eta), err in zip(self.grid, self.fold_errors)],
            **self.extras,
        }


def fold_assignment(n, folds, seed=0):
    """
    Fold label of every observation: i ↦ i mod folds after a seeded shuffle.

    Raises:
        ParameterError: fewer than 2 folds, more folds than observations, or a
            fold with fewer than 2 observations (leave-one-out excepted).
    """
    if int(folds) != folds or folds < 2:
        raise ParameterError(f"folds must be an integer of at least 2, got {folds}")
    if folds > n:
        raise ParameterError(f"cannot split {n} observations into {folds} folds")
    if folds != n and n // folds < 2:
        raise ParameterError(f"{folds} folds over {n} observations leaves a fold with fewer than 2 observations")
    order = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=np.intp)
    labels[order] = np.arange(n) % folds
    return labels


def _select_best(grid, errors):
    """argmin of errors; ties go to larger λ, then larger η, then first occurrence."""
    best = min(range(len(grid)), key=lambda i: (errors[i], -grid[i][0], -grid[i][1], i))
    return grid[best]


def _heldout_error(test, beta_thresholded):
    return float(np.mean(np.abs(test.response - test.design @ beta_thresholded)))


def _fold_pilot(train, folds, seed):
    """CV-tuned Lasso fitted on one fold's training rows only."""
    inner = max(2, min(folds, CV_FOLDS, train.n // 2))
    controls = ConvergenceControls(max_iter=CV_MAX_ITER, tol=CV_TOL)
    cv = cross_validate_lasso(train, lasso_lambda_grid(train), inner, controls, seed)
    return fit_lasso(train, cv.best_lambda)


def _fold_pilot_task(task):
    train, folds, seed = task
    return _fold_pilot(train, folds, seed).beta


def _fold_fits(train, groups, base, eta, lambdas, warm_start, init):
    config = base.with_eta(eta)
    if init is not None:
        config = replace(config, init=init)
    if config.huber is None:
        config = replace(config, huber=default_huber(train.response))
    return fit_rct_path(train, groups, config, lambdas, warm_start)


def _rct_fold_task(task):
    train, test, groups, base, eta, lambdas, warm_start, init = task
    path = _fold_fits(train, groups, base, eta, lambdas, warm_start, init)
    return [_heldout_error(test, fit.beta_thresholded) for fit in path]


def _lasso_fold_task(task):
    train, test, lambdas, controls, adaptive, folds, seed = task
    pilot = _fold_pilot(train, folds, seed) if adaptive else None
    errors = []
    for lam in lambdas:
        if pilot is None:
            fit = fit_lasso(train, lam, controls)
        else:
            fit = fit_adaptive_lasso(train, lam, pilot, controls)
        errors.append(_heldout_error(test, fit.beta_thresholded))
        controls = replace(controls, init=fit.beta)
    return errors


def _splits(data, folds, seed):
    labels = fold_assignment(data.n, folds, seed)
    return [(data.take(np.flatnonzero(labels != f)), data.take(np.flatnonzero(labels == f))) for f in range(folds)]


def cross_validate(data, groups, lambda_grid, eta_grid, folds=CV_FOLDS, base=None, seed=0, workers=1,
                   warm_start=True, pilot_start=False):
    """
    K-fold ℓ1 prediction-error CV over every (λ, η) pair.

    Each (fold, η) task fits a path over the λ grid in decreasing order,
    warm-started unless warm_start is False, in which case every fit starts
    from base.init. With pilot_start the starting point is instead a
    CV-tuned Lasso fitted on the fold's training rows. When base.huber is
    unset, ω comes from the fold's training responses. Held-out rows never
    reach a fold fit.
    """
    lambda_grid = [float(v) for v in lambda_grid]
    eta_grid = [float(v) for v in eta_grid]
    if not lambda_grid or not eta_grid:
        raise ParameterError("lambda and eta grids must be nonempty")
    base = base or SolverConfig(lam=lambda_grid[0])

    order = sorted(range(len(lambda_grid)), key=lambda i: -lambda_grid[i])
    path = [lambda_grid[i] for i in order]
    splits = _splits(data, folds, seed)
    inits = [None] * folds
    if pilot_start:
        inits = map_tasks(_fold_pilot_task, [(train, folds, seed) for train, _ in splits], workers)
    tasks = [(train, test, groups, base, eta, path, warm_start, init)
             for (train, test), init in zip(splits, inits) for eta in eta_grid]
    debug_print(f"cross_validate: {len(tasks)} path tasks, {len(path)} lambdas each")
    outcomes = map_tasks(_rct_fold_task, tasks, workers)

    grid = [(lam, eta) for eta in eta_grid for lam in lambda_grid]
    per_fold = np.empty((folds, len(grid)))
    for t, errors in enumerate(outcomes):
        fold, e = divmod(t, len(eta_grid))
        for position, i in enumerate(order):
            per_fold[fold, e * len(lambda_grid) + i] = errors[position]
    fold_errors = per_fold.mean(axis=0)
    return CVResult(grid=grid, fold_errors=fold_errors, best=_select_best(grid, fold_errors), per_fold=per_fold)


def fold_path(data, groups, lambda_grid, eta, fold, folds=CV_FOLDS, base=None, seed=0, warm_start=True,
              pilot_start=False):
    """The RCT fits cross_validate makes on one fold's training rows, by decreasing λ."""
    if not 0 <= fold < folds:
        raise ParameterError(f"fold must lie in [0, {folds}), got {fold}")
    path = sorted((float(v) for v in lambda_grid), reverse=True)
    base = base or SolverConfig(lam=path[0])
    train, _ = _splits(data, folds, seed)[fold]
    init = _fold_pilot(train, folds, seed).beta if pilot_start else None
    return _fold_fits(train, groups, base, float(eta), path, warm_start, init)


def cross_validate_lasso(data, lambda_grid, folds=CV_FOLDS, controls=None, seed=0, workers=1, adaptive=False):
    """
    CV of the Lasso, or of the adaptive Lasso when adaptive is set.

    Adaptive weights come from a pilot fitted on each fold's training rows.
    """
    lambda_grid = [float(v) for v in lambda_grid]
    if not lambda_grid:
        raise ParameterError("lambda grid must be nonempty")
    controls = controls or ConvergenceControls()
    order = sorted(range(len(lambda_grid)), key=lambda i: -lambda_grid[i])
    path = [lambda_grid[i] for i in order]
    tasks = [(train, test, path, controls, adaptive, folds, seed) for train, test in _splits(data, folds, seed)]
    outcomes = map_tasks(_lasso_fold_task, tasks, workers)

    grid = [(lam, 0.0) for lam in lambda_grid]
    per_fold = np.empty((folds, len(grid)))
    for fold, errors in enumerate(outcomes):
        for position, i in enumerate(order):
            per_fold[fold, i] = errors[position]
    fold_errors = per_fold.mean(axis=0)
    return CVResult(grid=grid, fold_errors=fold_errors, best=_select_best(grid, fold_errors), per_fold=per_fold)


def fit_lasso_pilot(data, folds=CV_FOLDS, controls=None, seed=0, workers=1):
    """CV-tuned Lasso refit on the full data; returns (fit, cv)."""
    cv = cross_validate_lasso(data, lasso_lambda_grid(data), folds, controls, seed, workers)
    return fit_lasso(data, cv.best_lambda, controls), cv


def tune_rct(data, groups, base, rule='cv', folds=CV_FOLDS, seed=0, workers=1, pilot=None,
             lambda_grid=None, eta_grid=None, warm_start=True, pilot_start=False):
    """
    Pick (λ, η) for fit_rct.

    'cv' cross-validates both over the default grids. 'lasso-quantile'
    fixes η at the 30% quantile of the Lasso pilot's nonzero magnitudes and
    cross-validates λ only. The full data only shape the candidate grids.
    With pilot_start and no ω in base, fold fits see their training rows alone.
    """
    if rule not in TUNING_RULES:
        raise ParameterError(f"rule must be one of {TUNING_RULES}, got {rule!r}")
    if pilot is None and (eta_grid is None or rule == 'lasso-quantile'):
        pilot, _ = fit_lasso_pilot(data, folds, seed=seed, workers=workers)

    if rule == 'lasso-quantile':
        eta_grid = [eta_from_lasso(pilot)]
    elif eta_grid is None:
        eta_grid = default_eta_grid(pilot)
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(data, groups, base.huber, base.thresh.tau)

    cv = cross_validate(data, groups, lambda_grid, eta_grid, folds, base, seed, workers, warm_start, pilot_start)
    return replace(cv, rule=rule)


# ==================== BENCHMARK ====================

@dataclass(frozen=True)
class BenchmarkSettings:
    """Everything a replication task needs; picklable for the worker pool."""

    n: int = None
    p: int = None
    methods: tuple = METHODS
    rule: str = 'cv'
    folds: int = CV_FOLDS
    base: SolverConfig = None
    support_size: int = None


@dataclass(frozen=True, eq=False)
class BenchmarkTable:
    summary: pd.DataFrame
    records: list
    failures: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'config': self.config,
            'failures': self.failures,
            'summary': json_records(self.summary),
            'reference': reference_rows(sorted({r['label'] for r in self.records}, key=_label_key)),
            'records': self.records,
        }

    def to_csv(self, path):
        self.summary.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


def json_records(frame):
    """DataFrame rows as plain dicts with NaN mapped to None."""
    return [{k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in row.items()}
            for row in frame.to_dict(orient='records')]


def _label_key(label):
    return int(label[:-1]), label[-1]


def reference_rows(labels):
    rows = []
    for (label, method), values in REFERENCE_RESULTS.items():
        if label not in labels:
            continue
        row = {'label': label, 'method': method, 'fpr': values[0], 'fnr': values[1], 'l2': values[-1]}
        if len(values) == 5:
            row.update(region_fpr=values[2], region_fnr=values[3])
        rows.append(row)
    return rows


def _record(label, model_id, case, replication, seed, method, fit, report, lam, eta):
    return {
        'label': label, 'model': model_id, 'case': case, 'replication': replication, 'seed': seed,
        'method': method, 'status': 'ok',
        'lambda': float(lam), 'eta': float(eta),
        'iterations': int(fit.iterations), 'converged': bool(fit.converged),
        **report.to_dict(),
    }


def run_replication(task):
    """One (model, case, replication): generate, tune and fit every requested method."""
    model_id, case, replication, seed, settings = task
    label = f"{model_id}{case}"
    data = sample_dataset(model_id, case, settings.n, settings.p, seed, settings.support_size)
    region_groups = data.groups
    groups = region_groups or GroupPartition.singletons(data.p)
    cv_controls = ConvergenceControls(max_iter=CV_MAX_ITER, tol=CV_TOL)

    records = []
    pilot_cv = cross_validate_lasso(data, lasso_lambda_grid(data), settings.folds, cv_controls, seed)
    pilot = fit_lasso(data, pilot_cv.best_lambda)

    if 'lasso' in settings.methods:
        report = evaluate_fit(pilot, data.truth, region_groups)
        records.append(_record(label, model_id, case, replication, seed, 'lasso', pilot, report,
                               pilot_cv.best_lambda, 0.0))

    if 'adalasso' in settings.methods:
        ada_cv = cross_validate_lasso(data, lasso_lambda_grid(data), settings.folds, cv_controls, seed,
                                      adaptive=True)
        ada = fit_adaptive_lasso(data, ada_cv.best_lambda, pilot)
        report = evaluate_fit(ada, data.truth, region_groups)
        records.append(_record(label, model_id, case, replication, seed, 'adalasso', ada, report,
                               ada_cv.best_lambda, 0.0))

    if 'rct' in settings.methods:
        # Started from a Lasso pilot: from zero the η-weight g(0) is small
        # enough that most of the λ grid keeps every coefficient at zero.
        # Fold fits use pilots fitted on their own training rows.
        base = replace(settings.base or SolverConfig(lam=0.0, backtrack=True), init=pilot.beta)
        cv_base = replace(base, init=None, max_iter=min(base.max_iter, CV_MAX_ITER), tol=max(base.tol, CV_TOL))
        cv = tune_rct(data, groups, cv_base, settings.rule, settings.folds, seed, pilot=pilot,
                      warm_start=False, pilot_start=True)
        fit = fit_rct(data, groups, replace(base, lam=cv.best_lambda).with_eta(cv.best_eta))
        report = evaluate_fit(fit, data.truth, region_groups)
        records.append(_record(label, model_id, case, replication, seed, 'rct', fit, report,
                               cv.best_lambda, cv.best_eta))
    return records


def _safe_replication(task):
    model_id, case, replication, seed, _ = task
    try:
        return run_replication(task)
    except Exception as e:
        return [{'label': f"{model_id}{case}", 'model': model_id, 'case': case, 'replication': replication,
                 'seed': seed, 'method': '*', 'status': 'failed', 'error': f"{type(e).__name__}: {e}"}]


SUMMARY_METRICS = ('fpr', 'fnr', 'region_fpr', 'region_fnr', 'l2_loss_thresholded', 'l2_loss')
SUMMARY_NAMES = {'l2_loss_thresholded': 'l2', 'l2_loss': 'l2_raw'}


def summarize_records(records, methods):
    """Mean and sd (ddof=1, 0 for a single replication) per (model, case, method)."""
    ok = pd.DataFrame([r for r in records if r['status'] == 'ok'])
    failed = pd.DataFrame([r for r in records if r['status'] != 'ok'])
    if ok.empty:
        return pd.DataFrame()

    ok = ok.astype({m: float for m in SUMMARY_METRICS})
    grouped = ok.groupby(['label', 'model', 'case', 'method'], sort=False)
    summary = grouped.size().rename('replications').reset_index()
    for metric in SUMMARY_METRICS:
        name = SUMMARY_NAMES.get(metric, metric)
        mean = grouped[metric].mean().reset_index(drop=True)
        sd = grouped[metric].std(ddof=1).reset_index(drop=True)
        summary[f'{name}_mean'] = mean
        summary[f'{name}_sd'] = sd.where(mean.isna(), sd.fillna(0.0))

    fail_counts = failed.groupby('label').size() if not failed.empty else pd.Series(dtype=int)
    summary['failures'] = summary['label'].map(fail_counts).fillna(0).astype(int)

    for column, position in (('reference_fpr', 0), ('reference_fnr', 1), ('reference_l2', -1)):
        summary[column] = [
            REFERENCE_RESULTS.get((label, METHOD_LABELS[method]), (np.nan,) * 3)[position]
            for label, method in zip(summary['label'], summary['method'])
        ]

    method_rank = {m: i for i, m in enumerate(methods)}
    summary['_order'] = [(_label_key(label), method_rank.get(m, len(methods)))
                         for label, m in zip(summary['label'], summary['method'])]
    summary = summary.sort_values('_order', kind='stable').drop(columns='_order').reset_index(drop=True)
    return summary.dropna(axis=1, how='all')


def run_benchmark(models, n=None, p=None, replications=20, methods=METHODS, base_seed=0, base=None,
                  rule='cv', folds=CV_FOLDS, workers=1, support_size=None, config=None):
    """
    Replicate every (model, case) label `replications` times with seeds base_seed + r.

    Failed replications are recorded and counted, never fatal.
    """
    if int(replications) != replications or replications < 1:
        raise ParameterError(f"replications must be a positive integer, got {replications}")
    methods = tuple(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise ParameterError(f"unknown method(s) {unknown}; supported methods are {', '.join(METHODS)}")
    if rule not in TUNING_RULES:
        raise ParameterError(f"rule must be one of {TUNING_RULES}, got {rule!r}")
    pairs = [parse_model_case(m) if isinstance(m, str) else (int(m[0]), m[1]) for m in models]
    if not pairs:
        raise ParameterError("no models requested")

    settings = BenchmarkSettings(n=n, p=p, methods=methods, rule=rule, folds=folds, base=base,
                                 support_size=support_size)
    tasks = [(model_id, case, r, base_seed + r, settings) for model_id, case in pairs for r in range(replications)]

    def report(i, result):
        model_id, case, r = tasks[i][:3]
        status = '[OK]  ' if all(rec['status'] == 'ok' for rec in result) else '[FAIL]'
        print(f"{status} model {model_id}{case} replication {r + 1}/{replications}")

    outcomes = map_tasks(_safe_replication, tasks, workers, on_result=report)
    records = [rec for outcome in outcomes for rec in outcome]
    failures = sum(1 for rec in records if rec['status'] != 'ok')
    if failures:
        print(f"WARNING: {failures} replication(s) failed")
    return BenchmarkTable(summary=summarize_records(records, methods), records=records, failures=failures,
                          config=config or {})
