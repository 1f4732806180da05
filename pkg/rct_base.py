"""
Shared configuration and plumbing for the robust coefficient-thresholding (RCT) toolkit.

Every numerical module (thresholding, loss, risk, penalty, optimizer, datagen,
baselines, evaluation) imports its defaults, error types and the debug switch
from here so the command-line layer can map failures to stable exit codes.
"""

import os
from concurrent.futures import ProcessPoolExecutor, as_completed


# ==================== SHARED CONFIGURATION ====================

DEFAULT_STEP = 0.01          # h
DEFAULT_RADIUS = 20.0        # r
DEFAULT_TAU = 0.01           # τ
DEFAULT_ETA = 0.1            # η used by `cli.py fit` when no value is given
DEFAULT_MAX_ITER = 20000
DEFAULT_TOL = 1e-6           # ε, stationarity tolerance
MOVE_TOL = 1e-10             # secondary stopping guard on ‖β^(k+1) − β^(k)‖₂
BACKTRACK_SLACK = 1e-8
MAX_HALVINGS = 30
TRACE_EVERY = 1000

HUBER_TUNING = 1.345
MAD_CONSISTENCY = 0.6745

CV_FOLDS = 5
ETA_QUANTILE = 0.30
ETA_GRID_QUANTILES = (0.1, 0.3, 0.5)
LAMBDA_GRID_POINTS = 30
LAMBDA_GRID_RATIO = 1e-3

ADAPTIVE_WEIGHT_EPS = 1e-6
POWER_ITERATIONS = 100
BASELINE_TOL = 1e-7
BASELINE_MAX_ITER = 50000

CV_MAX_ITER = 2000           # cross-validation fits run with cheaper controls
CV_TOL = 1e-5

CSV_FLOAT_FORMAT = '%.17g'

DEBUG = os.environ.get('RCT_DEBUG', '').lower() in ('1', 'true', 'yes')


def default_workers():
    """Worker count: RCT_WORKERS if set, otherwise the available parallelism."""
    raw = os.environ.get('RCT_WORKERS', '')
    if raw.strip():
        try:
            return max(1, int(raw))
        except ValueError:
            raise ParameterError(f"RCT_WORKERS must be an integer, got {raw!r}")
    return os.cpu_count() or 1


def debug_print(message):
    """Print debug message if DEBUG is enabled."""
    if DEBUG:
        print(f"[DEBUG] {message}")


# ==================== ERRORS ====================

class RCTError(Exception):
    """Root of every error raised by this package."""


class ParameterError(RCTError, ValueError):
    """Invalid hyperparameter, model id, grid or fold setting."""


class ShapeError(RCTError, ValueError):
    """Array dimensions do not agree."""


class DivergenceError(RCTError, ArithmeticError):
    """The penalized objective became non-finite."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"objective is not finite at iteration {iteration}")


class DecompositionError(RCTError):
    """A covariance matrix stayed non positive definite at the largest jitter."""


class FormatError(RCTError, ValueError):
    """A dataset or groups file could not be parsed."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


# ==================== VALIDATION HELPERS ====================

def require_positive(name, value):
    if not value > 0:
        raise ParameterError(f"{name} must be positive, got {value}")
    return value


def require_nonnegative(name, value):
    if not value >= 0:
        raise ParameterError(f"{name} must be nonnegative, got {value}")
    return value


# ==================== WORKER POOL ====================

def map_tasks(fn, tasks, workers=1, on_result=None):
    """
    Apply fn to every task, optionally in a process pool.

    Results are returned in task order regardless of completion order, so
    any reduction over them is deterministic. on_result(index, result) is
    called in completion order. fn and the tasks must be picklable when
    workers > 1.
    """
    tasks = list(tasks)
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(tasks) <= 1:
        results = []
        for i, task in enumerate(tasks):
            results.append(fn(task))
            if on_result is not None:
                on_result(i, results[-1])
        return results

    results = [None] * len(tasks)
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as executor:
        futures = {executor.submit(fn, task): i for i, task in enumerate(tasks)}
        for future in as_completed(futures):
            i = futures[future]
            results[i] = future.result()
            if on_result is not None:
                on_result(i, results[i])
    return results
