"""
Empirical risk R̂_n(β) = (1/n) Σ_i L(y_i − ⟨x_i, G(β)⟩), its exact gradient,
the ε-stationarity measure and finite-difference checks.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from loss import HuberParams, pseudo_huber, pseudo_huber_deriv
from rct_base import (
    DEFAULT_MAX_ITER, DEFAULT_RADIUS, DEFAULT_STEP, DEFAULT_TAU, DEFAULT_TOL,
    ParameterError, ShapeError, require_nonnegative, require_positive,
)
from thresholding import ThresholdParams, apply_G, dG_diag

THRESHOLD_MODES = ('step-scaled', 'lambda-over-h')


# ==================== DATA TYPES ====================

@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix X (n×p), response y, optional truth β*, optional groups, generation record."""

    design: np.ndarray
    response: np.ndarray
    truth: np.ndarray = None
    groups: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        response = np.asarray(self.response, dtype=float).ravel()
        if design.ndim != 2:
            raise ShapeError(f"design must be 2-D, got shape {design.shape}")
        if design.shape[0] != response.shape[0]:
            raise ShapeError(f"design has {design.shape[0]} rows but response has length {response.shape[0]}")
        object.__setattr__(self, 'design', design)
        object.__setattr__(self, 'response', response)
        if self.truth is not None:
            truth = np.asarray(self.truth, dtype=float).ravel()
            if truth.shape[0] != design.shape[1]:
                raise ShapeError(f"truth has length {truth.shape[0]}, design has {design.shape[1]} columns")
            object.__setattr__(self, 'truth', truth)
        if self.groups is not None and self.groups.p != design.shape[1]:
            raise ShapeError(f"groups cover {self.groups.p} coordinates, design has {design.shape[1]} columns")

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.design.shape[1]

    def take(self, rows):
        """Row subset sharing truth, groups and metadata."""
        rows = np.asarray(rows, dtype=np.intp)
        return replace(self, design=self.design[rows], response=self.response[rows])

    def standardized(self):
        """Centered unit-variance columns and a centered response; constant columns are only centered."""
        centered = self.design - self.design.mean(axis=0)
        scale = centered.std(axis=0)
        scale[scale == 0] = 1.0
        meta = dict(self.meta, standardized=True)
        return replace(self, design=centered / scale, response=self.response - self.response.mean(), meta=meta)


@dataclass(frozen=True)
class SolverConfig:
    """
    Hyperparameters of the composite gradient descent.

    huber=None means ω is derived from the response at fit time
    (1.345 × MAD scale). threshold_mode picks the prox threshold: h·λ
    ('step-scaled', default) or λ/h ('lambda-over-h').
    """

    lam: float
    step: float = DEFAULT_STEP
    radius: float = DEFAULT_RADIUS
    thresh: ThresholdParams = field(default_factory=lambda: ThresholdParams(DEFAULT_TAU, 0.0))
    huber: HuberParams = None
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    init: np.ndarray = None
    threshold_mode: str = 'step-scaled'
    backtrack: bool = False

    def __post_init__(self):
        require_nonnegative('lambda', self.lam)
        require_positive('step', self.step)
        require_positive('radius', self.radius)
        require_positive('tol', self.tol)
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ParameterError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ParameterError(f"threshold_mode must be one of {THRESHOLD_MODES}, got {self.threshold_mode!r}")
        if self.init is not None:
            object.__setattr__(self, 'init', np.asarray(self.init, dtype=float).ravel())

    def with_eta(self, eta):
        return replace(self, thresh=ThresholdParams(self.thresh.tau, eta))

    def with_tau(self, tau):
        return replace(self, thresh=ThresholdParams(tau, self.thresh.eta))


def _check_beta(data, beta):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.p,):
        raise ShapeError(f"beta has shape {beta.shape}, expected ({data.p},)")
    return beta


# ==================== RISK AND GRADIENT ====================

def empirical_risk(data, beta, thresh, huber):
    """(1/n) Σ_i L(y_i − ⟨x_i, G(β)⟩)."""
    beta = _check_beta(data, beta)
    residual = data.response - data.design @ apply_G(beta, thresh)
    return float(np.mean(pseudo_huber(residual, huber)))


def empirical_gradient(data, beta, thresh, huber):
    """
    ∇R̂_n(β) = (1/n) Σ_i L'(⟨x_i, G(β)⟩ − y_i) · (x_i ∘ D_G(β)).

    Carries the same 1/n as empirical_risk, so it is the exact derivative.
    """
    beta = _check_beta(data, beta)
    psi = pseudo_huber_deriv(data.design @ apply_G(beta, thresh) - data.response, huber)
    return (data.design.T @ psi) / data.n * dG_diag(beta, thresh)


def stationarity_norm(grad, beta, groups, lam):
    """
    Norm of the minimum-norm element of ∇R̂_n(β) + λ ∂Σ_b‖β_b‖₂.

    Nonzero blocks contribute ‖grad_b + λ β_b/‖β_b‖₂‖₂²; zero blocks
    contribute max(0, ‖grad_b‖₂ − λ)², the distance to the λ-ball.
    """
    grad = np.asarray(grad, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if grad.shape != beta.shape:
        raise ShapeError(f"grad has shape {grad.shape}, beta has {beta.shape}")
    beta_norms = groups.block_norms(beta)
    nonzero = beta_norms > 0
    coord_norm = beta_norms[groups.labels]
    on = nonzero[groups.labels]

    shifted = grad.copy()
    shifted[on] += lam * beta[on] / coord_norm[on]
    shifted_sq = np.bincount(groups.labels, weights=shifted * shifted, minlength=groups.n_groups)

    grad_norms = groups.block_norms(grad)
    total = np.sum(shifted_sq[nonzero]) + np.sum(np.maximum(0.0, grad_norms[~nonzero] - lam) ** 2)
    return float(np.sqrt(total))


# ==================== FINITE DIFFERENCES ====================

def finite_difference_gradient(data, beta, thresh, huber, step=1e-6):
    """Central differences of empirical_risk, one coordinate at a time."""
    beta = _check_beta(data, beta)
    grad = np.empty(data.p)
    for j in range(data.p):
        forward = beta.copy()
        backward = beta.copy()
        forward[j] += step
        backward[j] -= step
        grad[j] = (empirical_risk(data, forward, thresh, huber)
                   - empirical_risk(data, backward, thresh, huber)) / (2.0 * step)
    return grad


def directional_curvature(data, beta, v, eps, thresh, huber):
    """Forward-difference estimate of vᵀ∇²R̂_n(β)v along a unit direction v."""
    beta = _check_beta(data, beta)
    v = _check_beta(data, v)
    require_positive('eps', eps)
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise ParameterError(f"direction must have unit norm, got {np.linalg.norm(v)}")
    delta = empirical_gradient(data, beta + eps * v, thresh, huber) - empirical_gradient(data, beta, thresh, huber)
    return float(v @ delta / eps)
