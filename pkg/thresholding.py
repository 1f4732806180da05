"""
Smooth coefficient thresholding.

g_{τ,η}(u) = h_τ(u−η) + h_τ(−u−η) with h_τ(w) = 1/2 + arctan(w/τ)/π is a smooth
stand-in for the hard indicator I{|u| ≥ η}. The coefficient map
G(β) = β ∘ g(β) shrinks small coefficients inside the loss itself.

All functions accept scalars or numpy arrays and are pure.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from rct_base import ParameterError, require_nonnegative, require_positive


@dataclass(frozen=True)
class ThresholdParams:
    """The (τ, η) pair of the smooth thresholding map."""

    tau: float
    eta: float = 0.0

    def __post_init__(self):
        require_positive('tau', self.tau)
        require_nonnegative('eta', self.eta)


def h_step(w, tau):
    """Smooth step 1/2 + arctan(w/τ)/π, values in (0, 1)."""
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    return 0.5 + np.arctan(np.asarray(w, dtype=float) / tau) / np.pi


def _h_prime(w, tau):
    return tau / (np.pi * (tau * tau + w * w))


def g_weight(u, params):
    """
    Thresholding weight g_{τ,η}(u).

    Written as 1 + (arctan((u−η)/τ) + arctan((−u−η)/τ))/π, which equals
    h(u−η) + h(−u−η) and is exactly 1 when η = 0 because arctan is odd.
    """
    u = np.asarray(u, dtype=float)
    tau, eta = params.tau, params.eta
    return 1.0 + (np.arctan((u - eta) / tau) + np.arctan((-u - eta) / tau)) / np.pi


def g_weight_deriv(u, params):
    """Derivative g'(u) = h'(u−η) − h'(−u−η); odd in u."""
    u = np.asarray(u, dtype=float)
    tau, eta = params.tau, params.eta
    return _h_prime(u - eta, tau) - _h_prime(-u - eta, tau)


def apply_G(beta, params):
    """Component-wise ξ_j = β_j · g(β_j)."""
    beta = np.asarray(beta, dtype=float)
    return beta * g_weight(beta, params)


def dG_diag(beta, params):
    """Diagonal of the Jacobian of G: g(β_j) + β_j g'(β_j)."""
    beta = np.asarray(beta, dtype=float)
    return g_weight(beta, params) + beta * g_weight_deriv(beta, params)


def dG_bounds(params):
    """
    Lower and upper bounds of every dG_diag entry for the given (τ, η).

    The minimum g(0) is attained at u = 0. The upper bound comes from
    maximizing |u|·h'(|u|−η), whose peak sits at |u| = √(τ²+η²).
    """
    tau, eta = params.tau, params.eta
    lower = float(g_weight(0.0, params))
    upper = 1.0 + tau / (2.0 * np.pi * (np.hypot(tau, eta) - eta))
    return lower, upper


def invert_G_scalar(v, params):
    """
    Unique u with u·g(u) = v.

    u ↦ u·g(u) is odd and strictly increasing, and g ≤ 1 bounds the root
    in [v, v/g(v)] for v > 0. Bisection stays reliable across the steep
    transition near |u| = η where Newton steps overshoot.
    """
    v = float(v)
    if not np.isfinite(v):
        raise ParameterError(f"cannot invert G at non-finite value {v}")
    if v == 0.0 or params.eta == 0.0:
        return v
    if v < 0.0:
        return -invert_G_scalar(-v, params)

    def residual(u):
        return u * float(g_weight(u, params)) - v

    low = v
    high = v / float(g_weight(v, params))
    if residual(high) <= 0.0:
        return high
    return bisect(residual, low, high, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def invert_G(xi, params):
    """Vectorized inverse of apply_G."""
    xi = np.asarray(xi, dtype=float)
    flat = np.array([invert_G_scalar(v, params) for v in xi.ravel()])
    return flat.reshape(xi.shape)
