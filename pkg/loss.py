"""
Pseudo-Huber loss L(a) = ω²(√(1+(a/ω)²) − 1), its derivative and the induced IRLS weight.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import median_abs_deviation

from rct_base import HUBER_TUNING, MAD_CONSISTENCY, debug_print, require_positive


@dataclass(frozen=True)
class HuberParams:
    """Transition scale ω between the quadratic and linear regimes."""

    omega: float

    def __post_init__(self):
        require_positive('omega', self.omega)


def pseudo_huber(a, params):
    """
    ω²(√(1+(a/ω)²) − 1), evaluated as a²/(√(1+(a/ω)²) + 1).

    The rewritten form is algebraically identical and keeps full precision
    in the quadratic regime and for very large ω.
    """
    a = np.asarray(a, dtype=float)
    z = a / params.omega
    return a * a / (np.sqrt(1.0 + z * z) + 1.0)


def irls_weight(residual, params):
    """L'(r)/r = 1/√(1+(r/ω)²); equals 1 at r = 0."""
    z = np.asarray(residual, dtype=float) / params.omega
    return 1.0 / np.sqrt(1.0 + z * z)


def pseudo_huber_deriv(a, params):
    """L'(a) = a/√(1+(a/ω)²), bounded by ω in absolute value."""
    a = np.asarray(a, dtype=float)
    return a * irls_weight(a, params)


# ==================== SCALE DEFAULTS ====================

def mad_scale(y):
    """Robust scale median(|y − median(y)|)/0.6745."""
    return float(median_abs_deviation(np.asarray(y, dtype=float), scale=1.0)) / MAD_CONSISTENCY


def default_omega(y):
    """
    ω = 1.345 × MAD-scale of the response.

    Degenerate responses (zero MAD) fall back to the standard deviation,
    then to 1.0.
    """
    scale = mad_scale(y)
    if not scale > 0:
        scale = float(np.std(y))
        debug_print(f"MAD scale is zero, falling back to std {scale:.6g}")
    if not scale > 0:
        scale = 1.0
    return HUBER_TUNING * scale


def default_huber(y):
    return HuberParams(default_omega(y))
