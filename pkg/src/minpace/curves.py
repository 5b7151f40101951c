"""Monotone saturating response curves.

The default family is a normal CDF applied to ``log(alpha + eps)``, shifted and
rescaled so that the curve is exactly zero at ``alpha = 0`` and tends to the
saturation level ``a`` as ``alpha`` grows.  Three simpler families (linear,
piecewise-linear and a plain sigmoid in ``alpha``) live behind the same
interface so they can be swapped in for ablations.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

DEFAULT_EPS = 1e-3
C_BOUND = 20.0

LOG_SIGMOID = "log_sigmoid"
SIGMOID = "sigmoid"
LINEAR = "linear"
PIECEWISE_LINEAR = "piecewise_linear"
FAMILIES = (LOG_SIGMOID, SIGMOID, LINEAR, PIECEWISE_LINEAR)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class CurveDomainError(ValueError):
    """Raised when a curve is evaluated outside its domain."""


def softplus(x):
    """Overflow-safe ``log(1 + exp(x))``."""
    x = np.asarray(x, dtype=float)
    out = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
    return float(out) if out.ndim == 0 else out


def inv_softplus(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise CurveDomainError("inverse softplus needs y > 0")
    # log(expm1(y)) written to stay finite for large y
    out = y + np.log(-np.expm1(-y))
    return float(out) if out.ndim == 0 else out


def _diff_cdf(x_hi, x_lo):
    """Phi(x_hi) - Phi(x_lo) for x_hi >= x_lo, using whichever tail is accurate."""
    lower = ndtr(x_hi) - ndtr(x_lo)
    upper = ndtr(-x_lo) - ndtr(-x_hi)
    return np.where(x_hi <= 0.0, lower, upper)


def _check_alpha(alpha):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0) or np.any(np.isnan(alpha)):
        raise CurveDomainError("alpha must be non-negative")
    return alpha


def _scalarize(out):
    return float(out) if np.ndim(out) == 0 else out


def normalized_sigmoid(b, c, alpha, eps=DEFAULT_EPS):
    """Normal CDF on a log scale, rescaled to run from 0 at alpha=0 to 1 at infinity."""
    if not b > 0:
        raise CurveDomainError(f"b must be positive, got {b}")
    if not eps > 0:
        raise CurveDomainError(f"eps must be positive, got {eps}")
    alpha = _check_alpha(alpha)
    x0 = b * math.log(eps) + c
    x = b * np.log(alpha + eps) + c
    return _scalarize(_diff_cdf(x, x0) / ndtr(-x0))


def _normalized_sigmoid_slope(b, c, alpha, eps):
    x0 = b * math.log(eps) + c
    x = b * np.log(alpha + eps) + c
    dens = np.exp(-0.5 * x * x - log_ndtr(-x0)) * _INV_SQRT_2PI
    return b * dens / (alpha + eps)


@dataclass(frozen=True)
class CurveParams:
    """Parameters of one monotone curve ``alpha -> a * shape(alpha; b, c)``.

    Instances are callable and vectorised over ``alpha``.
    """

    a: float
    b: float
    c: float
    eps: float = DEFAULT_EPS
    family: str = LOG_SIGMOID

    def __post_init__(self):
        if not self.a > 0 or not self.b > 0:
            raise CurveDomainError(f"need a > 0 and b > 0, got a={self.a}, b={self.b}")
        if not self.eps > 0:
            raise CurveDomainError("eps must be positive")
        if self.family not in FAMILIES:
            raise CurveDomainError(f"unknown curve family {self.family!r}")

    @classmethod
    def from_raw(cls, raw_a, raw_b, raw_c, eps=DEFAULT_EPS, family=LOG_SIGMOID):
        """Map an unconstrained triple to valid parameters.

        ``a`` and ``b`` go through softplus; ``c`` is squashed into
        ``[-C_BOUND, C_BOUND]`` with a scaled tanh.
        """
        a = softplus(raw_a)
        b = softplus(raw_b)
        c = C_BOUND * math.tanh(raw_c / C_BOUND)
        # softplus can underflow to 0 for very negative input
        a = max(a, np.finfo(float).tiny)
        b = max(b, np.finfo(float).tiny)
        return cls(a, b, c, eps, family)

    def to_raw(self):
        c = min(max(self.c, -C_BOUND * (1 - 1e-12)), C_BOUND * (1 - 1e-12))
        return np.array([inv_softplus(self.a), inv_softplus(self.b), C_BOUND * math.atanh(c / C_BOUND)])

    @property
    def sup(self):
        """Least upper bound of the curve over alpha >= 0."""
        return math.inf if self.family == LINEAR else self.a

    def __call__(self, alpha):
        return eval_curve(self, alpha)

    def slope(self, alpha):
        return curve_slope(self, alpha)

    def to_dict(self):
        d = asdict(self)
        if self.family == LOG_SIGMOID:
            del d["family"]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d["a"]),
            float(d["b"]),
            float(d["c"]),
            float(d.get("eps", DEFAULT_EPS)),
            d.get("family", LOG_SIGMOID),
        )


def eval_curve(params: CurveParams, alpha):
    alpha = _check_alpha(alpha)
    a, b, c = params.a, params.b, params.c
    fam = params.family
    if fam == LOG_SIGMOID:
        return a * normalized_sigmoid(b, c, alpha, params.eps)
    if fam == SIGMOID:
        out = a * _diff_cdf(b * alpha + c, np.full_like(alpha, c)) / ndtr(-c)
    elif fam == LINEAR:
        out = a * b * alpha
    else:
        out = a * np.minimum(b * alpha, 1.0)
    return _scalarize(out)


def curve_slope(params: CurveParams, alpha):
    """Analytic derivative of :func:`eval_curve` with respect to alpha (alpha > 0)."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0) or np.any(np.isnan(alpha)):
        raise CurveDomainError("slope needs alpha > 0")
    a, b, c = params.a, params.b, params.c
    fam = params.family
    if fam == LOG_SIGMOID:
        out = a * _normalized_sigmoid_slope(b, c, alpha, params.eps)
    elif fam == SIGMOID:
        x = b * alpha + c
        out = a * b * np.exp(-0.5 * x * x - log_ndtr(-c)) * _INV_SQRT_2PI
    elif fam == LINEAR:
        out = np.full_like(alpha, a * b)
    else:
        out = np.where(b * alpha < 1.0, a * b, 0.0)
    return _scalarize(out)
