"""Response-bundle forecasts: an exact oracle with injectable error, and a
direct curve fitter driven by the future-sampling loss."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .curves import LOG_SIGMOID, CurveParams
from .market import GroundTruth, aggregate_response

DEFAULT_M = 8
DEFAULT_LAMBDA_I = 0.1
DEFAULT_RESTARTS = 5
DEFAULT_MAX_ITER = 500

INFLATE = "inflate"
DEFLATE = "deflate"
ADVERSE = "adverse"
RANDOM = "random"
SIGN_PATTERNS = (INFLATE, DEFLATE, ADVERSE, RANDOM)


class FitError(RuntimeError):
    """A curve family could not match its target to tolerance."""


class IdentifiabilityError(FitError):
    pass


class ConvergenceError(FitError):
    pass


@dataclass(frozen=True)
class ResponseBundle:
    """Remaining-traffic forecast plus aggregate per-opportunity cost/value curves.

    ``cost`` and ``value`` are any callables of alpha exposing ``slope`` and
    ``sup``; usually :class:`CurveParams`.
    """

    traffic: float
    cost: object
    value: object

    def __post_init__(self):
        if not self.traffic > 0:
            raise ValueError(f"traffic forecast must be positive, got {self.traffic}")

    def total_cost(self, alpha):
        return self.traffic * self.cost(alpha)

    def total_value(self, alpha):
        return self.traffic * self.value(alpha)

    def psi(self, alpha, target_cpa):
        return self.traffic * (self.cost(alpha) - target_cpa * self.value(alpha))

    def psi_slope(self, alpha, target_cpa):
        return self.traffic * (self.cost.slope(alpha) - target_cpa * self.value.slope(alpha))

    def to_dict(self):
        if not (isinstance(self.cost, CurveParams) and isinstance(self.value, CurveParams)):
            raise TypeError("only parametric bundles serialise")
        return {"traffic": self.traffic, "cost": self.cost.to_dict(), "value": self.value.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["traffic"]), CurveParams.from_dict(d["cost"]), CurveParams.from_dict(d["value"]))


@dataclass(frozen=True)
class ErrorSpec:
    """Horizon-uniform forecast errors.

    ``inflate`` adds every offset, ``deflate`` subtracts every offset,
    ``adverse`` under-states cost and traffic while over-stating value (the
    direction that makes the controller overspend), ``random`` draws an
    independent sign per component and call.
    """

    eps_C: float = 0.0
    eps_V: float = 0.0
    eps_I: float = 0.0
    sign: str = INFLATE

    def __post_init__(self):
        if min(self.eps_C, self.eps_V, self.eps_I) < 0:
            raise ValueError("error magnitudes must be non-negative")
        if self.sign not in SIGN_PATTERNS:
            raise ValueError(f"unknown sign pattern {self.sign!r}")

    @property
    def is_zero(self):
        return self.eps_C == 0 and self.eps_V == 0 and self.eps_I == 0

    def signs(self, rng=None):
        if self.sign == INFLATE:
            return 1.0, 1.0, 1.0
        if self.sign == DEFLATE:
            return -1.0, -1.0, -1.0
        if self.sign == ADVERSE:
            return -1.0, 1.0, -1.0
        if rng is None:
            raise ValueError("random sign pattern needs an rng")
        s = rng.choice([-1.0, 1.0], size=3)
        return float(s[0]), float(s[1]), float(s[2])

    def to_dict(self):
        return {"eps_C": self.eps_C, "eps_V": self.eps_V, "eps_I": self.eps_I, "sign": self.sign}


class OffsetCurve:
    """``base(alpha) + offset``; same slope as the base curve."""

    def __init__(self, base, offset):
        self.base = base
        self.offset = float(offset)

    def __call__(self, alpha):
        return self.base(alpha) + self.offset

    def slope(self, alpha):
        return self.base.slope(alpha)

    @property
    def sup(self):
        return self.base.sup + self.offset


# ---------------------------------------------------------------------------
# curve fitting


def _initial_raw(alphas, targets, rng, family):
    a0 = 1.5 * max(float(np.max(targets)), 1e-12)
    b0 = math.exp(rng.uniform(math.log(0.3), math.log(3.0)))
    pos = alphas[alphas > 0]
    centre = math.exp(np.mean(np.log(pos))) if len(pos) else 1.0
    centre *= math.exp(rng.uniform(-1.0, 1.0))
    if family == LOG_SIGMOID:
        c0 = -b0 * math.log(centre)
    else:
        b0 = b0 / centre
        c0 = rng.uniform(-1.0, 1.0)
    return CurveParams(a0, b0, float(np.clip(c0, -15, 15)), family=family).to_raw()


def fit_curve(alphas, targets, weights=None, *, family=LOG_SIGMOID, restarts=DEFAULT_RESTARTS, rng=None,
              max_iter=DEFAULT_MAX_ITER):
    """Weighted least-squares fit of one curve; returns ``(params, weighted SSE)``."""
    alphas = np.asarray(alphas, dtype=float)
    targets = np.asarray(targets, dtype=float)
    w = np.ones_like(alphas) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    rng = np.random.default_rng(rng)

    def resid(raw):
        return sw * (CurveParams.from_raw(*raw, family=family)(alphas) - targets)

    best = None
    for child in rng.spawn(restarts):
        x0 = _initial_raw(alphas, targets, child, family)
        res = least_squares(resid, x0, method="lm", max_nfev=max_iter * (len(x0) + 1), xtol=1e-15, ftol=1e-15,
                            gtol=1e-15)
        loss = float(res.fun @ res.fun)
        if best is None or loss < best[1]:
            best = (res.x, loss)
    return CurveParams.from_raw(*best[0], family=family), best[1]


def oracle_predict(gt: GroundTruth, t, err: ErrorSpec | None = None, rng=None, *, parametric=False,
                   action_range=None, tol=1e-4, grid_n=256) -> ResponseBundle:
    """True aggregate bundle for ticks t..T, optionally perturbed by ``err``.

    With ``parametric=True`` the aggregate curves are first replaced by
    log-sigmoid fits on a dense grid over ``action_range``; a sup-norm misfit
    above ``tol`` raises :class:`FitError`.
    """
    remaining, cost, value = aggregate_response(gt, t)
    if parametric:
        lo, hi = action_range if action_range is not None else (1e-3, gt.saturation_alpha())
        grid = np.linspace(lo, hi, grid_n)
        fitted = []
        for curve in (cost, value):
            params, _ = fit_curve(grid, curve(grid), rng=np.random.default_rng(0))
            misfit = float(np.max(np.abs(params(grid) - curve(grid))))
            if misfit > tol:
                raise FitError(f"{curve.kind} curve misfit {misfit:.3g} exceeds {tol:g}")
            fitted.append(params)
        cost, value = fitted
    if err is None or err.is_zero:
        return ResponseBundle(remaining, cost, value)
    s_c, s_v, s_i = err.signs(rng)
    traffic = remaining + s_i * err.eps_I
    if traffic <= 0:
        raise ValueError(f"traffic error {err.eps_I} leaves a non-positive forecast")
    return ResponseBundle(traffic, OffsetCurve(cost, s_c * err.eps_C), OffsetCurve(value, s_v * err.eps_V))


def fit_loss(bundle: ResponseBundle, samples, lambda_I=DEFAULT_LAMBDA_I, true_I=None):
    """Traffic-weighted future-sampling loss of ``bundle`` on ``samples``."""
    if not samples:
        raise ValueError("need at least one sample")
    if bundle.traffic <= 0:
        raise ValueError("traffic forecast must be positive")
    I = np.array([s.I for s in samples], dtype=float)
    if np.any(I < 1):
        raise ValueError("every sample needs I >= 1")
    alpha = np.array([s.alpha for s in samples])
    cost_t = np.array([s.cost for s in samples]) / I
    val_t = np.array([s.value for s in samples]) / I
    curve = np.mean(I * (bundle.cost(alpha) - cost_t) ** 2 + I * (bundle.value(alpha) - val_t) ** 2)
    if true_I is None:
        return float(curve)
    return float(curve + lambda_I * (math.log(bundle.traffic) - math.log(true_I)) ** 2)


@dataclass
class FitResult:
    bundle: ResponseBundle
    loss: float
    restart_losses: list = field(default_factory=list)
    restart_status: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    converged: bool = True

    def to_dict(self):
        return {
            "bundle": self.bundle.to_dict(),
            "loss": self.loss,
            "converged": self.converged,
            "restarts": [{"loss": l, "status": s} for l, s in zip(self.restart_losses, self.restart_status)],
        }


def fit_bundle_detailed(records, t, M=DEFAULT_M, lambda_I=DEFAULT_LAMBDA_I, restarts=DEFAULT_RESTARTS, rng=None, *,
                        family=LOG_SIGMOID, max_iter=DEFAULT_MAX_ITER, strict=True) -> FitResult:
    """Future-sampling fit of one anchor's bundle.

    With ``strict`` false, a fit where every restart ran out of iterations
    returns the lowest-loss iterate flagged ``converged=False`` instead of
    raising.  That happens when the family cannot represent the data and the
    optimum runs off to infinity (typically the amplitude).
    """
    future = [r for r in records if r.t >= t]
    if not future:
        raise IdentifiabilityError(f"no records at or after anchor tick {t}")
    rng = np.random.default_rng(rng)
    idx = rng.integers(0, len(future), size=M)
    samples = [future[i] for i in idx]
    if len({s.alpha for s in samples}) < 3:
        raise IdentifiabilityError("need at least 3 distinct logged alpha values among sampled futures")
    true_I = float(sum(r.I for r in future))

    I = np.array([s.I for s in samples], dtype=float)
    alpha = np.array([s.alpha for s in samples])
    cost_t = np.array([s.cost for s in samples]) / I
    val_t = np.array([s.value for s in samples]) / I
    sw = np.sqrt(I / M)
    sl = math.sqrt(lambda_I)
    log_true = math.log(true_I)

    def unpack(x):
        return (math.exp(x[0]), CurveParams.from_raw(*x[1:4], family=family),
                CurveParams.from_raw(*x[4:7], family=family))

    def resid(x):
        _, cp, vp = unpack(x)
        return np.concatenate([sw * (cp(alpha) - cost_t), sw * (vp(alpha) - val_t), [sl * (x[0] - log_true)]])

    losses, status, best, fallback = [], [], None, None
    for child in rng.spawn(restarts):
        x0 = np.concatenate([[log_true], _initial_raw(alpha, cost_t, child, family),
                             _initial_raw(alpha, val_t, child, family)])
        res = least_squares(resid, x0, method="lm", max_nfev=max_iter * (len(x0) + 1), xtol=1e-12, ftol=1e-12,
                            gtol=1e-12)
        loss = float(res.fun @ res.fun)
        losses.append(loss)
        status.append(int(res.status))
        if res.status > 0 and (best is None or loss < best[1]):
            best = (res.x, loss)
        if math.isfinite(loss) and (fallback is None or loss < fallback[1]):
            fallback = (res.x, loss)
    converged = best is not None
    if not converged:
        if strict or fallback is None:
            raise ConvergenceError(f"no restart converged within {max_iter} iterations")
        best = fallback
    traffic, cp, vp = unpack(best[0])
    return FitResult(ResponseBundle(traffic, cp, vp), best[1], losses, status, samples, converged)


def fit_bundle(records, t, M=DEFAULT_M, lambda_I=DEFAULT_LAMBDA_I, restarts=DEFAULT_RESTARTS, rng=None, **kw):
    """Fit a parametric bundle for anchor ``t`` from logged tick records."""
    return fit_bundle_detailed(records, t, M, lambda_I, restarts, rng, **kw).bundle


class OraclePredictor:
    """Predictor that reads the ground truth, optionally with injected error."""

    def __init__(self, gt: GroundTruth, err: ErrorSpec | None = None, seed=None, **oracle_kw):
        self.gt = gt
        self.err = err
        self.rng = np.random.default_rng(seed)
        self.oracle_kw = oracle_kw

    def __call__(self, t, state=None):
        return oracle_predict(self.gt, t, self.err, self.rng, **self.oracle_kw)


class FittedPredictor:
    """Predictor that fits a bundle per anchor tick from offline tick logs.

    Anchors too close to the end of the log to be identifiable reuse the
    latest earlier fit, with the traffic forecast reset to the logged
    remaining traffic.
    """

    def __init__(self, records, M=DEFAULT_M, lambda_I=DEFAULT_LAMBDA_I, restarts=DEFAULT_RESTARTS, seed=0,
                 family=LOG_SIGMOID, strict=False, max_iter=DEFAULT_MAX_ITER):
        self.records = list(records)
        self.M = M
        self.lambda_I = lambda_I
        self.restarts = restarts
        self.seed = seed
        self.family = family
        self.strict = strict
        self.max_iter = max_iter
        self._cache = {}
        self.unconverged = []
        self.carried = []

    def __call__(self, t, state=None):
        if t not in self._cache:
            rng = np.random.default_rng([self.seed, t])
            try:
                fit = fit_bundle_detailed(self.records, t, self.M, self.lambda_I, self.restarts, rng,
                                          family=self.family, max_iter=self.max_iter, strict=self.strict)
            except IdentifiabilityError:
                earlier = [k for k in self._cache if k < t]
                remaining = sum(r.I for r in self.records if r.t >= t)
                if not earlier or remaining < 1:
                    raise
                prev = self._cache[max(earlier)]
                self.carried.append(t)
                self._cache[t] = ResponseBundle(float(remaining), prev.cost, prev.value)
                return self._cache[t]
            if not fit.converged:
                self.unconverged.append(t)
            self._cache[t] = fit.bundle
        return self._cache[t]
