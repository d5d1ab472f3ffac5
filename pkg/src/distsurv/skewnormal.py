"""Skew-normal family: densities, CDF, maximum-likelihood fitting, exceedance.

The skew-normal density with direct parameters (location xi, scale omega,
shape alpha) is (2/omega) * phi(z) * Phi(alpha*z) with z = (x-xi)/omega.
Its CDF has the closed form Phi(z) - 2*T(z, alpha) where T is Owen's T
function.  Fitting is done by maximum likelihood in the centered
parametrization (mean, SD, skewness) because the direct parametrization has
a flat likelihood ridge at shape -> +-inf that small samples hit easily.

Everything here is a pure function of its inputs; no random numbers are
drawn in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_ndtr, ndtr, owens_t

from .errors import (
    DegenerateSample,
    MissingSampleSize,
    SingularInformation,
    TooFewObservations,
)

_LOG2 = math.log(2.0)
_LOG_2PI = math.log(2.0 * math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_B = math.sqrt(2.0 / math.pi)  # E|Z| for a standard normal Z
# Largest skewness attainable by the family (the |shape| -> inf limit).
GAMMA1_MAX = 0.5 * (4.0 - math.pi) * _B**3 / (1.0 - _B**2) ** 1.5


@dataclass(frozen=True, eq=False)
class SnParams:
    """Direct parameters of a skew-normal fit, with fit diagnostics.

    `info` holds the observed-information matrix at the optimum: 3x3 over
    (location, scale, shape) for a genuine skew-normal fit, 2x2 over
    (location, scale) when the fit fell back to a normal (shape held at 0).
    """

    location: float
    scale: float
    shape: float
    n_fit: int = 0
    converged: bool = True
    loglik: float = float("nan")
    fallback: bool = False
    info: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.scale > 0.0):
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if not math.isfinite(self.shape):
            raise ValueError("shape must be finite; boundary fits are reported "
                             "as non-converged, never as +-inf")
        if not math.isfinite(self.location):
            raise ValueError("location must be finite")
        if self.n_fit < 0:
            raise ValueError("n_fit must be >= 0")


@dataclass(frozen=True)
class EsnParams:
    """Parameters of the extended skew-normal (one-step truncation) density."""

    location: float
    scale: float
    shape: float
    threshold_param: float

    def __post_init__(self):
        if not (self.scale > 0.0):
            raise ValueError(f"scale must be > 0, got {self.scale}")
        for name in ("location", "shape", "threshold_param"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class FitOptions:
    """Controls for the skew-normal maximum-likelihood fit.

    ftol is a relative function tolerance; the optimizer stops once the
    simplex's log-likelihood spread falls below ftol * (1 + |loglik|).
    n_starts: 3 restarts from method-of-moments, normal, and skew-flipped
    starts (the default); 1 uses the method-of-moments start only.
    |shape| above shape_cap is numerically indistinguishable from the
    half-normal limit at any interior cut-point, so such fits fall back to
    a normal fit (see fit_sn).
    """

    ftol: float = 1e-10
    max_iter: int = 500
    shape_cap: float = 40.0
    n_starts: int = 3

    def __post_init__(self):
        if self.ftol <= 0 or self.max_iter < 1:
            raise ValueError("ftol must be > 0 and max_iter >= 1")
        if self.n_starts not in (1, 3):
            raise ValueError("n_starts must be 1 or 3")


@dataclass(frozen=True, eq=False)
class ExceedanceEstimate:
    """P(Y > cutpoint) under a fitted skew-normal, with standard errors.

    se_paper is the closed-form delta expression scaled by 1/sqrt(n_fit);
    se_delta is the full delta-method SE through the observed information.
    Either is NaN when its ingredients are unavailable (n_fit = 0, no
    information matrix, or a singular one).
    """

    prob: float
    se_paper: float
    se_delta: float
    cutpoint: float
    params: SnParams

    def __post_init__(self):
        if not (0.0 <= self.prob <= 1.0):
            raise ValueError(f"prob must lie in [0, 1], got {self.prob}")
        for name in ("se_paper", "se_delta"):
            v = getattr(self, name)
            if not math.isnan(v) and v < 0.0:
                raise ValueError(f"{name} must be >= 0, got {v}")


def owen_t(h: float, a: float) -> float:
    """Owen's T function T(h, a).

    T(h, a) = (1/2pi) * integral_0^a exp(-h^2(1+x^2)/2) / (1+x^2) dx.
    Evaluated by the region-switching hybrid series/quadrature algorithm of
    Patefield & Tandy (via scipy), accurate to well below 1e-12 absolute.
    """
    return float(owens_t(h, a))


def sn_pdf(x, p: SnParams):
    """Skew-normal density (2/scale) * phi(z) * Phi(shape*z)."""
    z = (np.asarray(x, dtype=float) - p.location) / p.scale
    out = (2.0 / p.scale) * np.exp(-0.5 * z * z) / _SQRT_2PI * ndtr(p.shape * z)
    return out if out.ndim else float(out)


def sn_cdf(x, p: SnParams):
    """Skew-normal CDF Phi(z) - 2*T(z, shape), clipped into [0, 1]."""
    z = (np.asarray(x, dtype=float) - p.location) / p.scale
    out = np.clip(ndtr(z) - 2.0 * owens_t(z, p.shape), 0.0, 1.0)
    return out if out.ndim else float(out)


def esn_pdf(x, p: EsnParams):
    """Extended skew-normal density.

    phi(z) * Phi(tau*sqrt(1+shape^2) + shape*z) / (scale * Phi(tau)),
    z = (x-location)/scale.  With tau = 0 this reduces to sn_pdf.
    """
    z = (np.asarray(x, dtype=float) - p.location) / p.scale
    tau = p.threshold_param
    arg = tau * math.sqrt(1.0 + p.shape**2) + p.shape * z
    out = (np.exp(-0.5 * z * z) / _SQRT_2PI) * ndtr(arg) / (p.scale * ndtr(tau))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Parametrization maps (centered <-> direct)


def cp_to_dp(mean: float, sd: float, gamma1: float) -> tuple[float, float, float]:
    """Centered (mean, SD, skewness) -> direct (location, scale, shape)."""
    if abs(gamma1) >= GAMMA1_MAX:
        raise ValueError(f"|skewness| must be < {GAMMA1_MAX:.6f}")
    c = math.copysign(abs(2.0 * gamma1 / (4.0 - math.pi)) ** (1.0 / 3.0), gamma1)
    bdelta = c / math.sqrt(1.0 + c * c)  # = b * delta
    delta = bdelta / _B
    shape = delta / math.sqrt(1.0 - delta * delta)
    scale = sd / math.sqrt(1.0 - bdelta * bdelta)
    location = mean - scale * bdelta
    return location, scale, shape


def dp_to_cp(location: float, scale: float, shape: float) -> tuple[float, float, float]:
    """Direct (location, scale, shape) -> centered (mean, SD, skewness)."""
    delta = shape / math.sqrt(1.0 + shape * shape)
    bdelta = _B * delta
    mean = location + scale * bdelta
    sd = scale * math.sqrt(1.0 - bdelta * bdelta)
    gamma1 = 0.5 * (4.0 - math.pi) * bdelta**3 / (1.0 - bdelta**2) ** 1.5
    return mean, sd, gamma1


# ---------------------------------------------------------------------------
# Maximum likelihood


def _neg_loglik(x: np.ndarray, location: float, scale: float, shape: float) -> float:
    z = (x - location) / scale
    return -(
        x.size * (_LOG2 - math.log(scale) - 0.5 * _LOG_2PI)
        - 0.5 * float(z @ z)
        + float(np.sum(log_ndtr(shape * z)))
    )


def _normal_mle(x: np.ndarray) -> tuple[float, float, float]:
    """Normal MLE (mean, sd_mle) and its log-likelihood."""
    m = float(np.mean(x))
    s = float(np.sqrt(np.mean((x - m) ** 2)))
    ll = -0.5 * x.size * (_LOG_2PI + 1.0) - x.size * math.log(s)
    return m, s, ll

def _normal_info(n: int, scale: float) -> np.ndarray:
    """Observed information of the normal likelihood at its MLE."""
    return np.array([[n / scale**2, 0.0], [0.0, 2.0 * n / scale**2]])


def _observed_information(x: np.ndarray, dp: tuple[float, float, float]) -> np.ndarray:
    """Numerical Hessian of the negative log-likelihood at dp.

    Central second differences with per-parameter steps eps^(1/4) * s_i,
    s = (scale, scale, 1 + |shape|).
    """
    theta = np.array(dp, dtype=float)
    steps = np.finfo(float).eps ** 0.25 * np.array(
        [dp[1], dp[1], 1.0 + abs(dp[2])]
    )

    def f(t):
        return _neg_loglik(x, t[0], t[1], t[2])

    f0 = f(theta)
    hess = np.empty((3, 3))
    for i in range(3):
        ei = np.zeros(3)
        ei[i] = steps[i]
        hess[i, i] = (f(theta + ei) - 2.0 * f0 + f(theta - ei)) / steps[i] ** 2
        for j in range(i):
            ej = np.zeros(3)
            ej[j] = steps[j]
            hess[i, j] = hess[j, i] = (
                f(theta + ei + ej) - f(theta + ei - ej)
                - f(theta - ei + ej) + f(theta - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
    return hess


def _sample_skewness(x: np.ndarray) -> float:
    m = np.mean(x)
    s2 = np.mean((x - m) ** 2)
    return float(np.mean((x - m) ** 3) / s2**1.5)


def fit_sn(values, options: FitOptions | None = None) -> SnParams:
    """Fit a skew-normal by maximum likelihood.

    Optimization runs in the centered parametrization (mean, log SD,
    atanh-transformed skewness), restarted from method-of-moments, normal,
    and skew-flipped starts; the best log-likelihood wins and near-ties go
    to the smallest |shape|.  When the shape estimate diverges past
    options.shape_cap, or the likelihood is flat in the skewness direction
    (near-symmetric or degenerate small samples), the fit falls back to the
    plain normal MLE with shape = 0, reported converged with the fallback
    flag set.

    Raises TooFewObservations for fewer than 3 values and DegenerateSample
    for zero sample variance.
    """
    opts = options or FitOptions()
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 3:
        raise TooFewObservations(f"need at least 3 observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must all be finite")
    n = int(x.size)

    mean0, sd0, ll_norm = _normal_mle(x)
    if sd0 == 0.0 or not math.isfinite(math.log(sd0)):
        raise DegenerateSample("sample standard deviation is zero")

    g1 = _sample_skewness(x)
    u0 = math.atanh(max(-0.9, min(0.9, g1 / GAMMA1_MAX)))
    starts = [(mean0, math.log(sd0), u0)]
    if opts.n_starts == 3:
        starts += [(mean0, math.log(sd0), 0.0), (mean0, math.log(sd0), -u0)]
        starts = list(dict.fromkeys(starts))

    def objective(v):
        gamma1 = GAMMA1_MAX * math.tanh(v[2])
        loc, sc, sh = cp_to_dp(v[0], math.exp(v[1]), gamma1)
        return _neg_loglik(x, loc, sc, sh)

    best = None
    for v0 in starts:
        res = minimize(
            objective,
            np.array(v0),
            method="Nelder-Mead",
            options={
                "maxiter": opts.max_iter,
                "fatol": opts.ftol * (1.0 + abs(ll_norm)),
                "xatol": 1e-8,
            },
        )
        if best is None:
            best = res
            continue
        tie = abs(res.fun - best.fun) <= 1e-9 * (1.0 + abs(best.fun))
        if res.fun < best.fun and not tie:
            best = res
        elif tie and abs(res.x[2]) < abs(best.x[2]):
            best = res

    gamma1 = GAMMA1_MAX * math.tanh(best.x[2])
    loc, sc, sh = cp_to_dp(best.x[0], math.exp(best.x[1]), gamma1)
    ll_sn = -best.fun

    # Flat in the skewness direction: indistinguishable from a normal fit.
    flat = (ll_sn - ll_norm) < 1e-6 * (1.0 + abs(ll_norm))
    if flat or abs(sh) > opts.shape_cap:
        return SnParams(
            location=mean0, scale=sd0, shape=0.0, n_fit=n, converged=True,
            loglik=ll_norm, fallback=True, info=_normal_info(n, sd0),
        )
    return SnParams(
        location=loc, scale=sc, shape=sh, n_fit=n,
        converged=bool(best.success), loglik=ll_sn, fallback=False,
        info=_observed_information(x, (loc, sc, sh)),
    )


# ---------------------------------------------------------------------------
# Exceedance probability and its standard errors


def se_paper_delta(p: SnParams, cutpoint: float, verbatim: bool = False) -> float:
    """Closed-form delta SE of the exceedance probability.

    (2/sqrt(pi)) * phi(z0) * Phi(shape*z0) with z0 = (cutpoint-location)/scale,
    divided by sqrt(n_fit).  The printed expression carries no sample-size
    dependence and cannot be a standard error as written; verbatim=True
    returns it unscaled for comparison.
    """
    z0 = (cutpoint - p.location) / p.scale
    raw = (2.0 / math.sqrt(math.pi)) * math.exp(-0.5 * z0 * z0) / _SQRT_2PI \
        * float(ndtr(p.shape * z0))
    if verbatim:
        return raw
    if p.n_fit == 0:
        raise MissingSampleSize("n_fit is 0; cannot scale the SE by sqrt(n)")
    return raw / math.sqrt(p.n_fit)


def _exceedance_prob(cutpoint: float, location: float, scale: float, shape: float) -> float:
    z = (cutpoint - location) / scale
    return float(np.clip(1.0 - (ndtr(z) - 2.0 * owens_t(z, shape)), 0.0, 1.0))


def se_full_delta(p: SnParams, cutpoint: float, fit_hessian: np.ndarray) -> float:
    """Full delta-method SE of the exceedance probability.

    sqrt(g' H^-1 g) where H is the observed information and g the central
    finite-difference gradient of P(Y > cutpoint) with respect to the fitted
    parameters (step eps^(1/3) * s_i with s = (scale, scale, 1 + |shape|)).
    A 2x2 H means the fit held shape fixed at 0 (normal fallback) and the
    gradient runs over (location, scale) only.

    Raises SingularInformation when H cannot be used (not invertible or not
    positive definite); callers fall back to a bootstrap SE.
    """
    hess = np.asarray(fit_hessian, dtype=float)
    k = hess.shape[0]
    if hess.shape != (k, k) or k not in (2, 3):
        raise ValueError("fit_hessian must be 2x2 or 3x3")

    theta = np.array([p.location, p.scale, p.shape])
    steps = np.finfo(float).eps ** (1.0 / 3.0) * np.array(
        [p.scale, p.scale, 1.0 + abs(p.shape)]
    )
    grad = np.empty(k)
    for i in range(k):
        hi = steps[i]
        up, dn = theta.copy(), theta.copy()
        up[i] += hi
        dn[i] -= hi
        grad[i] = (
            _exceedance_prob(cutpoint, *up) - _exceedance_prob(cutpoint, *dn)
        ) / (2.0 * hi)

    try:
        cov_g = np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation(str(exc)) from exc
    var = float(grad @ cov_g)
    if not math.isfinite(var) or var < 0.0:
        raise SingularInformation("information matrix is not positive definite")
    return math.sqrt(var)


def exceedance(p: SnParams, cutpoint: float) -> ExceedanceEstimate:
    """Per-interval survival factor P(Y > cutpoint) with standard errors.

    Never raises: standard errors that cannot be computed (n_fit = 0, no
    stored information matrix, singular information) come back as NaN.
    """
    prob = _exceedance_prob(cutpoint, p.location, p.scale, p.shape)
    se_p = se_paper_delta(p, cutpoint) if p.n_fit > 0 else float("nan")
    se_d = float("nan")
    if p.info is not None:
        try:
            se_d = se_full_delta(p, cutpoint, p.info)
        except SingularInformation:
            pass
    return ExceedanceEstimate(
        prob=prob, se_paper=se_p, se_delta=se_d, cutpoint=cutpoint, params=p
    )
