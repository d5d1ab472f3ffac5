"""Product-limit survival estimation for threshold-defined events.

An event is a value of the continuous outcome above the cut-point.  Two
estimators share the risk-set machinery: the classical Kaplan-Meier over
observed exceedances, and the distributional estimator whose per-interval
survival factor is the fitted skew-normal exceedance probability, which
therefore exists at event-free time points too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    AllReplicatesFailed,
    DegenerateSample,
    EmptyDataset,
    NoEstimableTimePoints,
    TooFewObservations,
)
from .dataio import DatasetMeta, LongDataset
from .seeds import derive_rng
from .skewnormal import FitOptions, SnParams, exceedance, fit_sn

SE_MODES = ("paper_delta", "full_delta", "bootstrap", "all")
# Per-interval variance source feeding the distributional Greenwood chain
# when se_mode = "all" or "bootstrap" (the latter still reports se_dist).
DEFAULT_GREENWOOD_SOURCE = "paper_delta"


@dataclass(frozen=True, eq=False)
class RiskSet:
    """Subjects at risk at one time point, with their outcome values.

    A subject is at risk at t when observed at t, inside their uninterrupted
    observation window, with no value above the cut-point at any earlier
    time.  The value at t itself may exceed the cut-point: that is the event
    at t.
    """

    time_index: int
    values: np.ndarray
    subject_ids: tuple[str, ...]
    cutpoint: float

    @property
    def n_risk(self) -> int:
        return int(self.values.size)

    @property
    def n_event(self) -> int:
        return int(np.sum(self.values > self.cutpoint))


@dataclass(frozen=True)
class EstimatorOptions:
    cutpoint: float
    min_n_fit: int = 20
    bootstrap_reps: int = 500
    se_mode: str = "paper_delta"
    seed: int = 0
    start_time: int = 1
    p_estimator: str = "sn"  # "empirical" bypasses the distribution fit
    fit_options: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        if self.bootstrap_reps < 1:
            raise ValueError("bootstrap_reps must be >= 1")
        if self.min_n_fit < 3:
            raise ValueError("min_n_fit must be >= 3")
        if self.se_mode not in SE_MODES:
            raise ValueError(f"se_mode must be one of {SE_MODES}")
        if self.p_estimator not in ("sn", "empirical"):
            raise ValueError("p_estimator must be 'sn' or 'empirical'")
        if self.start_time < 1:
            raise ValueError("start_time must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


@dataclass(frozen=True)
class CurvePoint:
    time_index: int
    s_hat: float
    p_hat: float
    se_dist: float
    se_boot: float
    n_risk: int
    n_event: int
    n_est: int
    estimable: bool
    fit: SnParams | None = None


@dataclass(frozen=True)
class SurvivalCurve:
    """Per-time-point survival estimates.

    For the distributional estimator, `estimable` marks time points where
    the product chain is defined (enough data to fit at every interval so
    far).  For the Kaplan-Meier estimator it marks time points carrying an
    observed event, the convention under which KM results are reported;
    s_hat itself is still carried flat through event-free times.
    """

    points: tuple[CurvePoint, ...]
    estimator: str
    cutpoint: float

    @property
    def times(self) -> np.ndarray:
        return np.array([p.time_index for p in self.points], dtype=int)

    @property
    def s_hat(self) -> np.ndarray:
        return np.array([p.s_hat for p in self.points])

    @property
    def se_dist(self) -> np.ndarray:
        return np.array([p.se_dist for p in self.points])

    @property
    def se_boot(self) -> np.ndarray:
        return np.array([p.se_boot for p in self.points])

    def point_at(self, time_index: int) -> CurvePoint | None:
        for p in self.points:
            if p.time_index == time_index:
                return p
        return None


def build_risk_sets(data: LongDataset, cutpoint: float) -> list[RiskSet]:
    """Risk sets for every time point of the dataset.

    Subjects are followed from their first observation until the first gap
    (censoring) or the first value above the cut-point (event); the event
    observation itself is in the risk set of its time point.
    """
    if data.n_subjects == 0 or data.n_times == 0 or not np.any(~np.isnan(data.values)):
        raise EmptyDataset("no observations")
    mat = data.values
    n, n_times = mat.shape
    obs = ~np.isnan(mat)
    exceed = np.where(obs, mat > cutpoint, False)

    in_window = np.zeros_like(obs)
    started = np.zeros(n, dtype=bool)
    for t in range(n_times):
        opening = obs[:, t] & ~started
        cont = obs[:, t] & (in_window[:, t - 1] if t else False)
        in_window[:, t] = opening | cont
        started |= obs[:, t]

    prior_event = np.zeros_like(obs)
    for t in range(1, n_times):
        prior_event[:, t] = prior_event[:, t - 1] | (in_window[:, t - 1] & exceed[:, t - 1])

    at_risk = in_window & ~prior_event
    out = []
    for t in range(n_times):
        rows = np.flatnonzero(at_risk[:, t])
        out.append(RiskSet(
            time_index=t + 1,
            values=mat[rows, t].copy(),
            subject_ids=tuple(data.subject_ids[i] for i in rows),
            cutpoint=cutpoint,
        ))
    return out


def greenwood_dist(p_hats, se_p_hats) -> list[float]:
    """Greenwood-style SEs of the running product of survival factors.

    SE(S_i) = S_i * sqrt(sum_{j<=i} Var(q_j)/(1-q_j)^2) with q_j = 1-p_j the
    event probability, i.e. each term is (se_p_j / p_j)^2.  Factors equal to
    1 contribute zero variance; a factor of 0 (absorbing event) leaves the
    variance undefined from that time on, as does an undefined se_p.
    """
    if len(p_hats) != len(se_p_hats):
        raise ValueError("p_hats and se_p_hats must be aligned")
    out = []
    total = 0.0
    s = 1.0
    dead = False
    for p, se_p in zip(p_hats, se_p_hats):
        s *= p
        if p <= 0.0:
            dead = True
        elif p >= 1.0:
            total += 0.0
        else:
            total += (se_p / p) ** 2
        out.append(float("nan") if dead else s * math.sqrt(total))
    return out


def km_classic(data: LongDataset, cutpoint: float, start_time: int = 1) -> SurvivalCurve:
    """Classical Kaplan-Meier with the Greenwood variance.

    Estimates exist while risk sets are nonempty; the estimate is carried
    flat through event-free time points, which are flagged non-estimable in
    the reporting sense (see SurvivalCurve).
    """
    risk_sets = build_risk_sets(data, cutpoint)
    points = []
    s = 1.0
    gw = 0.0
    alive = True
    for rs in risk_sets:
        t = rs.time_index
        if t < start_time:
            continue
        n, d = rs.n_risk, rs.n_event
        if n == 0 or not alive:
            points.append(CurvePoint(t, float("nan"), float("nan"), float("nan"),
                                     float("nan"), n, d, 0, False))
            alive = False
            continue
        factor = 1.0 - d / n
        s *= factor
        if d < n:
            gw += d / (n * (n - d))
            se = s * math.sqrt(gw)
        else:
            gw = float("nan")
            se = float("nan")
        points.append(CurvePoint(t, s, factor, se, float("nan"), n, d, 0, d > 0))
    return SurvivalCurve(tuple(points), "km", cutpoint)


def _fit_point(values: np.ndarray, opts: EstimatorOptions):
    """One interval's survival factor; returns (p_hat, se_p, se_paper, se_delta, fit)."""
    if opts.p_estimator == "empirical":
        n = values.size
        d = int(np.sum(values > opts.cutpoint))
        p = 1.0 - d / n
        se = math.sqrt(p * (1.0 - p) / n)
        return p, se, se, float("nan"), None
    fit = fit_sn(values, opts.fit_options)
    exc = exceedance(fit, opts.cutpoint)
    source = opts.se_mode if opts.se_mode in ("paper_delta", "full_delta") \
        else DEFAULT_GREENWOOD_SOURCE
    se = exc.se_paper if source == "paper_delta" else exc.se_delta
    return exc.prob, se, exc.se_paper, exc.se_delta, fit


def _dkm_points(data: LongDataset, opts: EstimatorOptions):
    """Point estimates of the distributional curve (no bootstrap pass).

    Returns (points, p_hats, se_ps) where the latter two cover the estimable
    prefix only.
    """
    risk_sets = [rs for rs in build_risk_sets(data, opts.cutpoint)
                 if rs.time_index >= opts.start_time]
    points: list[CurvePoint] = []
    p_hats: list[float] = []
    se_ps: list[float] = []
    s = 1.0
    broken = False
    for rs in risk_sets:
        n_est = rs.n_risk
        if broken or n_est < opts.min_n_fit:
            broken = True
            points.append(CurvePoint(rs.time_index, float("nan"), float("nan"),
                                     float("nan"), float("nan"), rs.n_risk,
                                     rs.n_event, n_est, False))
            continue
        try:
            p, se_p, _, _, fit = _fit_point(rs.values, opts)
        except (DegenerateSample, TooFewObservations):
            broken = True
            points.append(CurvePoint(rs.time_index, float("nan"), float("nan"),
                                     float("nan"), float("nan"), rs.n_risk,
                                     rs.n_event, n_est, False))
            continue
        s *= p
        p_hats.append(p)
        se_ps.append(se_p)
        points.append(CurvePoint(rs.time_index, s, p, float("nan"), float("nan"),
                                 rs.n_risk, rs.n_event, n_est, True, fit))
    return points, p_hats, se_ps


def dkm_curve(data: LongDataset, opts: EstimatorOptions) -> SurvivalCurve:
    """Distributional product-limit curve.

    Each interval's survival factor is the exceedance probability of a
    skew-normal fitted to the risk-set values (all values observed at that
    time, events included).  Time points whose risk set is smaller than
    min_n_fit are not estimable and end the product chain; no gap-jumping.
    se_dist comes from the distributional Greenwood formula; se_boot is
    filled when se_mode requests the bootstrap.
    """
    points, p_hats, se_ps = _dkm_points(data, opts)
    if not p_hats:
        raise NoEstimableTimePoints(
            f"no time point from {opts.start_time} on has >= {opts.min_n_fit} "
            "usable observations"
        )
    ses = greenwood_dist(p_hats, se_ps)
    boot = None
    if opts.se_mode in ("bootstrap", "all"):
        boot = bootstrap_se(data, opts)

    upgraded = []
    k = 0
    for p in points:
        if p.estimable:
            se_b = float("nan")
            if boot is not None:
                se_b = boot.se[k] if k < len(boot.se) else float("nan")
            upgraded.append(replace(p, se_dist=ses[k], se_boot=se_b))
            k += 1
        else:
            upgraded.append(p)
    return SurvivalCurve(tuple(upgraded), "dkm", opts.cutpoint)


@dataclass(frozen=True)
class BootstrapResult:
    """Per-time-point bootstrap SEs over the estimable prefix of the curve."""

    times: tuple[int, ...]
    se: tuple[float, ...]
    n_reps_used: tuple[int, ...]
    reps: int


def bootstrap_se(data: LongDataset, opts: EstimatorOptions) -> BootstrapResult:
    """Bootstrap SE of the distributional curve.

    Whole subject trajectories are resampled with replacement so that
    within-subject correlation is preserved; each replicate's stream is
    derived from (seed, replicate index) and results are therefore
    independent of any execution schedule.  The SE at a time point is the
    SD (ddof=1) of the replicate estimates that exist there; a single
    surviving replicate yields 0 by convention.  Raises AllReplicatesFailed
    when no replicate produced a curve at all.
    """
    point_opts = replace(opts, se_mode="paper_delta")
    n = data.n_subjects
    width = len(str(max(n, 1)))
    per_time: dict[int, list[float]] = {}
    any_ok = False
    for rep in range(opts.bootstrap_reps):
        rng = derive_rng(opts.seed, 0xB007, rep)
        rows = rng.integers(0, n, size=n)
        boot_data = LongDataset(
            tuple(f"b{i:0{width}d}" for i in range(n)),
            data.values[rows],
            DatasetMeta(),
        )
        try:
            points, _, _ = _dkm_points(boot_data, point_opts)
        except EmptyDataset:
            continue
        got = False
        for p in points:
            if p.estimable and not math.isnan(p.s_hat):
                per_time.setdefault(p.time_index, []).append(p.s_hat)
                got = True
        any_ok = any_ok or got
    if not any_ok:
        raise AllReplicatesFailed("no bootstrap replicate produced an estimate")

    times = sorted(per_time)
    ses, counts = [], []
    for t in times:
        vals = per_time[t]
        counts.append(len(vals))
        if len(vals) >= 2:
            ses.append(float(np.std(vals, ddof=1)))
        else:
            ses.append(0.0)
    return BootstrapResult(tuple(times), tuple(ses), tuple(counts),
                           opts.bootstrap_reps)
