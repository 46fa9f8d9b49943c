"""Statistic-level Monte Carlo engine for 2-in-1 designs.

Each replicate draws the interim surrogate statistic X, the phase-2 final
statistic Y, the interim phase-3 statistic Z1 and a standard-normal
innovation for the post-interim increment of the phase-3 statistic. The
drift of the increment is added only once the post-interim event count is
known, so all designs of a scenario share one set of draws.

Replicates are processed in fixed-size chunks. Chunk ``k`` draws from a
Philox stream keyed by ``(seed, k)``, so results do not depend on how chunks
are spread over worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import numerics as nm
from .design import DesignParams, EffectScenario, adapted_total, chw_statistic, logrank_drift, orr_z_cutoff

CHUNK_SIZE = 1 << 14

F2IN1 = "F2in1"
CHW = "F2in1-CHW"
S2IN1_PREFIX = "S2in1-"


class SaturationError(RuntimeError):
    """Event target cannot be reached with the available patients."""

    def __init__(self, target, max_events):
        super().__init__(f"event target {target} unreachable; at most {max_events} events possible")
        self.target = target
        self.max_events = max_events


# -- draws -------------------------------------------------------------------


@dataclass
class StatisticDraw:
    """One replicate (scalar fields) or a batch of replicates (array fields)."""

    x: np.ndarray
    y: np.ndarray
    z1: np.ndarray
    z2_incr_unit: np.ndarray

    def __len__(self):
        return np.size(self.x)


def correlation_matrix(p: DesignParams) -> np.ndarray:
    """Correlation of (X, Y, Z1); Y and Z1 are independent given X."""
    rxy, rxz = p.rho_xy, p.rho_xz
    return np.array([[1.0, rxy, rxz], [rxy, 1.0, rxy * rxz], [rxz, rxy * rxz, 1.0]])


def statistic_means(scenario: EffectScenario, p: DesignParams) -> np.ndarray:
    return np.array([
        orr_z_cutoff(scenario.orr_c, scenario.orr_t, scenario.n_per_arm_interim),
        logrank_drift(scenario.hr_pfs, p.m_phase2),
        logrank_drift(scenario.hr_os, p.m1),
    ])


def stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for chunk ``index`` under ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def draw_replicate(scenario: EffectScenario, p: DesignParams, rng: np.random.Generator, size=None) -> StatisticDraw:
    """Draw one replicate, or ``size`` replicates as arrays."""
    chol = np.linalg.cholesky(correlation_matrix(p))
    n = 1 if size is None else size
    e = rng.standard_normal((n, 3)) @ chol.T + statistic_means(scenario, p)
    u = rng.standard_normal(n)
    if size is None:
        return StatisticDraw(float(e[0, 0]), float(e[0, 1]), float(e[0, 2]), float(u[0]))
    return StatisticDraw(e[:, 0], e[:, 1], e[:, 2], u)


# -- decision rules ------------------------------------------------------------


@dataclass
class TrialOutcome:
    """Decision path of one replicate, or of a batch when fields are arrays."""

    expanded: np.ndarray
    m_final: np.ndarray
    rejected: np.ndarray
    design_label: str
    duration_months: np.ndarray | None = None

    def __len__(self):
        return np.size(self.expanded)


def _phase2_branch(draw, p):
    return np.asarray(draw.y) > p.z_alpha


def _wrap(expanded, m_final, rejected, label, scalar):
    if scalar:
        return TrialOutcome(bool(expanded), int(m_final), bool(rejected), label)
    return TrialOutcome(np.asarray(expanded), np.asarray(m_final, dtype=np.int64), np.asarray(rejected), label)


def _adapt(draw, scenario, p):
    m_star = adapted_total(draw.z1, p, rounded=True)
    m2 = m_star - round(p.m1)
    z2_incr = np.asarray(draw.z2_incr_unit) + logrank_drift(scenario.hr_os, m2)
    return m_star, m2, z2_incr


def pooled_final(draw: StatisticDraw, scenario: EffectScenario, p: DesignParams):
    """Re-estimated total events and the conventional final statistic."""
    m_star, m2, z2_incr = _adapt(draw, scenario, p)
    z2 = np.asarray(draw.z1) * np.sqrt((m_star - m2) / m_star) + z2_incr * np.sqrt(m2 / m_star)
    return m_star, z2


def run_f2in1(draw: StatisticDraw, scenario: EffectScenario, p: DesignParams) -> TrialOutcome:
    """Flexible design: expand when X > c, re-estimate events from Z1 and
    test the pooled statistic conventionally."""
    expanded = np.asarray(draw.x) > p.c
    m_star, z2 = pooled_final(draw, scenario, p)
    rejected = np.where(expanded, z2 > p.z_alpha, _phase2_branch(draw, p))
    m_final = np.where(expanded, m_star, round(p.m_phase2))
    return _wrap(expanded, m_final, rejected, F2IN1, np.ndim(draw.x) == 0)


def run_s2in1(draw: StatisticDraw, scenario: EffectScenario, p: DesignParams, m_phase3: float) -> TrialOutcome:
    """Original design: expand to a fixed ``m_phase3`` total events."""
    if m_phase3 <= p.m1:
        raise ValueError("m_phase3 must exceed m1")
    m_phase3 = round(m_phase3)
    m1 = round(p.m1)
    m2 = m_phase3 - m1
    expanded = np.asarray(draw.x) > p.c
    z2_incr = np.asarray(draw.z2_incr_unit) + logrank_drift(scenario.hr_os, m2)
    z2 = np.asarray(draw.z1) * math.sqrt(m1 / m_phase3) + z2_incr * math.sqrt(m2 / m_phase3)
    rejected = np.where(expanded, z2 > p.z_alpha, _phase2_branch(draw, p))
    m_final = np.where(expanded, m_phase3, round(p.m_phase2))
    return _wrap(expanded, m_final, rejected, f"{S2IN1_PREFIX}{m_phase3}", np.ndim(draw.x) == 0)


def run_chw(draw: StatisticDraw, scenario: EffectScenario, p: DesignParams) -> TrialOutcome:
    """Flexible design tested with the pre-weighted combination statistic."""
    expanded = np.asarray(draw.x) > p.c
    m_star, _, z2_incr = _adapt(draw, scenario, p)
    rejected = np.where(expanded, chw_statistic(np.asarray(draw.z1), z2_incr, p) > p.z_alpha,
                        _phase2_branch(draw, p))
    m_final = np.where(expanded, m_star, round(p.m_phase2))
    return _wrap(expanded, m_final, rejected, CHW, np.ndim(draw.x) == 0)


def default_designs(p: DesignParams) -> list[str]:
    return [F2IN1, f"{S2IN1_PREFIX}{round(p.m_total)}", f"{S2IN1_PREFIX}{round(p.m_max)}", CHW]


def resolve_design(label: str, p: DesignParams) -> str:
    """Normalise a design label; ``S2in1-planned`` and ``S2in1-max`` map to
    the event totals of ``p``."""
    if label in (F2IN1, CHW):
        return label
    if label.startswith(S2IN1_PREFIX):
        tail = label[len(S2IN1_PREFIX):]
        if tail == "planned":
            return f"{S2IN1_PREFIX}{round(p.m_total)}"
        if tail == "max":
            return f"{S2IN1_PREFIX}{round(p.m_max)}"
        try:
            m = int(tail)
        except ValueError:
            pass
        else:
            if m > p.m1:
                return label
    raise ValueError(f"unknown design label {label!r}")


def run_design(label: str, draw: StatisticDraw, scenario: EffectScenario, p: DesignParams) -> TrialOutcome:
    label = resolve_design(label, p)
    if label == F2IN1:
        return run_f2in1(draw, scenario, p)
    if label == CHW:
        return run_chw(draw, scenario, p)
    return run_s2in1(draw, scenario, p, int(label[len(S2IN1_PREFIX):]))


# -- aggregation ---------------------------------------------------------------


def _binomial_se(k, n):
    if n == 0:
        return math.nan
    q = k / n
    return math.sqrt(q * (1.0 - q) / n)


def _ratio(a, b):
    return a / b if b else math.nan


@dataclass
class OCSummary:
    """Operating characteristics of one design in one scenario.

    Conditional quantities are NaN when their branch is empty. Duration fields
    are ``None`` unless an accrual model was supplied; they rest on that
    model's assumptions.
    """

    design_label: str
    n_replicates: int
    p_expand: float
    power_overall: float
    power_phase2_cond: float
    power_phase3_cond: float
    expected_events_overall: float
    expected_events_phase2_cond: float
    expected_events_phase3_cond: float
    mc_se: dict = field(default_factory=dict)
    expected_duration_overall: float | None = None
    expected_duration_phase2_cond: float | None = None
    expected_duration_phase3_cond: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OCTally:
    """Integer tallies behind an :class:`OCSummary`; merging is exact."""

    design_label: str
    n: int = 0
    n_expand: int = 0
    rej_expand: int = 0
    rej_stay: int = 0
    events_expand: int = 0
    events_stay: int = 0
    duration_expand: float = 0.0
    duration_stay: float = 0.0
    has_duration: bool = False

    @classmethod
    def from_outcome(cls, out: TrialOutcome) -> "OCTally":
        exp = np.atleast_1d(np.asarray(out.expanded, dtype=bool))
        rej = np.atleast_1d(np.asarray(out.rejected, dtype=bool))
        m = np.atleast_1d(np.asarray(out.m_final, dtype=np.int64))
        tally = cls(
            out.design_label,
            n=int(exp.size),
            n_expand=int(exp.sum()),
            rej_expand=int((rej & exp).sum()),
            rej_stay=int((rej & ~exp).sum()),
            events_expand=int(m[exp].sum()),
            events_stay=int(m[~exp].sum()),
        )
        if out.duration_months is not None:
            d = np.atleast_1d(np.asarray(out.duration_months, dtype=float))
            tally.duration_expand = float(d[exp].sum())
            tally.duration_stay = float(d[~exp].sum())
            tally.has_duration = True
        return tally

    def __add__(self, other: "OCTally") -> "OCTally":
        if other.design_label != self.design_label:
            raise ValueError("cannot merge tallies of different designs")
        return OCTally(
            self.design_label,
            self.n + other.n,
            self.n_expand + other.n_expand,
            self.rej_expand + other.rej_expand,
            self.rej_stay + other.rej_stay,
            self.events_expand + other.events_expand,
            self.events_stay + other.events_stay,
            self.duration_expand + other.duration_expand,
            self.duration_stay + other.duration_stay,
            self.has_duration and other.has_duration,
        )

    def summary(self) -> OCSummary:
        n, ne = self.n, self.n_expand
        ns = n - ne
        rej = self.rej_expand + self.rej_stay
        out = OCSummary(
            design_label=self.design_label,
            n_replicates=n,
            p_expand=ne / n,
            power_overall=rej / n,
            power_phase2_cond=_ratio(self.rej_stay, ns),
            power_phase3_cond=_ratio(self.rej_expand, ne),
            expected_events_overall=(self.events_expand + self.events_stay) / n,
            expected_events_phase2_cond=_ratio(self.events_stay, ns),
            expected_events_phase3_cond=_ratio(self.events_expand, ne),
            mc_se={
                "p_expand": _binomial_se(ne, n),
                "power_overall": _binomial_se(rej, n),
                "power_phase2_cond": _binomial_se(self.rej_stay, ns),
                "power_phase3_cond": _binomial_se(self.rej_expand, ne),
            },
        )
        if self.has_duration:
            out.expected_duration_overall = (self.duration_expand + self.duration_stay) / n
            out.expected_duration_phase2_cond = _ratio(self.duration_stay, ns)
            out.expected_duration_phase3_cond = _ratio(self.duration_expand, ne)
        return out


def aggregate(outcomes: TrialOutcome | Iterable[TrialOutcome]) -> OCSummary:
    """Summarise outcomes of a single design.

    Raises:
        ValueError: On an empty input or mixed design labels.
    """
    if isinstance(outcomes, TrialOutcome):
        outcomes = [outcomes]
    tally = None
    for out in outcomes:
        part = OCTally.from_outcome(out)
        if part.n == 0:
            continue
        tally = part if tally is None else tally + part
    if tally is None:
        raise ValueError("no outcomes to aggregate")
    return tally.summary()


# -- accrual and study duration ------------------------------------------------


@dataclass(frozen=True)
class AccrualModel:
    """Uniform enrollment with exponential survival in the control arm.

    Patient ``i`` enrolls at ``i / rate`` months and alternates between arms.
    The treatment hazard is the control hazard times the scenario's HR.
    """

    rate: float = 6.0
    control_median_os: float = 12.0
    control_median_pfs: float = 8.0
    n_cap_phase2: int = 180
    n_cap_phase3: int = 500

    def __post_init__(self):
        if min(self.rate, self.control_median_os, self.control_median_pfs) <= 0:
            raise ValueError("accrual rate and medians must be positive")
        if min(self.n_cap_phase2, self.n_cap_phase3) < 1:
            raise ValueError("patient caps must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def expected_events(months: float, hr: float, control_median: float, rate: float, n_cap: int) -> float:
    """Expected events by calendar time ``months``."""
    enroll = np.arange(n_cap) / rate
    on = enroll <= months
    hazard = math.log(2.0) / control_median * np.where(np.arange(n_cap) % 2 == 0, 1.0, hr)
    return float(-np.expm1(-hazard[on] * (months - enroll[on])).sum())


def expected_duration(m_target: float, scenario: EffectScenario, accrual: AccrualModel,
                      n_cap: int | None = None, endpoint: str = "os") -> float:
    """Earliest calendar month at which ``m_target`` events are expected.

    ``endpoint`` selects OS (phase-3 events, default cap ``n_cap_phase3``) or
    PFS (phase-2 events, default cap ``n_cap_phase2``).

    Raises:
        SaturationError: If ``m_target`` is not below the number of patients.
    """
    if endpoint == "os":
        hr, median = scenario.hr_os, accrual.control_median_os
        n_cap = accrual.n_cap_phase3 if n_cap is None else n_cap
    elif endpoint == "pfs":
        hr, median = scenario.hr_pfs, accrual.control_median_pfs
        n_cap = accrual.n_cap_phase2 if n_cap is None else n_cap
    else:
        raise ValueError(f"unknown endpoint {endpoint!r}")
    if m_target <= 0:
        return 0.0
    if m_target >= n_cap:
        raise SaturationError(m_target, n_cap)

    def short(months):
        return expected_events(months, hr, median, accrual.rate, n_cap) - m_target

    hi = max(1.0, n_cap / accrual.rate)
    while short(hi) < 0:
        hi *= 2.0
    return nm.find_root(short, nm.Bracket.around(short, 0.0, hi), tol=1e-9)


def calibrate_accrual(rate: float = 6.0, interim_month: float = 20.0, interim_events: float = 60,
                      phase2_month: float = 29.0, phase2_events: float = 118,
                      reference: EffectScenario = EffectScenario(0.55, 0.55, 0.1, 0.3),
                      n_cap_phase2: int = 180, n_cap_phase3: int = 500) -> AccrualModel:
    """Solve the control medians that place ``interim_events`` OS events at
    ``interim_month`` and ``phase2_events`` PFS events at ``phase2_month``
    under the ``reference`` scenario."""

    def solve(month, target, hr, n_cap):
        def gap(median):
            return target - expected_events(month, hr, median, rate, n_cap)
        return nm.find_root(gap, nm.Bracket.around(gap, 0.05, 1000.0), tol=1e-10)

    return AccrualModel(
        rate=rate,
        control_median_os=solve(interim_month, interim_events, reference.hr_os, n_cap_phase3),
        control_median_pfs=solve(phase2_month, phase2_events, reference.hr_pfs, n_cap_phase2),
        n_cap_phase2=n_cap_phase2,
        n_cap_phase3=n_cap_phase3,
    )


class _DurationTable:
    """Memoised study duration by final event count."""

    def __init__(self, scenario, accrual):
        self.scenario, self.accrual = scenario, accrual
        self.cache = {}

    def lookup(self, m_final, expanded, p):
        m_final = np.atleast_1d(m_final)
        expanded = np.atleast_1d(expanded)
        out = np.empty(m_final.shape)
        for m, e in set(zip(m_final.tolist(), expanded.tolist())):
            key = (m, e)
            if key not in self.cache:
                endpoint = "os" if e else "pfs"
                self.cache[key] = expected_duration(m, self.scenario, self.accrual, endpoint=endpoint)
            out[(m_final == m) & (expanded == e)] = self.cache[key]
        return out


# -- drivers -------------------------------------------------------------------


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("TWOIN1_THREADS", "1"))
    return max(1, int(threads))


def _chunks(replicates: int, chunk_size: int):
    for k, start in enumerate(range(0, replicates, chunk_size)):
        yield k, min(chunk_size, replicates - start)


def _map_chunks(fn, replicates, chunk_size, threads):
    jobs = list(_chunks(replicates, chunk_size))
    threads = resolve_threads(threads)
    if threads == 1:
        return [fn(k, size) for k, size in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def simulate(scenario: EffectScenario, p: DesignParams, designs: Sequence[str] | None = None,
             replicates: int = 10_000, seed: int = 0, threads: int | None = None,
             accrual: AccrualModel | None = None, chunk_size: int = CHUNK_SIZE) -> dict[str, OCSummary]:
    """Operating characteristics of several designs on common random numbers.

    Returns a mapping from design label to summary, in the order requested.
    """
    if replicates < 1:
        raise ValueError("replicates must be positive")
    labels = [resolve_design(d, p) for d in (designs or default_designs(p))]
    durations = _DurationTable(scenario, accrual) if accrual is not None else None

    def work(k, size):
        draw = draw_replicate(scenario, p, stream(seed, k), size=size)
        tallies = {}
        for label in labels:
            out = run_design(label, draw, scenario, p)
            if durations is not None:
                out.duration_months = durations.lookup(out.m_final, out.expanded, p)
            tallies[label] = OCTally.from_outcome(out)
        return tallies

    parts = _map_chunks(work, replicates, chunk_size, threads)
    total = {label: parts[0][label] for label in labels}
    for part in parts[1:]:
        for label in labels:
            total[label] = total[label] + part[label]
    return {label: total[label].summary() for label in labels}


@dataclass
class EmpiricalCurve:
    """Simulated null type-I curve of the flexible design, kept as counts.

    For each cutoff: ``stay_reject`` counts replicates with ``X <= c`` and
    ``Y > z_alpha``; ``expand_reject`` those with ``X > c`` and a rejecting
    final statistic; ``expand_both`` those with ``X > c`` where both routes
    would reject. ``y_reject`` counts ``Y > z_alpha`` regardless of X, the
    curve's limit for large cutoffs.
    """

    c_grid: np.ndarray
    stay_reject: np.ndarray
    expand_reject: np.ndarray
    expand_both: np.ndarray
    y_reject: int
    n: int

    @property
    def phase2(self) -> np.ndarray:
        return self.stay_reject / self.n

    @property
    def phase3(self) -> np.ndarray:
        return self.expand_reject / self.n

    @property
    def total(self) -> np.ndarray:
        return (self.stay_reject + self.expand_reject) / self.n

    @property
    def se(self) -> np.ndarray:
        q = self.total
        return np.sqrt(q * (1.0 - q) / self.n)

    @property
    def excess(self) -> np.ndarray:
        """Total minus the same-draw large-cutoff limit, i.e. the estimate of
        Pr(X > c, Z2 > z) - Pr(X > c, Y > z)."""
        return (self.expand_reject - (self.y_reject - self.stay_reject)) / self.n

    @property
    def excess_se(self) -> np.ndarray:
        upper_y = self.y_reject - self.stay_reject
        second = (self.expand_reject + upper_y - 2 * self.expand_both) / self.n
        return np.sqrt(np.maximum(second - self.excess**2, 0.0) / self.n)


def empirical_type1_curve(p: DesignParams, c_grid, replicates: int, seed: int = 0,
                          threads: int | None = None, chunk_size: int = CHUNK_SIZE) -> EmpiricalCurve:
    """Simulated null type-I error of the flexible design over a cutoff grid.

    Under the null the final decision on each route does not depend on the
    cutoff, so one pass over the draws yields the whole curve.
    """
    c_grid = np.asarray(c_grid, dtype=float)
    if np.any(np.diff(c_grid) <= 0):
        raise ValueError("c_grid must be strictly increasing")
    null = EffectScenario()
    bins = c_grid.size + 1

    def work(k, size):
        draw = draw_replicate(null, p, stream(seed, k), size=size)
        # x <= c_j  iff  j >= idx
        idx = np.searchsorted(c_grid, draw.x, side="left")
        rej2 = draw.y > p.z_alpha
        rej3 = pooled_final(draw, null, p)[1] > p.z_alpha
        return np.stack([
            np.bincount(idx[rej2], minlength=bins),
            np.bincount(idx[rej3], minlength=bins),
            np.bincount(idx[rej2 & rej3], minlength=bins),
        ])

    counts = sum(_map_chunks(work, replicates, chunk_size, threads))
    below = np.cumsum(counts, axis=1)[:, :-1]
    totals = counts.sum(axis=1)[:, None]
    return EmpiricalCurve(
        c_grid,
        stay_reject=below[0],
        expand_reject=totals[1] - below[1],
        expand_both=totals[2] - below[2],
        y_reject=int(totals[0, 0]),
        n=replicates,
    )
