"""Design parameters and closed-form design calculators.

Every quantity here lives on a single information scale. For time-to-event
endpoints that scale is the number of events, and the interim statistic Z1
is the log-rank statistic after ``m1`` events.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np

from .numerics import DomainError, std_normal_cdf, std_normal_quantile

# Stand-in for an unbounded cap when evaluating type-I error analytically.
UNBOUNDED_CAP_RATIO = 1e6


@dataclass(frozen=True)
class DesignParams:
    """Fixed design quantities of a flexible 2-in-1 trial.

    Attributes:
        alpha: One-sided significance level.
        power_target: Nominal power ``1 - beta``.
        m1: Phase-3 endpoint events at the interim analysis.
        m2: Planned post-interim phase-3 events.
        m_max: Cap on total phase-3 events after re-estimation.
        rho_xy: Correlation of the surrogate statistic X with Y.
        rho_xz: Correlation of X with the interim phase-3 statistic Z1.
        c: Interim cutoff; the trial expands when ``X > c``.
        m_phase2: Final event count if the trial stays in phase 2.
    """

    alpha: float = 0.025
    power_target: float = 0.9
    m1: float = 60
    m2: float = 120
    m_max: float = 330
    rho_xy: float = 0.7
    rho_xz: float = 0.5
    c: float = 2.206
    m_phase2: float = 118

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if not 0.0 < self.power_target < 1.0:
            raise ValueError(f"power_target must lie in (0, 1), got {self.power_target}")
        if not 0.0 < self.m1:
            raise ValueError("m1 must be positive")
        if not 0.0 < self.m2:
            raise ValueError("m2 must be positive")
        if self.m_max < self.m_total - 1e-9:
            raise ValueError(f"m_max={self.m_max} is below m1 + m2 = {self.m_total}")
        for name in ("rho_xy", "rho_xz"):
            rho = getattr(self, name)
            if not 0.0 <= rho < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {rho}")
        if self.m_phase2 < self.m1:
            raise ValueError("m_phase2 must be at least m1")
        if not math.isfinite(self.c):
            raise ValueError("cutoff c must be finite")
        if self.rho_xz > self.rho_xy:
            warnings.warn(
                f"rho_xz={self.rho_xz} exceeds rho_xy={self.rho_xy}; "
                "type-I error control of the unadapted design is not guaranteed",
                stacklevel=3,
            )

    @property
    def m_total(self) -> float:
        return self.m1 + self.m2

    @property
    def z_alpha(self) -> float:
        return std_normal_quantile(1.0 - self.alpha)

    @property
    def z_beta(self) -> float:
        return std_normal_quantile(self.power_target)

    @property
    def cap_ratio(self) -> float:
        return self.m_max / self.m_total

    def with_(self, **changes) -> "DesignParams":
        """Copy with fields replaced.

        Besides the regular fields, accepts ``cap_ratio`` (sets ``m_max`` as a
        multiple of ``m1 + m2``) and ``info_fraction`` (re-splits ``m1 + m2``
        keeping the total).
        """
        ratio = changes.pop("cap_ratio", None)
        frac = changes.pop("info_fraction", None)
        out = replace(self, **changes) if changes else self
        if frac is not None:
            total = out.m_total
            m1 = frac * total
            out = replace(out, m1=m1, m2=total - m1, m_phase2=max(out.m_phase2, m1))
        if ratio is not None:
            if math.isinf(ratio):
                ratio = UNBOUNDED_CAP_RATIO
            out = replace(out, m_max=ratio * out.m_total)
        return out

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EffectScenario:
    """True state of nature for simulation.

    ``n_per_arm_interim`` is the number of subjects per arm contributing to the
    ORR comparison at the interim.
    """

    hr_os: float = 1.0
    hr_pfs: float = 1.0
    orr_c: float = 0.1
    orr_t: float = 0.1
    n_per_arm_interim: int = 60
    label: str = ""

    def __post_init__(self):
        if self.hr_os <= 0 or self.hr_pfs <= 0:
            raise ValueError("hazard ratios must be positive")
        for name in ("orr_c", "orr_t"):
            p = getattr(self, name)
            if not 0.0 < p < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {p}")
        if self.n_per_arm_interim < 1:
            raise ValueError("n_per_arm_interim must be at least 1")

    @property
    def is_null(self) -> bool:
        return self.hr_os == 1.0 and self.hr_pfs == 1.0 and self.orr_c == self.orr_t

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SsrResult:
    """Outcome of interim event-size re-estimation.

    ``m2_star`` and ``m_star`` are rounded to whole events; ``m2_star_exact``
    keeps the unrounded post-interim size after capping.
    """

    m2_star: int
    m_star: int
    cap_hit: bool
    cp_at_planned: float
    m2_star_exact: float


def info_fraction(p: DesignParams) -> float:
    """Interim information fraction ``m1 / (m1 + m2)``."""
    return p.m1 / p.m_total


def promising_threshold(p: DesignParams) -> float:
    """Interim Z1 level below which conditional power at the planned size
    falls short of the target."""
    t = info_fraction(p)
    return p.z_alpha * math.sqrt(t) + p.z_beta * math.sqrt(t * (1.0 - t))


def conditional_power(z1, m2_star, p: DesignParams):
    """Conditional power of the final test given Z1 = ``z1`` and ``m2_star``
    post-interim events.

    The critical value for the post-interim increment is fixed by the planned
    split ``(m1, m2)``, the form for which the re-estimation rule in
    :func:`reestimate` is the exact inverse at the target power.

    Raises:
        DomainError: If ``m2_star`` is not positive.
    """
    m2_star = np.asarray(m2_star, dtype=float)
    if np.any(m2_star <= 0):
        raise DomainError("m2_star must be positive")
    z1 = np.asarray(z1, dtype=float)
    crit = (p.z_alpha * math.sqrt(p.m_total) - z1 * math.sqrt(p.m1)) / math.sqrt(p.m2)
    out = 1.0 - std_normal_cdf(crit - z1 * np.sqrt(m2_star / p.m1))
    return float(out) if np.ndim(out) == 0 else out


def m2_uncapped(z1, p: DesignParams):
    """Post-interim events giving conditional power equal to the target.

    Finite only for ``z1 > 0``; returns ``inf`` for ``z1 <= 0``.
    """
    z1 = np.asarray(z1, dtype=float)
    crit = (p.z_alpha * math.sqrt(p.m_total) - z1 * math.sqrt(p.m1)) / math.sqrt(p.m2)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(z1 > 0, p.m1 / (z1 * z1) * (crit + p.z_beta) ** 2, np.inf)
    return float(out) if out.ndim == 0 else out


def adapted_total(z1, p: DesignParams, rounded: bool = False):
    """Total phase-3 events after re-estimation, vectorised over ``z1``.

    ``m1 + m2`` when ``z1 >= W``; otherwise ``min(m_max, m1 + m2*(z1))`` with
    ``z1 <= 0`` treated as hitting the cap.
    """
    z1 = np.asarray(z1, dtype=float)
    w = promising_threshold(p)
    grown = np.minimum(p.m_max, p.m1 + m2_uncapped(z1, p))
    # z1 >= W never shrinks the plan; guard against rounding just below W
    grown = np.maximum(grown, p.m_total)
    out = np.where(z1 >= w, p.m_total, grown)
    if rounded:
        out = np.rint(out)
    return float(out) if out.ndim == 0 else out


def reestimate(z1: float, p: DesignParams) -> SsrResult:
    """Re-estimate the post-interim event count from the interim Z1."""
    z1 = float(z1)
    w = promising_threshold(p)
    cp_planned = conditional_power(z1, p.m2, p)
    if z1 >= w:
        return SsrResult(int(round(p.m2)), int(round(p.m_total)), False, cp_planned, float(p.m2))
    wanted = p.m1 + m2_uncapped(z1, p)
    cap_hit = wanted >= p.m_max
    m_star = min(p.m_max, wanted)
    m_star_int = int(round(m_star))
    return SsrResult(
        m2_star=m_star_int - int(round(p.m1)),
        m_star=m_star_int,
        cap_hit=bool(cap_hit),
        cp_at_planned=cp_planned,
        m2_star_exact=m_star - p.m1,
    )


def chw_statistic(z1, z2_incr, p: DesignParams):
    """Weighted combination of interim and incremental statistics.

    The weights come from the planned ``m1`` and ``m2`` only.
    """
    return z1 * math.sqrt(p.m1 / p.m_total) + z2_incr * math.sqrt(p.m2 / p.m_total)


def logrank_events(hr: float, p: DesignParams) -> int:
    """Events needed by a 1:1 log-rank test to detect ``hr`` (Schoenfeld)."""
    if not 0.0 < hr < 1.0:
        raise DomainError(f"hazard ratio must lie in (0, 1), got {hr}")
    return int(round(4.0 * (p.z_alpha + p.z_beta) ** 2 / math.log(hr) ** 2))


def orr_z_cutoff(orr_c: float, orr_t: float, n_per_arm: int) -> float:
    """Unpooled two-proportion z statistic at the given response rates."""
    var = (orr_t * (1.0 - orr_t) + orr_c * (1.0 - orr_c)) / n_per_arm
    return (orr_t - orr_c) / math.sqrt(var)


def logrank_drift(hr, events):
    """Mean of the 1:1 log-rank statistic after ``events`` events."""
    out = np.sqrt(events) / 2.0 * -np.log(hr)
    return float(out) if np.ndim(out) == 0 else out
