"""Overall type-I error of the flexible 2-in-1 design as a function of the
interim cutoff, and the minimal safe cutoff C_min.

Under the global null, X, Y and Z1 are standard normal. The phase-2 route
rejects when ``X <= c`` and ``Y > z_alpha``; the phase-3 route rejects when
``X > c`` and the conventional final statistic exceeds ``z_alpha``. Given Z1,
the surrogate X and the final statistic are independent, so the phase-3
probability is a one-dimensional integral over Z1, split at the promising
threshold W. All three semi-infinite integrals are mapped to (0, 1) and
evaluated with a fixed composite Gauss-Legendre rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .design import DesignParams, adapted_total, info_fraction, m2_uncapped, promising_threshold

UNBOUNDED_BELOW = -math.inf

SCAN_LO, SCAN_HI, SCAN_STEP = -6.0, 6.0, 0.05


@dataclass(frozen=True)
class Type1Breakdown:
    phase2_term: float
    phase3_term: float

    @property
    def total(self) -> float:
        return self.phase2_term + self.phase3_term


@dataclass(frozen=True)
class CminResult:
    """Minimal interim cutoff keeping overall type-I error below alpha.

    ``c_min`` is ``UNBOUNDED_BELOW`` when no cutoff in the search range
    inflates the error. ``crossings`` lists every located crossing of the
    type-I curve with alpha, in increasing order.
    """

    c_min: float
    residual: float
    method: str
    crossings: tuple = field(default=())

    @property
    def unbounded(self) -> bool:
        return self.c_min == UNBOUNDED_BELOW

    def describe(self) -> str:
        return "unbounded-below" if self.unbounded else f"{self.c_min:.6f}"


def _as_column(c):
    return np.atleast_1d(np.asarray(c, dtype=float))[:, None]


def _surrogate_given_z1(z1, c, rho_xz):
    # Pr(X > c | Z1 = z1) under the null
    return nm.std_normal_cdf((rho_xz * z1 - c) / math.sqrt(1.0 - rho_xz**2))


def _phase2_curve(c, p: DesignParams, rule: nm.QuadratureRule) -> np.ndarray:
    cc = _as_column(c)
    s = rule.nodes[None, :]
    x, jac = nm.lower_tail_map(cc, s)
    r = p.rho_xy
    vals = nm.std_normal_cdf((r * x - p.z_alpha) / math.sqrt(1.0 - r * r)) * nm.std_normal_pdf(x) * jac
    return vals @ rule.weights


def cap_kink(p: DesignParams) -> float | None:
    """Interim Z1 at which the re-estimated total first reaches ``m_max``.

    ``None`` when the cap never binds on (0, W), i.e. ``m_max == m1 + m2``.
    """
    w = promising_threshold(p)
    if p.m_max <= p.m_total * (1.0 + 1e-12):
        return None

    def excess(z):
        return p.m1 + m2_uncapped(z, p) - p.m_max

    lo = w * 1e-9
    while not np.isfinite(excess(lo)):
        lo *= 10.0
    return nm.find_root(excess, nm.Bracket.around(excess, lo, w), tol=1e-13)


def lower_segment_rule(p: DesignParams, rule: nm.QuadratureRule | None = None, panels=64, order=16):
    """Quadrature rule for the Z1 < W segment with panel edges at its kinks."""
    if rule is not None:
        return rule
    w = promising_threshold(p)
    breaks = [1.0 / (1.0 + w)]  # z1 = 0
    zk = cap_kink(p)
    if zk is not None:
        breaks.append(1.0 / (1.0 + w - zk))
    return nm.gauss_legendre_rule(panels, order, breaks=breaks)


def rejection_given_z1(z1, p: DesignParams):
    """Pr(final conventional statistic > z_alpha | Z1 = z1) under the null,
    with the re-estimated event count applied."""
    m_star = adapted_total(z1, p)
    return nm.std_normal_cdf(
        (np.asarray(z1) * math.sqrt(p.m1) - p.z_alpha * np.sqrt(m_star)) / np.sqrt(m_star - p.m1)
    )


def _phase3_curve(c, p: DesignParams, rule_upper: nm.QuadratureRule, rule_lower: nm.QuadratureRule):
    cc = _as_column(c)
    w = promising_threshold(p)
    t = info_fraction(p)

    s = rule_upper.nodes
    z1, jac = nm.upper_tail_map(w, s)
    reject = nm.std_normal_cdf((z1 * math.sqrt(t) - p.z_alpha) / math.sqrt(1.0 - t))
    base = reject * nm.std_normal_pdf(z1) * jac
    upper = (_surrogate_given_z1(z1[None, :], cc, p.rho_xz) * base[None, :]) @ rule_upper.weights

    s = rule_lower.nodes
    z1, jac = nm.lower_tail_map(w, s)
    base = rejection_given_z1(z1, p) * nm.std_normal_pdf(z1) * jac
    lower = (_surrogate_given_z1(z1[None, :], cc, p.rho_xz) * base[None, :]) @ rule_lower.weights
    return upper + lower


def _check(values, what):
    if not np.all(np.isfinite(values)):
        raise nm.NumericalError(f"non-finite {what}")
    return values


def phase2_term(c: float, p: DesignParams, rule: nm.QuadratureRule = nm.DEFAULT_RULE) -> float:
    """Pr(Y > z_alpha, X <= c) under the global null."""
    return float(_check(_phase2_curve(c, p, rule), "phase-2 term")[0])


def phase3_term(c: float, p: DesignParams, rule: nm.QuadratureRule = nm.DEFAULT_RULE,
                lower_rule: nm.QuadratureRule | None = None) -> float:
    """Pr(Z2 > z_alpha, X > c) under the global null with re-estimation active."""
    lower_rule = lower_segment_rule(p, lower_rule)
    return float(_check(_phase3_curve(c, p, rule, lower_rule), "phase-3 term")[0])


def overall_type1(c: float, p: DesignParams, rule: nm.QuadratureRule = nm.DEFAULT_RULE) -> Type1Breakdown:
    """Overall type-I error at cutoff ``c``, split by route."""
    return Type1Breakdown(phase2_term(c, p, rule), phase3_term(c, p, rule))


def type1_curve(c_grid, p: DesignParams, rule: nm.QuadratureRule = nm.DEFAULT_RULE):
    """Vectorised phase-2 and phase-3 terms over a grid of cutoffs."""
    lower_rule = lower_segment_rule(p)
    ph2 = _check(_phase2_curve(c_grid, p, rule), "phase-2 term")
    ph3 = _check(_phase3_curve(c_grid, p, rule, lower_rule), "phase-3 term")
    return ph2, ph3


def crossings(c_grid, excess) -> list[tuple[int, int]]:
    """Index pairs ``(i, i+1)`` where ``excess`` changes sign along the grid."""
    pos = np.asarray(excess) > 0.0
    idx = np.nonzero(pos[:-1] != pos[1:])[0]
    return [(int(i), int(i) + 1) for i in idx]


def solve_cmin(p: DesignParams, lo: float = SCAN_LO, hi: float = SCAN_HI, step: float = SCAN_STEP,
               tol: float = 1e-8) -> CminResult:
    """Solve overall type-I error = alpha for the cutoff.

    The error curve is scanned on ``[lo, hi]``; every sign change is polished
    with :func:`numerics.find_root` and the largest root is returned, since
    every cutoff above C_min must be safe.
    """
    grid = np.arange(lo, hi + 0.5 * step, step)
    rule_lower = lower_segment_rule(p)

    def excess(c):
        return float(
            _phase2_curve(c, p, nm.DEFAULT_RULE)[0] + _phase3_curve(c, p, nm.DEFAULT_RULE, rule_lower)[0]
        ) - p.alpha

    ph2, ph3 = type1_curve(grid, p)
    diff = ph2 + ph3 - p.alpha
    pairs = crossings(grid, diff)
    if not pairs:
        if np.all(diff < 0):
            return CminResult(UNBOUNDED_BELOW, float(-diff.max()), "analytic")
        raise nm.NumericalError(f"type-I error exceeds alpha on the whole range [{lo}, {hi}]")
    roots = []
    for i, j in pairs:
        bracket = nm.Bracket(grid[i], grid[j], diff[i], diff[j])
        roots.append(nm.find_root(excess, bracket, tol=tol))
    if len(roots) > 1:
        warnings.warn(f"type-I curve crosses alpha {len(roots)} times at {roots}; using the largest")
    c_min = roots[-1]
    return CminResult(c_min, abs(excess(c_min)), "analytic", tuple(roots))


def empirical_cmin(p: DesignParams, replicates: int = 1_000_000, seed: int = 0, step: float = 0.005,
                   lo: float = SCAN_LO, hi: float = SCAN_HI, threads: int | None = None,
                   z_margin: float = 3.0) -> CminResult:
    """Grid search for C_min on a simulated null distribution.

    The empirical curve is evaluated on a grid of spacing ``step`` and compared
    with the same draws' estimate of Pr(Y > z_alpha), its large-cutoff limit.
    C_min is the first downward crossing after the last grid point whose excess
    exceeds ``z_margin`` standard errors, interpolated linearly. Where the true
    curve merely touches alpha (the far tail, or no re-estimation at all) the
    excess is pure noise and is not mistaken for inflation.
    """
    from .sim import empirical_type1_curve

    if replicates < 100_000:
        raise ValueError("empirical C_min needs at least 100000 replicates")
    grid = np.arange(lo, hi + 0.5 * step, step)
    curve = empirical_type1_curve(p, grid, replicates, seed, threads=threads)
    diff, se = curve.excess, curve.excess_se
    signif = np.nonzero(diff > z_margin * se)[0]
    if signif.size == 0:
        return CminResult(UNBOUNDED_BELOW, float(abs(diff.max())), "empirical")
    after = np.nonzero(diff[signif[-1]:] <= 0.0)[0]
    if after.size == 0:
        raise nm.NumericalError(f"empirical type-I error stays above alpha up to c={hi}")
    j = signif[-1] + after[0]
    i = j - 1
    frac = diff[i] / (diff[i] - diff[j])
    c_min = float(grid[i] + frac * (grid[j] - grid[i]))
    roots = tuple(
        float(grid[a] + diff[a] / (diff[a] - diff[b]) * (grid[b] - grid[a])) for a, b in crossings(grid, diff)
    )
    return CminResult(c_min, float(min(abs(diff[i]), abs(diff[j]))), "empirical", roots)
