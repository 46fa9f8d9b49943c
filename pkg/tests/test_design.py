import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from twoin1 import design as dz
from twoin1.design import DesignParams, EffectScenario
from twoin1.numerics import DomainError

P = DesignParams()


def test_defaults_and_derived_quantities():
    assert P.m_total == 180
    assert P.cap_ratio == pytest.approx(330 / 180)
    assert dz.info_fraction(P) == pytest.approx(1 / 3)
    assert P.z_alpha == pytest.approx(norm.ppf(0.975), abs=1e-13)


def test_promising_threshold_values():
    # independently: z_a*sqrt(t) + z_b*sqrt(t(1-t))
    za, zb = norm.ppf(0.975), norm.ppf(0.9)
    t = 1 / 3
    assert dz.promising_threshold(P) == pytest.approx(za * math.sqrt(t) + zb * math.sqrt(t * (1 - t)), abs=1e-12)
    assert dz.promising_threshold(P) == pytest.approx(1.7357149, abs=1e-7)
    half = P.with_(info_fraction=0.5)
    assert dz.promising_threshold(half) == pytest.approx(2.026680, abs=1e-6)


@pytest.mark.parametrize(
    "changes",
    [
        dict(alpha=0.0), dict(alpha=0.5), dict(power_target=1.0), dict(m1=0), dict(m2=-1),
        dict(m_max=100), dict(rho_xy=1.0), dict(rho_xz=-0.1), dict(m_phase2=10), dict(c=math.inf),
    ],
)
def test_invalid_designs_rejected(changes):
    with pytest.raises(ValueError):
        P.with_(**changes)


def test_rho_order_only_warns():
    with pytest.warns(UserWarning, match="rho_xz"):
        DesignParams(rho_xy=0.4, rho_xz=0.6)


def test_with_cap_ratio_and_info_fraction():
    q = P.with_(cap_ratio=2, info_fraction=0.5)
    assert (q.m1, q.m2, q.m_max) == (90, 90, 360)
    assert P.with_(cap_ratio=math.inf).m_max == pytest.approx(dz.UNBOUNDED_CAP_RATIO * 180)


def test_conditional_power_closed_form():
    # brute force: final Z = sqrt(m1/n) Z1 + sqrt(m2/n) Z2inc with drift estimated from z1,
    # critical value from the planned split, information m2* for the increment
    z1, m2s = 1.2, 150.0
    drift = z1 / math.sqrt(P.m1)
    crit = (P.z_alpha * math.sqrt(P.m_total) - z1 * math.sqrt(P.m1)) / math.sqrt(P.m2)
    expected = 1 - norm.cdf(crit - drift * math.sqrt(m2s))
    assert dz.conditional_power(z1, m2s, P) == pytest.approx(expected, abs=1e-14)


def test_conditional_power_domain():
    with pytest.raises(DomainError):
        dz.conditional_power(1.0, 0.0, P)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.2, max_value=1.7357))
def test_cp_inverts_reestimation(z1):
    m2 = dz.m2_uncapped(z1, P)
    assert dz.conditional_power(z1, m2, P) == pytest.approx(0.9, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=0.05, max_value=3.0), st.floats(min_value=1.0, max_value=500.0),
       st.floats(min_value=1.0, max_value=500.0))
def test_cp_monotone_in_events(z1, a, b):
    lo, hi = sorted((a, b))
    assert dz.conditional_power(z1, hi, P) >= dz.conditional_power(z1, lo, P) - 1e-15


def test_reestimate_continuity_at_threshold():
    w = dz.promising_threshold(P)
    below = dz.adapted_total(w * (1 - 1e-12), P)
    assert abs(below - P.m_total) < 1e-6
    assert dz.m2_uncapped(w, P) == pytest.approx(P.m2, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=-5, max_value=5))
def test_adapted_total_bounds(z1):
    m = dz.adapted_total(z1, P)
    assert P.m_total - 1e-9 <= m <= P.m_max + 1e-9
    if z1 <= 0:
        assert m == P.m_max


def test_adapted_total_nonincreasing():
    z = np.linspace(-2, 4, 2001)
    m = dz.adapted_total(z, P)
    assert np.all(np.diff(m) <= 1e-9)


def test_reestimate_cases():
    hi = dz.reestimate(2.5, P)
    assert (hi.m2_star, hi.m_star, hi.cap_hit) == (120, 180, False)
    neg = dz.reestimate(-0.3, P)
    assert neg.cap_hit and neg.m_star == 330 and neg.m2_star == 270
    mid = dz.reestimate(1.5, P)
    assert mid.m_star == mid.m2_star + 60
    assert mid.m2_star == round(mid.m2_star_exact)


def test_chw_weights():
    assert dz.chw_statistic(1.0, 1.0, P) == pytest.approx(math.sqrt(1 / 3) + math.sqrt(2 / 3))


@pytest.mark.parametrize("hr,events", [(0.55, 118), (0.617, 180), (0.7, 330)])
def test_logrank_events(hr, events):
    assert dz.logrank_events(hr, P) == events


@pytest.mark.parametrize("hr", [0.0, 1.0, 1.3, -0.5])
def test_logrank_events_domain(hr):
    with pytest.raises(DomainError):
        dz.logrank_events(hr, P)


def test_orr_cutoff():
    expected = 0.15 / math.sqrt((0.25 * 0.75 + 0.1 * 0.9) / 60)
    assert dz.orr_z_cutoff(0.1, 0.25, 60) == pytest.approx(expected, abs=1e-12)
    assert dz.orr_z_cutoff(0.1, 0.25, 60) == pytest.approx(2.206, abs=1e-3)


def test_logrank_drift():
    assert dz.logrank_drift(1.0, 100) == 0.0
    assert dz.logrank_drift(0.5, 64) == pytest.approx(4 * math.log(2))


def test_effect_scenario_validation():
    assert EffectScenario().is_null
    assert not EffectScenario(hr_os=0.7).is_null
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        with pytest.raises(ValueError):
            EffectScenario(orr_t=1.0)
        with pytest.raises(ValueError):
            EffectScenario(hr_pfs=0.0)
