import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoin1 import sim
from twoin1.design import DesignParams, EffectScenario, adapted_total, reestimate

P = DesignParams()
NULL = EffectScenario(label="null")
ALT = EffectScenario(hr_os=0.55, hr_pfs=0.55, orr_c=0.1, orr_t=0.3)


def test_correlation_matrix_structure():
    r = sim.correlation_matrix(P)
    assert r[1, 2] == pytest.approx(P.rho_xy * P.rho_xz)
    assert np.all(np.linalg.eigvalsh(r) > 0)


def test_null_draw_correlations():
    draw = sim.draw_replicate(NULL, P, sim.stream(3, 0), size=1_000_000)
    corr = np.corrcoef(np.stack([draw.x, draw.y, draw.z1, draw.z2_incr_unit]))
    assert corr[0, 1] == pytest.approx(P.rho_xy, abs=0.005)
    assert corr[0, 2] == pytest.approx(P.rho_xz, abs=0.005)
    assert np.abs(corr[3, [0, 2]]).max() < 0.005


def test_draw_moments_match_target():
    draw = sim.draw_replicate(ALT, P, sim.stream(3, 0), size=200_000)
    data = np.stack([draw.x, draw.y, draw.z1, draw.z2_incr_unit])
    means = sim.statistic_means(ALT, P)
    assert data[:3].mean(axis=1) == pytest.approx(means, abs=0.015)
    corr = np.corrcoef(data)
    assert corr[:3, :3] == pytest.approx(sim.correlation_matrix(P), abs=0.01)
    assert np.abs(corr[3, :3]).max() < 0.01


def test_scalar_draw_and_outcome():
    draw = sim.draw_replicate(NULL, P, sim.stream(0, 0))
    assert isinstance(draw.x, float)
    out = sim.run_f2in1(draw, NULL, P)
    assert isinstance(out.expanded, bool) and isinstance(out.m_final, int)


def test_streams_are_reproducible_and_distinct():
    a = sim.stream(11, 2).standard_normal(4)
    assert a == pytest.approx(sim.stream(11, 2).standard_normal(4))
    assert not np.allclose(a, sim.stream(11, 3).standard_normal(4))
    assert not np.allclose(a, sim.stream(12, 2).standard_normal(4))


def test_batch_matches_per_replicate():
    draw = sim.draw_replicate(ALT, P, sim.stream(5, 0), size=300)
    batch = sim.run_f2in1(draw, ALT, P)
    for i in range(0, 300, 37):
        one = sim.StatisticDraw(float(draw.x[i]), float(draw.y[i]), float(draw.z1[i]), float(draw.z2_incr_unit[i]))
        single = sim.run_f2in1(one, ALT, P)
        assert single.expanded == batch.expanded[i]
        assert single.rejected == batch.rejected[i]
        assert single.m_final == batch.m_final[i]


def test_f2in1_uses_reestimated_events():
    draw = sim.draw_replicate(NULL, P, sim.stream(1, 0), size=2000)
    out = sim.run_f2in1(draw, NULL, P)
    exp = out.expanded
    expected = np.rint(adapted_total(draw.z1[exp], P)).astype(int)
    assert np.array_equal(out.m_final[exp], expected)
    assert np.all(out.m_final[~exp] == 118)
    # matches the scalar re-estimation helper
    i = int(np.argmax(exp))
    assert out.m_final[i] == reestimate(draw.z1[i], P).m_star


def test_f2in1_equals_s2in1_without_adaptation():
    q = P.with_(m_max=P.m_total)
    for scen in (NULL, ALT):
        draw = sim.draw_replicate(scen, q, sim.stream(9, 0), size=20_000)
        a = sim.run_f2in1(draw, scen, q)
        b = sim.run_s2in1(draw, scen, q, q.m_total)
        assert np.array_equal(a.rejected, b.rejected)
        assert np.array_equal(a.m_final, b.m_final)
        assert np.array_equal(a.expanded, b.expanded)


def test_chw_equals_conventional_when_plan_kept():
    draw = sim.draw_replicate(ALT, P, sim.stream(4, 0), size=5000)
    keep = draw.z1 >= 1.74
    a = sim.run_chw(draw, ALT, P)
    b = sim.run_f2in1(draw, ALT, P)
    assert np.array_equal(a.rejected[keep], b.rejected[keep])


def test_resolve_design_labels():
    assert sim.resolve_design("S2in1-planned", P) == "S2in1-180"
    assert sim.resolve_design("S2in1-max", P) == "S2in1-330"
    assert sim.resolve_design("S2in1-250", P) == "S2in1-250"
    for bad in ("S2in1-10", "S2in1-x", "foo"):
        with pytest.raises(ValueError):
            sim.resolve_design(bad, P)


def test_aggregate_and_tallies():
    out = sim.TrialOutcome(np.array([True, False, True, False]), np.array([200, 118, 180, 118]),
                           np.array([True, True, False, False]), "F2in1")
    s = sim.aggregate(out)
    assert s.p_expand == 0.5
    assert s.power_overall == 0.5
    assert s.power_phase3_cond == 0.5 and s.power_phase2_cond == 0.5
    assert s.expected_events_phase3_cond == 190
    assert s.expected_events_overall == pytest.approx(154)
    assert s.mc_se["power_overall"] == pytest.approx(math.sqrt(0.25 / 4))
    split = sim.aggregate([
        sim.TrialOutcome(out.expanded[:1], out.m_final[:1], out.rejected[:1], "F2in1"),
        sim.TrialOutcome(out.expanded[1:], out.m_final[1:], out.rejected[1:], "F2in1"),
    ])
    assert split == s


def test_empty_branch_is_nan():
    out = sim.TrialOutcome(np.array([False, False]), np.array([118, 118]), np.array([True, False]), "F2in1")
    s = sim.aggregate(out)
    assert math.isnan(s.power_phase3_cond) and math.isnan(s.expected_events_phase3_cond)


def test_aggregate_rejects_bad_input():
    with pytest.raises(ValueError):
        sim.aggregate([])
    a = sim.TrialOutcome(np.array([True]), np.array([180]), np.array([True]), "F2in1")
    b = sim.TrialOutcome(np.array([True]), np.array([180]), np.array([True]), "S2in1-180")
    with pytest.raises(ValueError):
        sim.aggregate([a, b])


def test_simulate_deterministic_across_threads():
    kw = dict(replicates=50_000, seed=17, chunk_size=4096)
    one = sim.simulate(ALT, P, threads=1, **kw)
    many = sim.simulate(ALT, P, threads=4, **kw)
    assert one == many


def test_simulate_seed_changes_results():
    a = sim.simulate(ALT, P, ["F2in1"], replicates=5000, seed=1)
    b = sim.simulate(ALT, P, ["F2in1"], replicates=5000, seed=2)
    assert a != b


def test_simulate_common_random_numbers():
    res = sim.simulate(ALT, P, replicates=5000, seed=3)
    assert len({round(s.p_expand, 12) for s in res.values()}) == 1
    assert list(res) == ["F2in1", "S2in1-180", "S2in1-330", "F2in1-CHW"]


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("TWOIN1_THREADS", "3")
    assert sim.resolve_threads(None) == 3
    assert sim.resolve_threads(2) == 2


def test_empirical_curve_matches_simulate():
    grid = np.array([-0.596, 0.0, 2.206])
    curve = sim.empirical_type1_curve(P, grid, 40_000, seed=5, chunk_size=4096)
    for j, c in enumerate(grid):
        s = sim.simulate(NULL, P.with_(c=float(c)), ["F2in1"], replicates=40_000, seed=5, chunk_size=4096)["F2in1"]
        assert curve.total[j] == pytest.approx(s.power_overall, abs=1e-12)
    assert np.all(curve.excess_se >= 0)


def test_empirical_curve_thread_invariant():
    grid = np.linspace(-2, 2, 9)
    a = sim.empirical_type1_curve(P, grid, 30_000, seed=8, threads=1, chunk_size=4096)
    b = sim.empirical_type1_curve(P, grid, 30_000, seed=8, threads=3, chunk_size=4096)
    assert np.array_equal(a.stay_reject, b.stay_reject) and np.array_equal(a.expand_reject, b.expand_reject)


# -- accrual -------------------------------------------------------------------

ACCRUAL = sim.AccrualModel()


def test_expected_events_brute_force():
    months, hr, median, rate, n_cap = 30.0, 0.7, 12.0, 6.0, 200
    lam = math.log(2) / median
    total = 0.0
    for i in range(n_cap):
        start = i / rate
        if start <= months:
            h = lam * (1.0 if i % 2 == 0 else hr)
            total += 1 - math.exp(-h * (months - start))
    assert sim.expected_events(months, hr, median, rate, n_cap) == pytest.approx(total, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=61, max_value=400), st.integers(min_value=1, max_value=80))
def test_duration_increases_with_events(m, dm):
    hi = min(m + dm, 480)
    if hi <= m:
        return
    assert sim.expected_duration(hi, ALT, ACCRUAL) > sim.expected_duration(m, ALT, ACCRUAL)


def test_duration_root_hits_target():
    d = sim.expected_duration(180, ALT, ACCRUAL)
    assert sim.expected_events(d, ALT.hr_os, ACCRUAL.control_median_os, ACCRUAL.rate, 500) == pytest.approx(180)


def test_saturation():
    with pytest.raises(sim.SaturationError):
        sim.expected_duration(500, ALT, ACCRUAL)
    with pytest.raises(sim.SaturationError):
        sim.expected_duration(200, ALT, ACCRUAL, endpoint="pfs")


def test_calibrated_accrual_hits_anchors():
    acc = sim.calibrate_accrual()
    ref = EffectScenario(0.55, 0.55, 0.1, 0.3)
    assert sim.expected_duration(60, ref, acc) == pytest.approx(20.0, abs=1e-6)
    assert sim.expected_duration(118, ref, acc, endpoint="pfs") == pytest.approx(29.0, abs=1e-6)


def test_simulate_with_durations_orders_designs():
    res = sim.simulate(ALT, P, replicates=5000, seed=2, accrual=ACCRUAL)
    pairs = sorted((s.expected_events_overall, s.expected_duration_overall) for s in res.values())
    durations = [d for _, d in pairs]
    assert durations == sorted(durations)
