import math

import numpy as np
import pytest
from scipy import stats

from oracles import plain_tail_2x2
from uppertail import ldp, lpp, rates
from uppertail.errors import BudgetError, ConstraintError, DomainError, ParityError


def test_event_threshold_and_validation():
    ev = ldp.LDEvent("upper", 1.0, 10)
    assert ev.threshold == 50.0
    assert list(ev.holds(np.array([49.9, 50.0]))) == [False, True]
    with pytest.raises(DomainError):
        ldp.LDEvent("upper", 0.0, 3)
    with pytest.raises(DomainError):
        ldp.LDEvent("lower", 4.5, 3)
    with pytest.raises(ValueError):
        ldp.LDEvent("sideways", 1.0, 3)


def test_tilt_plan_arrays():
    plan = ldp.TiltPlan(0.25, 0.5)
    scale, coef, const = plan.arrays(4, 4, 4)
    mask = plan.mask(4, 4, 4)
    # strip |r - c| <= 1 on a 4 x 4 grid
    assert mask.sum() == 10
    assert np.allclose(scale[mask], 1 / 0.75) and np.all(scale[~mask] == 1)
    assert np.allclose(const[mask], -math.log(0.75)) and np.all(coef[~mask] == 0)
    assert ldp.TiltPlan(0.3, 0).mask(3, 5, 3).all()
    with pytest.raises(DomainError):
        ldp.TiltPlan(1.0, 0)


def test_untilted_single_site_is_exact():
    est = ldp.importance_estimate(1, 1.0, ldp.TiltPlan(0.0, 0), 200_000, 3)
    se = math.sqrt(math.exp(-5) * (1 - math.exp(-5)) / 200_000) / math.exp(-5)
    assert abs(est.log_p + 5) < 3 * se
    assert est.std_err == pytest.approx(se, rel=0.05)


def test_tilted_single_site():
    est = ldp.importance_estimate(1, 1.0, ldp.TiltPlan(0.6, 0), 100_000, 4)
    assert abs(est.log_p + 5) < 3 * est.std_err
    assert not est.degenerate


def test_two_by_two_against_plain_monte_carlo():
    thr = 5.0 * 2
    est = ldp.importance_estimate(2, 1.0, ldp.TiltPlan(0.3, 0), 200_000, 5)
    exact = ldp.exact_upper_tail(2, 1.0)
    plain = plain_tail_2x2(thr, 2_000_000, 6)
    assert abs(est.log_p - math.log(exact)) < 3 * est.std_err
    assert abs(plain - exact) < 3 * math.sqrt(exact / 2_000_000)


@pytest.mark.parametrize("plan", [ldp.TiltPlan(0.2, 0), ldp.TiltPlan(0.3, 0.5),
                                  ldp.TiltPlan(0.25, 1.0)])
def test_tilts_agree_at_small_n(plan):
    exact = math.log(ldp.exact_upper_tail(4, 1.0))
    est = ldp.importance_estimate(4, 1.0, plan, 100_000, 7)
    assert abs(est.log_p - exact) < 4 * est.std_err + 0.02


def test_moderate_n_against_exact():
    plan = ldp.choose_tilt(10, 1.0, 5000, 8)
    est = ldp.importance_estimate(10, 1.0, plan, 100_000, 8)
    assert est.log_p == pytest.approx(-8.5547, abs=0.3)


def test_estimate_is_worker_invariant():
    plan = ldp.TiltPlan(0.25, 0.5)
    a = ldp.importance_estimate(6, 1.0, plan, 30_000, 9, workers=1)
    b = ldp.importance_estimate(6, 1.0, plan, 30_000, 9, workers=3)
    assert a == b


def test_too_few_trials():
    with pytest.raises(DomainError):
        ldp.importance_estimate(3, 1.0, ldp.TiltPlan(0.2, 0), 10, 1)


def test_zero_hits_flagged():
    est = ldp.importance_estimate(1, 60.0, ldp.TiltPlan(0.0, 0), 1000, 1)
    assert est.log_p == -math.inf and est.degenerate


def test_trials_returned():
    plan = ldp.TiltPlan(0.3, 0)
    est, tr = ldp.importance_estimate(5, 0.5, plan, 2000, 2, return_trials=True)
    assert len(tr["T"]) == 2000 and tr["accepted"].sum() == est.accepted
    assert np.all(tr["dmax"][~tr["accepted"]] == -1)
    assert np.all(tr["dmax"][tr["accepted"]] >= 0)


# -- rejection ----------------------------------------------------------------------


def test_rejection_single_site():
    res = ldp.rejection_conditional_samples(1, 1.0, 200_000, 10)
    p = math.exp(-5)
    assert abs(res.acceptance - p) < 3 * math.sqrt(p * (1 - p) / res.trials)
    assert np.all(res.accepted_T >= 5.0)
    lo, hi = res.acceptance_ci()
    assert lo < p < hi


def test_rejection_gate():
    with pytest.raises(BudgetError) as exc:
        ldp.rejection_conditional_samples(10, 100.0, 10 ** 6, 1)
    assert exc.value.pilot_estimate < 1e-100
    with pytest.raises(BudgetError):
        ldp.rejection_gate(64, 1.0, 10 ** 8)
    assert ldp.rejection_gate(16, 1.0, 10 ** 7) == pytest.approx(
        math.exp(-16 * rates.rate_I(1.0).value))


def test_rejection_agrees_with_exact_and_importance():
    exact = ldp.exact_upper_tail(6, 1.0)
    res = ldp.rejection_conditional_samples(6, 1.0, 400_000, 11)
    k = len(res.accepted_T)
    assert k > 50
    assert stats.binomtest(k, res.trials, exact).pvalue > 0.001
    est = ldp.importance_estimate(6, 1.0, ldp.TiltPlan(0.3, 0.5), 100_000, 12)
    assert abs(est.log_p - math.log(exact)) < 4 * est.std_err + 0.02


def test_rejection_stops_early_and_regenerates_paths():
    res = ldp.rejection_conditional_samples(4, 1.0, 10 ** 6, 13, max_accepted=20,
                                            with_paths=True)
    assert 20 <= len(res.accepted_T) and res.trials < 10 ** 6
    for T, d, g in zip(res.accepted_T, res.accepted_dmax, res.records):
        assert g.weight == pytest.approx(T, rel=1e-12)
        assert g.max_fluct == d


def test_rejection_worker_invariant():
    a = ldp.rejection_conditional_samples(4, 1.0, 200_000, 14, max_accepted=30, workers=1)
    b = ldp.rejection_conditional_samples(4, 1.0, 200_000, 14, max_accepted=30, workers=2)
    # early stopping is block-granular: the shorter run is a prefix of the longer one
    m = min(len(a.accepted_index), len(b.accepted_index))
    assert np.array_equal(a.accepted_index[:m], b.accepted_index[:m])


def test_trial_field_matches_engine():
    res = ldp.rejection_conditional_samples(3, 1.0, 50_000, 15)
    f = ldp.trial_field(15, ldp.TAG_REJECT, 3, res.accepted_index[0])
    assert lpp.last_passage(f).value == pytest.approx(res.accepted_T[0], rel=1e-12)


# -- subadditive bound, midpoint ratio, split ------------------------------------------------


def test_subadditive_bound_small():
    out = ldp.subadditive_bound_check(6, 1.0, 50_000, 16)
    assert out["holds"] and out["gap"] > 0


def test_midpoint_exact_properties():
    rs = [ldp.midpoint_ratio_exact(8, 1.0, k)["ratio"] for k in range(4)]
    assert all(0 < r <= 1 for r in rs)
    assert all(a > b for a, b in zip(rs, rs[1:]))


def test_midpoint_exact_node_convergence():
    a = ldp.midpoint_ratio_exact(10, 1.0, nodes=32)
    b = ldp.midpoint_ratio_exact(10, 1.0, nodes=64)
    assert a["ratio"] == pytest.approx(b["ratio"], rel=1e-8)
    assert b["window_edge_rel"] < 1e-10


def test_midpoint_importance_near_exact():
    exact = ldp.midpoint_ratio_exact(6, 1.0)["ratio"]
    est = ldp.midpoint_ratio_is(6, 1.0, 100_000, 17, plan=ldp.TiltPlan(0.3, 0.5))
    assert abs(est["log_ratio"] - math.log(exact)) < 4 * est["log_ratio_se"] + 0.05


def test_midpoint_errors():
    with pytest.raises(ParityError):
        ldp.midpoint_ratio_exact(7, 1.0)
    with pytest.raises(DomainError):
        ldp.midpoint_ratio_exact(6, 1.0, k=3)
    with pytest.raises(ValueError):
        ldp.midpoint_ratio_experiment([4, 6], 1.0, 100, 1, method="guess")


def test_trend_test():
    assert ldp.trend_test([1, 2, 3], [3.0, 2.0, 1.0], [0, 0, 0])["upward"] is False
    assert ldp.trend_test([1, 2, 3], [1.0, 2.0, 3.0], [0, 0, 0])["upward"] is True
    noisy = ldp.trend_test([1, 2, 3], [1.0, 1.1, 1.2], [1.0, 1.0, 1.0])
    assert noisy["upward"] is False and noisy["slope"] > 0


def test_split_bound():
    assert ldp.split_bound(1, 0.5) == 0.0
    d, t = 2.0, 9
    assert ldp.split_bound(t, d) == pytest.approx(-(t + 1) * rates.rate_I(d - 6 / 10).value)


def test_split_probe():
    out = ldp.two_scale_split_probe(8, 4, 1.5, 0.5, 20_000, 18)
    assert out["holds"]
    assert out["delta"] == pytest.approx(1.0)
    assert out["penalty"] > 0 and out["C_delta"] > 0


def test_split_probe_without_split_has_no_penalty():
    out = ldp.two_scale_split_probe(8, 4, 1.0, 1.0, 20_000, 19)
    assert out["penalty"] == 0.0
    assert out["lemma_bound"] == pytest.approx(out["main_term"])


def test_split_constraints():
    with pytest.raises(ConstraintError):
        ldp.two_scale_split_probe(8, 0, 1.0, 1.0, 1000, 1)
    with pytest.raises(ConstraintError):
        ldp.two_scale_split_probe(8, 4, 1.0, 1.0, 1000, 1, delta=1.5)


def test_tf_flags_infeasible_points():
    out = ldp.conditional_tf_experiment([2, 4, 64], 1.0, 100_000, 20, uncond_trials=200,
                                        max_accepted=50, resamples=200)
    assert out["incomplete"] and "64" in out["infeasible"]
    assert set(out["conditioned"]) == {"2", "4"}
    assert out["slope_conditioned"]["n"] == [2, 4]
    assert "median_gap_top" not in out
    with pytest.raises(DomainError):
        ldp.conditional_tf_experiment([2, 4], 1.0, 1000, 1)
