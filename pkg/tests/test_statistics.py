
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optomech_witness import analytic
from optomech_witness import statistics as stats
from optomech_witness.exceptions import CalibrationDegenerateError, ConfigError, NoViolationError
from optomech_witness.params import ClickProbabilitySet, SystemParams
from optomech_witness.witness import DisplacementSetting, evaluate, separable_bound

A, B = 2.63, -2.63


def _setting(params, a=A, b=B):
    return DisplacementSetting.from_amplitudes(a, b, params.eta)


@st.composite
def probability_sets(draw):
    joint = np.array(draw(st.lists(st.floats(1e-4, 1.0), min_size=4, max_size=4)))
    joint /= joint.sum()
    pp, pm, mp, mm = joint
    pc1 = draw(st.floats(1e-6, 1.0)) * (mp + mm)
    pc2 = draw(st.floats(1e-6, 1.0)) * (pm + mm)
    return ClickProbabilitySet(pp, pm, mp, mm, pc1, pc2)


# -- variance -----------------------------------------------------------------


@pytest.mark.parametrize("p,n,expected", [(0.5, 100, 0.0025), (0.0, 10, 0.0), (1.0, 10, 0.0), (0.3, 750_000, 2.8e-7)])
def test_bernoulli_variance(p, n, expected):
    assert stats.bernoulli_variance(p, n) == pytest.approx(expected)


def test_bernoulli_variance_zero_runs():
    with pytest.raises(ConfigError):
        stats.bernoulli_variance(0.5, 0)


# -- calibration --------------------------------------------------------------


def test_calibration_symmetry():
    k = stats.calibration_constants(ClickProbabilitySet(0.5, 0.1, 0.1, 0.3, 0.05, 0.05))
    assert k.k3 == pytest.approx(k.k5)
    assert k.k4 == pytest.approx(k.k6)


def test_calibration_unit_ratio():
    k = stats.calibration_constants(ClickProbabilitySet(0.4, 0.1, 0.1, 0.4, 0.05, 0.05))
    assert k.k1 == pytest.approx(1.0)


def test_calibration_feasibility_point(feasibility_params):
    k = stats.calibration_constants(analytic.probability_set(feasibility_params, A, B))
    assert all(np.isfinite(v) and v > 0 for v in k.as_tuple())


def test_calibration_definitions():
    cal = ClickProbabilitySet(0.5, 0.2, 0.1, 0.2, 0.04, 0.09)
    k = stats.calibration_constants(cal)
    expected = [(0.2 / 0.5) ** 0.5, (0.1 / 0.2) ** 0.5, (0.2 / 0.09) ** 0.5, (0.2 / 0.09) ** 0.5, (0.1 / 0.04) ** 0.5, (0.2 / 0.04) ** 0.5]
    assert k.as_tuple() == pytest.approx(expected)


def test_calibration_degenerate():
    vacuum = ClickProbabilitySet(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(CalibrationDegenerateError):
        stats.calibration_constants(vacuum)
    k = stats.calibration_constants(vacuum, n_cal=1000)
    assert k.k2 == 1.0
    assert k.k1 == pytest.approx((1 / 2000) ** 0.5)


# -- linearised bound ---------------------------------------------------------


@given(probability_sets(), st.floats(0, 2.5), st.floats(0, 2.5), st.lists(st.floats(0.05, 20), min_size=6, max_size=6))
def test_linearised_bound_is_conservative(probs, x, y, ks):
    setting = DisplacementSetting(x, y)
    _, value = stats.linearized_bound(probs, setting, stats.CalibrationConstants(*ks))
    assert value >= separable_bound(probs, setting) - 1e-12


@given(probability_sets(), st.floats(0, 2.5), st.floats(0, 2.5))
def test_linearised_bound_is_tangent(probs, x, y):
    setting = DisplacementSetting(x, y)
    _, value = stats.linearized_bound(probs, setting, stats.calibration_constants(probs))
    assert value == pytest.approx(separable_bound(probs, setting), abs=1e-10)


def test_perturbed_constants_are_strictly_larger(feasibility_params):
    probs = analytic.probability_set(feasibility_params, A, B)
    setting = _setting(feasibility_params)
    k = stats.calibration_constants(probs)
    _, value = stats.linearized_bound(probs, setting, k.scaled(2.0))
    assert value > separable_bound(probs, setting) + 1e-6


# -- estimator functional -----------------------------------------------------


def test_estimator_coefficient_of_coincidences(feasibility_params):
    probs = analytic.probability_set(feasibility_params, A, B)
    setting = _setting(feasibility_params)
    k = stats.calibration_constants(probs)
    f = stats.estimator_functional(setting, k, probs)
    c1 = f.coefficients[stats.PROBABILITY_LABELS.index("Pc(A1)")]
    assert c1 <= -2.0
    assert np.array_equal(f.coefficients[:4], [1, -1, -1, 1])


def test_estimator_asymptotic_value(feasibility_params):
    probs = analytic.probability_set(feasibility_params, A, B)
    setting = _setting(feasibility_params)
    f = stats.estimator_functional(setting, stats.calibration_constants(probs), probs)
    ev = evaluate(feasibility_params, A, B)
    assert f(stats.probability_vector(probs)) == pytest.approx(ev.diff, abs=1e-10)


def test_estimator_vacuum_is_zero():
    params = SystemParams(p=0.0, T=0.5, eta=0.5)
    probs = analytic.probability_set(params, 1.0, -1.0)
    f = stats.estimator_functional(_setting(params, 1.0, -1.0), stats.calibration_constants(probs, n_cal=1e5), probs)
    assert f(stats.probability_vector(probs)) == pytest.approx(0.0, abs=1e-12)


def test_linear_functional_validation():
    with pytest.raises(ConfigError):
        stats.LinearFunctional(np.ones(3))
    with pytest.raises(ConfigError):
        stats.LinearFunctional(np.ones(10), branches=(0, 2, 0))


# -- allocation ---------------------------------------------------------------


def _functional(c):
    return stats.LinearFunctional(np.r_[c, np.zeros(10 - len(c))])


def test_plan_symmetric_split():
    plan = stats.plan_runs(_functional([1, 1]), np.r_[0.3, 0.3, np.zeros(8)], 1000)
    assert list(plan.counts[:2]) == [500, 500]


def test_plan_weighted_split():
    values = np.r_[0.5, 0.5, np.zeros(8)]
    plan = stats.plan_runs(_functional([1, 2]), values, 300)
    assert list(plan.counts[:2]) == [100, 200]
    # the best integer split found by brute force
    f = _functional([1, 2])
    best = min(range(1, 300), key=lambda n: f.variance(values, np.r_[n, 300 - n, np.zeros(8)]))
    assert best == 100


def test_plan_zero_coefficient_gets_nothing():
    plan = stats.plan_runs(_functional([1, 0, 3]), np.r_[0.5, 0.5, 0.2, np.zeros(7)], 100)
    assert plan.counts[1] == 0
    assert plan.counts.sum() == 100


def test_plan_min_one_run():
    # P = 0 gives zero optimal weight but the entry still needs a run
    plan = stats.plan_runs(_functional([1, 1]), np.r_[0.5, 0.0, np.zeros(8)], 50)
    assert plan.counts[1] >= 1
    assert plan.counts.sum() == 50


def test_plan_errors():
    with pytest.raises(ConfigError):
        stats.plan_runs(_functional([0]), np.full(10, 0.5), 10)
    with pytest.raises(ConfigError):
        stats.plan_runs(_functional([1, 1, 1]), np.full(10, 0.5), 2)


@given(st.lists(st.floats(-3, 3), min_size=10, max_size=10), st.lists(st.floats(0, 1), min_size=10, max_size=10), st.integers(10, 10**7))
def test_plan_preserves_total(c, p, n):
    c = np.array(c)
    if not np.any(c):
        return
    plan = stats.plan_runs(stats.LinearFunctional(c), np.array(p), n)
    assert plan.counts.sum() == n == plan.n_total
    assert np.all(plan.counts[c != 0] >= 1)
    assert plan.variance >= 0


@pytest.mark.parametrize("seed", range(5))
def test_plan_beats_random_allocations(seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=10)
    p = rng.uniform(0.01, 0.99, 10)
    f = stats.LinearFunctional(c)
    n = 10_000
    best = stats.plan_runs(f, p, n).variance
    for _ in range(100):
        counts = rng.multinomial(n - 10, np.full(10, 0.1)) + 1
        assert best <= f.variance(p, counts)


# -- required runs ------------------------------------------------------------


def test_required_runs_satisfies_criterion(feasibility_params):
    n, plan = stats.required_runs(feasibility_params, A, B, return_plan=True)
    diff = evaluate(feasibility_params, A, B).diff
    assert plan.variance ** 0.5 <= diff / 3
    smaller = stats.plan_runs(plan.functional, stats.probability_vector(analytic.probability_set(feasibility_params, A, B)), n - 1)
    assert smaller.variance ** 0.5 > diff / 3


def test_required_runs_scaling(feasibility_params):
    n3 = stats.required_runs(feasibility_params, A, B, significance=3)
    n12 = stats.required_runs(feasibility_params, A, B, significance=12)
    assert n12 / n3 == pytest.approx(16, rel=1e-3)


def test_required_runs_no_violation():
    with pytest.raises(NoViolationError):
        stats.required_runs(SystemParams(p=0.2, T=0.0, eta=0.5), 1.0, -1.0)


def test_required_runs_decreases_along_ray():
    # larger T gives a larger violation and fewer runs
    ns, diffs = [], []
    for T in (0.3, 0.5, 0.7, 0.9):
        params = SystemParams(p=0.2, T=T, eta=0.5, n0=0.0)
        diffs.append(evaluate(params, 1.0, -1.0).diff)
        ns.append(stats.required_runs(params, 1.0, -1.0))
    assert all(np.diff(diffs) > 0)
    assert all(np.diff(ns) < 0)


# -- Monte Carlo --------------------------------------------------------------


def test_simulation_is_deterministic(feasibility_params):
    _, plan = stats.required_runs(feasibility_params, A, B, return_plan=True)
    a = stats.simulate_experiment(feasibility_params, A, B, plan, seed=99)
    b = stats.simulate_experiment(feasibility_params, A, B, plan, seed=99)
    assert a == b
    assert a != stats.simulate_experiment(feasibility_params, A, B, plan, seed=100)


def test_simulation_mean_matches_asymptotic(feasibility_params):
    _, plan = stats.required_runs(feasibility_params, A, B, return_plan=True)
    values = stats.simulate_replications(feasibility_params, A, B, plan, seed=5, reps=200)
    stderr = (plan.variance / values.size) ** 0.5
    assert abs(values.mean() - plan.mean) < 3 * stderr


def test_simulation_std_matches_prediction(feasibility_params):
    _, plan = stats.required_runs(feasibility_params, A, B, return_plan=True)
    values = stats.simulate_replications(feasibility_params, A, B, plan, seed=11, reps=2000)
    assert values.std(ddof=1) == pytest.approx(plan.variance ** 0.5, rel=0.1)


def test_replication_seeds_are_independent_of_order(feasibility_params):
    _, plan = stats.required_runs(feasibility_params, A, B, return_plan=True)
    batch = stats.simulate_replications(feasibility_params, A, B, plan, seed=3, reps=5)
    single = [stats.simulate_experiment(feasibility_params, A, B, plan, 3, index=i) for i in (4, 2)]
    assert single == [batch[4], batch[2]]


def test_simulation_reps_validation(feasibility_params):
    _, plan = stats.required_runs(feasibility_params, A, B, return_plan=True)
    with pytest.raises(ConfigError):
        stats.simulate_replications(feasibility_params, A, B, plan, seed=0, reps=0)
