import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mbplab import (
    DomainError, FiniteSupport, Stable, Terminal, build_qprocess, empirical_transition,
    estimate_survival, mbp_final_states, mqp_final_states, qprocess_transition,
    reweighted_qprocess, simulate_mbp, simulate_mqp, solve_F, total_variation,
    transition_probabilities,
)
from mbplab._kernels import build_alias
from mbplab.simulate import offspring_table, stream, wilson_interval


def alias_masses(prob, alias):
    """Exact probabilities encoded by an alias table."""
    n = len(prob)
    mass = prob.copy()
    for k in range(n):
        mass[alias[k]] += 1.0 - prob[k]
    return mass / n


@given(st.lists(st.floats(1e-6, 100.0), min_size=1, max_size=60))
def test_alias_table_reproduces_weights(weights):
    w = np.array(weights)
    prob, alias = build_alias(w)
    assert np.allclose(alias_masses(prob, alias), w / w.sum(), atol=1e-12)


def test_offspring_table_heavy_tail():
    tab = offspring_table(Stable(0.5))
    assert tab.deficit < 1e-10
    assert tab.jumps.min() == -1 and tab.jumps.max() == tab.order - 1
    assert tab.rate == pytest.approx(1.5)


def test_streams_independent_of_order():
    a = stream(7, 3).random(5)
    _ = stream(7, 2).random(100)
    assert np.array_equal(a, stream(7, 3).random(5))
    assert not np.array_equal(a, stream(7, 4).random(5))


@pytest.mark.parametrize("jobs", [2, 5])
def test_results_independent_of_jobs(jobs, supercritical_bd):
    one = mbp_final_states(supercritical_bd, 1, 2.0, 3000, seed=11, jobs=1)
    many = mbp_final_states(supercritical_bd, 1, 2.0, 3000, seed=11, jobs=jobs)
    assert np.array_equal(one.states, many.states)
    assert np.array_equal(one.stop_times, many.stop_times)


def test_same_seed_same_result(quadratic):
    spec = build_qprocess(quadratic)
    a = mqp_final_states(spec, 1, 3.0, 2000, seed=5)
    b = mqp_final_states(spec, 1, 3.0, 2000, seed=5)
    c = mqp_final_states(spec, 1, 3.0, 2000, seed=6)
    assert np.array_equal(a.states, b.states) and a.events == b.events
    assert not np.array_equal(a.states, c.states)


def test_mbp_trajectory_shape(supercritical_bd):
    for k in range(20):
        tr = simulate_mbp(supercritical_bd, 2, 3.0, stream(1, k))
        steps = np.diff(tr.populations)
        assert set(steps.tolist()) <= {-1, 1}
        assert np.all(np.diff(tr.times) > 0)
        if tr.terminal is Terminal.EXTINCT:
            assert tr.populations[-1] == 0 and tr.terminal_time <= 3.0
        else:
            assert tr.terminal_time == 3.0 and tr.populations[-1] > 0


def test_mqp_trajectory_never_hits_zero(quadratic):
    spec = build_qprocess(quadratic)
    for k in range(20):
        tr = simulate_mqp(spec, 1, 5.0, stream(2, k))
        assert tr.populations.min() >= 1 and tr.terminal is Terminal.ALIVE


def test_cap_is_reported(supercritical_bd):
    fs = mbp_final_states(supercritical_bd, 1, 20.0, 1000, seed=3, cap=50)
    assert fs.capped > 300
    assert np.all(fs.states[~fs.valid] > 50)


def test_survival_estimate_covers_closed_form(supercritical_bd):
    est = estimate_survival(supercritical_bd, 1.0, 20_000, seed=8)
    exact = 1.0 - solve_F(supercritical_bd, 1.0, 0.0).value
    assert est.covers(exact)
    assert est.ci_high - est.ci_low < 0.02


def test_empirical_mbp_transition(supercritical_bd):
    emp = empirical_transition("mbp", supercritical_bd, 1.0, 1, 20_000, seed=9)
    exact = transition_probabilities(supercritical_bd, 1.0, 1, 60).coefficients
    assert total_variation(emp.pmf(60), exact) < 0.02
    assert emp.masses.sum() == pytest.approx(1.0)
    assert np.all(emp.half_width > 0)


def test_empirical_mqp_and_reweighting(supercritical_bd):
    spec = build_qprocess(supercritical_bd)
    exact = qprocess_transition(spec, 1.0, 1, 60).coefficients
    direct = empirical_transition("mqp", spec, 1.0, 1, 20_000, seed=10)
    weighted = reweighted_qprocess(supercritical_bd, 1.0, 1, 20_000, seed=12)
    assert total_variation(direct.pmf(60), exact) < 0.03
    assert total_variation(weighted.pmf(60), exact) < 0.03


def test_merge_pools_counts(supercritical_bd):
    a = empirical_transition("mbp", supercritical_bd, 0.5, 1, 2000, seed=1)
    b = empirical_transition("mbp", supercritical_bd, 0.5, 1, 2000, seed=2)
    m = a.merge(b)
    assert m.replications == 4000
    assert np.allclose(m.pmf(20), 0.5 * (a.pmf(20) + b.pmf(20)))


def test_wilson_interval_known_value():
    lo, hi = wilson_interval(50, 100)
    assert (lo, hi) == (pytest.approx(0.4038, abs=1e-4), pytest.approx(0.5962, abs=1e-4))


def test_argument_errors(quadratic):
    with pytest.raises(DomainError):
        empirical_transition("mbp", quadratic, 1.0, 1, 10, seed=1)
    with pytest.raises(DomainError):
        empirical_transition("other", quadratic, 1.0, 1, 1000, seed=1)
    with pytest.raises(DomainError):
        simulate_mbp(quadratic, 0, 1.0, stream(0, 0))
    with pytest.raises(DomainError):
        estimate_survival(FiniteSupport(1, -2, 1), 1.0, 10, seed=0)


@pytest.mark.slow
def test_qprocess_simulator_unbiased_large_sample(quadratic):
    # exact mean 11 and variance 60 at t = 5; 4-sigma bounds on 2e5 runs
    fs = mqp_final_states(build_qprocess(quadratic), 1, 5.0, 200_000, seed=321, jobs=4)
    x = fs.states.astype(float)
    se = math.sqrt(60.0 / len(x))
    assert abs(x.mean() - 11.0) < 4 * se
    assert x.var(ddof=1) == pytest.approx(60.0, rel=0.05)
