"""Acceptance criteria at their stated tolerances, one verdict line each.

Monte Carlo parts use fixed seeds derived from one master seed so the
verdicts are reproducible.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from mbplab import (
    FiniteSupport, Stable, build_qprocess, cli, conditioned_transition, empirical_transition,
    estimate_survival, invariant_measure, mqp_final_states, pi_coefficients, q_matrix_row,
    qprocess_matrix, qprocess_transition, solve_F, stationary_distribution, total_variation,
    transition_matrix, transition_probabilities,
)
from mbplab.verify import _derive_seed, check_local_limit, check_scaling_limit
from oracles import birth_death_F, stable_R

MASTER = 20240601
T_GRID = np.geomspace(0.01, 100.0, 20)
S_GRID = np.linspace(0.0, 0.99, 20)


def seed(k):
    return _derive_seed(MASTER, 100 + k)


def test_criterion_01_ode_against_closed_forms():
    worst = {}
    for nu, c in ((1.0, 1.0), (0.5, 1.0), (0.25, 2.0)):
        law = Stable(nu, c)
        worst[f"stable nu={nu:g}"] = max(abs(solve_F(law, t, s).value - (1 - stable_R(nu, c, t, s)))
                                         for t in T_GRID for s in S_GRID)
    for death, birth in ((1.0, 2.0), (2.0, 1.0), (1.0, 1.0)):
        law = FiniteSupport(death, -(death + birth), birth)
        worst[f"birth-death {death:g}/{birth:g}"] = max(abs(solve_F(law, t, s).value - birth_death_F(death, birth, t, s))
                                                       for t in T_GRID for s in S_GRID)
    err = max(worst.values())
    ok = err <= 1e-8
    record_criterion(1, ok, f"max |F - exact| = {err:.2e} over 20x20 grid on {len(worst)} laws (tol 1e-8)")
    assert ok, worst


def test_criterion_02_survival_probability():
    law = Stable(0.5)
    exact = 0.0625
    assert stable_R(0.5, 1.0, 6.0, 0.0) == pytest.approx(exact)
    est = estimate_survival(law, 6.0, 100_000, seed(2))
    series = 1.0 - transition_probabilities(law, 6.0, 1, 50)[0]
    ok = est.covers(exact) and abs(series - exact) <= 1e-6
    record_criterion(2, ok, f"MC {est.estimate:.5f} CI [{est.ci_low:.5f}, {est.ci_high:.5f}] vs 0.0625; "
                            f"series 1-P_10 = {series:.10f} (tol 1e-6)")
    assert ok


def test_criterion_03_local_limit():
    p11 = transition_probabilities(Stable(1.0), 100.0, 1, 4)[1]
    scaled = 100.0**2 * p11
    (half,) = check_local_limit(Stable(0.5), np.geomspace(1.0, 200.0, 12))
    ok = 0.95 <= scaled <= 1.0 and abs(scaled - 0.98029605) < 1e-6 and abs(half.statistic - 1.0) <= 0.1
    record_criterion(3, ok, f"t^2 P_11(100) = {scaled:.8f} in [0.95, 1]; nu=0.5 ratio at t=200 = {half.statistic:.4f}")
    assert ok


def test_criterion_04_invariant_measure():
    law = Stable(1.0)
    mu = invariant_measure(law, 200).coefficients
    dev = float(np.max(np.abs(mu[1:21] - 1.0)))
    resid = 0.0
    for t in (0.5, 1.0, 2.0):
        mat = transition_matrix(law, t, 200, 20)
        resid = max(resid, float(np.max(np.abs(mu[1:201] @ mat[:, 1:21] - mu[1:21]))))
    ok = dev <= 1e-6 and resid <= 1e-4
    record_criterion(4, ok, f"max|mu_j - 1| (j<=20) = {dev:.2e}; invariant residual K=200 = {resid:.2e}")
    assert ok


def test_criterion_05_conditioned_limit():
    cond = conditioned_transition(FiniteSupport(2.0, -3.0, 1.0), 30.0, 1, 200).coefficients
    geom = np.concatenate(([0.0], 0.5 ** np.arange(1, 201)))
    tv = total_variation(cond, geom)
    ok = tv <= 0.02
    record_criterion(5, ok, f"TV(conditioned law at t=30, 2^-j) = {tv:.2e} (tol 0.02)")
    assert ok


def test_criterion_06_q_matrix():
    worst = 0.0
    for law in (Stable(1.0), FiniteSupport(1.0, -3.0, 2.0), FiniteSupport(2.0, -3.0, 1.0)):
        spec = build_qprocess(law)
        worst = max(worst, max(abs(q_matrix_row(spec, i).row_sum()) for i in range(1, 21)))
    hand = q_matrix_row(build_qprocess(Stable(1.0)), 2).entries
    ok = worst <= 1e-8 and hand == {1: 1.0, 2: -4.0, 3: 3.0}
    record_criterion(6, ok, f"max row sum = {worst:.1e} (tol 1e-8); q_21, q_22, q_23 = {hand[1]}, {hand[2]}, {hand[3]}")
    assert ok


def test_criterion_07_mqp_consistency():
    spec = build_qprocess(Stable(1.0))
    exact = qprocess_transition(spec, 1.0, 1, 400).coefficients
    emp = empirical_transition("mqp", spec, 1.0, 1, 100_000, seed(7), jobs=2)
    tv = total_variation(emp.pmf(400), exact)
    ok = tv <= 0.015
    record_criterion(7, ok, f"TV(reweighted series, q-matrix simulator) = {tv:.4f} at t=1, 1e5 reps (tol 0.015)")
    assert ok


def _mean_ci(states):
    m = float(states.mean())
    half = 1.96 * float(states.std(ddof=1)) / math.sqrt(len(states))
    return m, m - half, m + half


def test_criterion_08_mqp_moments():
    a = mqp_final_states(build_qprocess(Stable(1.0)), 1, 5.0, 10_000, seed(8))
    b = mqp_final_states(build_qprocess(FiniteSupport(1.0, -3.0, 2.0)), 1, 20.0, 10_000, seed(80))
    ma, la, ha = _mean_ci(a.states[a.valid])
    mb, lb, hb = _mean_ci(b.states[b.valid])
    ok = la <= 11.0 <= ha and lb <= 3.0 <= hb
    # each interval misses with probability 0.05 by construction; z shows how far
    za = (ma - 11.0) / ((ha - la) / 3.92)
    zb = (mb - 3.0) / ((hb - lb) / 3.92)
    record_criterion(8, ok, f"mean W(5) = {ma:.3f} CI [{la:.3f}, {ha:.3f}] vs 11 (z={za:+.2f}); "
                            f"restrictive mean W(20) = {mb:.4f} CI [{lb:.4f}, {hb:.4f}] vs 3 (z={zb:+.2f})")
    assert ok


def test_criterion_09_scaling_limit():
    res = {r.check_id: r for r in check_scaling_limit(build_qprocess(Stable(1.0)), 50.0, 10_000, seed(9))}
    ks = res["scaling_limit_ks"].statistic
    lap = res["scaling_limit_laplace"].statistic
    ok = ks <= 0.02 and abs(lap - 0.25) <= 0.01
    record_criterion(9, ok, f"KS = {ks:.4f} (tol 0.02); mean exp(-W/(1+t)) = {lap:.4f} vs 0.25 (tol 0.01)")
    assert ok


def test_criterion_10_tauberian():
    n = 1000
    spec = build_qprocess(Stable(1.0))
    mu_ratio = invariant_measure(Stable(1.0), n).total() / n
    pi_ratio = pi_coefficients(spec, n).total() / (n * n / 2)
    ok = abs(mu_ratio - 1.0) <= 1e-9 and abs(pi_ratio - 1.0) <= 0.02
    record_criterion(10, ok, f"sum mu / n = {mu_ratio:.12f}; sum pi / (n^2/2) = {pi_ratio:.5f} at n=1000 (tol 0.02)")
    assert ok


def test_criterion_11_ergodics():
    spec = build_qprocess(FiniteSupport(1.0, -3.0, 2.0))
    rows15 = qprocess_matrix(spec, 15.0, 3, 200)
    q11_30 = qprocess_transition(spec, 30.0, 1, 200)[1]
    returns = rows15[:, 1]
    u = stationary_distribution(spec, 200)
    crit = qprocess_transition(build_qprocess(Stable(1.0)), 100.0, 1, 4)[1]
    ok = (q11_30 > 0 and abs(rows15[0, 1] - q11_30) < 1e-5
          and np.all(np.abs(returns - 0.25) <= 0.05)
          and abs(100.0**2 * crit - 1.0) <= 0.05 and crit < 1e-3
          and abs(u.total() - 1.0) <= 1e-6)
    record_criterion(11, ok, f"Q_i1(15) = {np.round(returns, 6).tolist()} vs 0.25; Q_11(30) = {q11_30:.6f}; "
                             f"t^2 Q_11(100) = {100.0**2 * crit:.4f}; sum u = {u.total():.9f}")
    assert ok


def test_criterion_12_determinism(tmp_path):
    cfg = Path(__file__).resolve().parents[1] / "configs" / "verify-critical.cfg"
    codes = [cli.main(["verify", str(cfg), "--out-dir", str(tmp_path / d)]) for d in ("a", "b")]
    a = (tmp_path / "a" / "report.csv").read_bytes()
    b = (tmp_path / "b" / "report.csv").read_bytes()
    ok = a == b and codes == [0, 0]
    record_criterion(12, ok, f"two default-suite runs byte-identical: {a == b}; exit codes {codes}")
    assert ok
