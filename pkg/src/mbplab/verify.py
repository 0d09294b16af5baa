"""Finite-time checks of the limit theorems.

Each check turns an asymptotic statement into a number at finite ``t`` or
``n``, a target and a tolerance, and returns a list of
:class:`CheckResult`.  A result passes only when the comparison holds and
its reported truncation tail bound is at most half the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import gf, mqp, simulate
from .errors import NotApplicable
from .offspring import Criticality, FiniteSupport, OffspringLaw, Stable

ABS = "abs"
DISTANCE = "distance"


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one verification.

    ``kind='abs'`` compares ``|statistic - target| <= tolerance``;
    ``kind='distance'`` compares ``statistic <= tolerance``.
    ``diagnostics`` maps a series name to ``(x, y)`` arrays for plotting.
    """

    check_id: str
    law: str
    statistic: float
    target: float
    tolerance: float
    passed: bool
    budget: str = ""
    notes: str = ""
    tail_bound: float = 0.0
    kind: str = ABS
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)


def make_result(check_id, law, statistic, target, tolerance, *, kind=ABS, tail_bound=0.0,
                budget="", notes="", diagnostics=None) -> CheckResult:
    statistic, target, tolerance = float(statistic), float(target), float(tolerance)
    if kind == DISTANCE:
        ok = statistic <= tolerance
    else:
        ok = abs(statistic - target) <= tolerance
    ok = bool(ok and math.isfinite(statistic) and tail_bound <= tolerance / 2)
    return CheckResult(check_id, law_label(law), statistic, target, tolerance, ok, budget, notes,
                       float(tail_bound), kind, diagnostics or {})


def law_label(law) -> str:
    if isinstance(law, str):
        return law
    if isinstance(law, Stable):
        return f"stable(nu={law.nu:g},c={law.c:g})"
    if isinstance(law, FiniteSupport):
        return "finite(" + ",".join(f"{a:g}" for a in law.coeffs) + ")"
    if isinstance(law, mqp.QProcessSpec):
        return law_label(law.base)
    return repr(law)


def _critical_scale(law: OffspringLaw, t):
    """``(nu t)**(1 + 1/nu) * a_0 / N(t)``."""
    nu, _ = law.regular_variation()
    return (nu * np.asarray(t)) ** (1.0 + 1.0 / nu) * law.a0 / gf.normalizer(law, float(np.max(t)))


# -- local limits ------------------------------------------------------------
def check_local_limit(law: OffspringLaw, t_grid) -> list[CheckResult]:
    """Return probability ``P_11(t)`` against its large-time equivalent.

    Critical laws: ``(nu t)**(1+1/nu) P_11(t) a_0 / N(t) -> 1``.
    Otherwise: ``P_11(t) / beta**t -> |ln beta| A(0) / a_0``, reported as a
    ratio to the target.  Tolerance 0.05 at the largest ``t``.
    """
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    p = gf.transition_family(law, t_grid, 1, 4)[:, 1]
    ext = gf.extinction_data(law)
    if ext.criticality is Criticality.CRITICAL:
        ratio = _critical_scale(law, t_grid) * p
        notes = "ratio (nu t)^(1+1/nu) P_11 a_0 / N"
    else:
        target = ext.lambda_S * gf.survival_amplitude(law, 0.0) / law.a0
        ratio = p / ext.beta_power(t_grid) / target
        notes = f"ratio beta^-t P_11 / {target:.6g}"
    return [make_result("local_limit", law, ratio[-1], 1.0, 0.05,
                        budget=f"t={t_grid[-1]:g}", notes=notes,
                        diagnostics={"ratio": (t_grid, ratio), "target": (t_grid, np.ones_like(t_grid))})]


def check_ratio_local_limit(law: OffspringLaw, t: float, i: int, j: int) -> list[CheckResult]:
    """``(nu t)**(1+1/nu) P_ij(t) ~ i mu_j N(t) / a_0`` for a critical law (tolerance 0.1)."""
    if gf.extinction_data(law).criticality is not Criticality.CRITICAL:
        raise NotApplicable("defined for critical laws")
    p = gf.transition_probabilities(law, t, i, max(j, 4) + 4)[j]
    mu = gf.invariant_measure(law, max(j, 4))[j]
    stat = _critical_scale(law, t) * p / (i * mu)
    return [make_result(f"ratio_local_limit_i{i}_j{j}", law, stat, 1.0, 0.1, budget=f"t={t:g}",
                        notes=f"mu_j={mu:.8g}")]


# -- Tauberian partial sums ---------------------------------------------------
def check_tauberian(law: OffspringLaw, n_grid) -> list[CheckResult]:
    """Partial sums of ``mu`` and of ``pi`` against their regular-variation equivalents.

    ``sum_{j<=n} mu_j ~ a_0 n**nu / (c nu**2 Gamma(nu))`` and
    ``sum_{j<=n} pi_j ~ n**(1+nu) / (c Gamma(2+nu))``.
    """
    if gf.extinction_data(law).criticality is not Criticality.CRITICAL:
        raise NotApplicable("defined for critical laws")
    n_grid = np.sort(np.asarray(n_grid, dtype=int))
    nmax = int(n_grid[-1])
    nu, c = law.regular_variation()
    mu_sums = gf.invariant_measure(law, nmax).partial_sums()[n_grid]
    mu_target = law.a0 * n_grid.astype(float) ** nu / (c * nu**2 * special.gamma(nu))
    spec = mqp.build_qprocess(law)
    pi_sums = mqp.pi_coefficients(spec, nmax).partial_sums()[n_grid]
    pi_target = n_grid.astype(float) ** (1 + nu) / (c * special.gamma(2 + nu))
    tol_mu = 0.05 if nu == 1.0 else 0.1
    r_mu = mu_sums / mu_target
    r_pi = pi_sums / pi_target
    return [
        make_result("tauberian_mu", law, r_mu[-1], 1.0, tol_mu, budget=f"n={nmax}",
                    diagnostics={"mu_ratio": (n_grid, r_mu)}),
        make_result("tauberian_pi", law, r_pi[-1], 1.0, 0.02 if nu == 1.0 else 0.1, budget=f"n={nmax}",
                    diagnostics={"pi_ratio": (n_grid, r_pi)}),
    ]


# -- monotone ratio -----------------------------------------------------------
def check_monotone_ratio(law: OffspringLaw, t_grid, j_max: int = 5) -> list[CheckResult]:
    """``t -> P_1j(t) / P_11(t)`` is nondecreasing and stays below ``mu_j``."""
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if len(t_grid) < 10:
        raise ValueError("need a time grid of at least 10 points")
    p = gf.transition_family(law, t_grid, 1, j_max + 4)
    ratios = p[:, 1: j_max + 1] / p[:, [1]]
    drop = float(max(0.0, np.max(-np.diff(ratios, axis=0))))
    mu = gf.invariant_measure(law, j_max + 4)[1: j_max + 1]
    excess = float(max(0.0, np.max(ratios - mu)))
    gap = float(np.max(np.abs(mu - ratios[-1])))
    diag = {f"j={j}": (t_grid, ratios[:, j - 1]) for j in range(1, j_max + 1)}
    return [
        make_result("monotone_ratio", law, drop, 0.0, 1e-7, kind=DISTANCE, budget=f"j<={j_max}",
                    notes="largest decrease along the grid", diagnostics=diag),
        make_result("monotone_ratio_bound", law, excess, 0.0, 1e-7, kind=DISTANCE,
                    notes=f"gap to mu at t={t_grid[-1]:g}: {gap:.3e}"),
    ]


# -- conditioned chain ----------------------------------------------------------
def check_conditioned_limits(law: OffspringLaw, t: float, i: int = 1, n: int = 200) -> list[CheckResult]:
    """Conditioned law at time ``t`` against its limit.

    Non-critical: total variation to the coefficients of ``V`` (<= 0.02).
    Critical: ``nu t V_i(t;s)`` against ``nu t [1 - (1 + M(s)/t)**(-1/nu)]``
    on ``s`` in ``[0, 0.9]``, tolerance ``0.05 M(0.9)``.  The first-order
    correction is needed because the bare limit ``M(s)`` is only reached
    at rate ``M(s)/t``.
    """
    ext = gf.extinction_data(law)
    if ext.criticality is not Criticality.CRITICAL:
        cond = gf.conditioned_transition(law, t, i, n)
        lim = gf.conditioned_limit(law, n)
        tv = simulate.total_variation(cond.coefficients, lim.coefficients)
        tail = cond.tail_bound + lim.tail_bound
        j = np.arange(n + 1)
        return [make_result("conditioned_limit", law, tv, 0.0, 0.02, kind=DISTANCE, tail_bound=tail,
                            budget=f"t={t:g}, N={n}",
                            diagnostics={"conditioned": (j, cond.coefficients), "limit": (j, lim.coefficients)})]
    nu, _ = law.regular_variation()
    s = np.linspace(0.0, 0.9, 19)
    scaled = nu * t * gf.conditioned_gf(law, t, s, i)
    m_s = gf.flow_time(law, s)
    target = nu * t * (1.0 - (1.0 + m_s / t) ** (-1.0 / nu))
    dev = float(np.max(np.abs(scaled - target)))
    raw = float(np.max(np.abs(scaled - m_s)))
    tol = 0.05 * float(gf.flow_time(law, 0.9))
    return [make_result("conditioned_limit", law, dev, 0.0, tol, kind=DISTANCE, budget=f"t={t:g}",
                        notes=f"uncorrected sup|nu t V - M| = {raw:.4g}",
                        diagnostics={"nu t V(t;s)": (s, scaled), "corrected M": (s, target), "M": (s, m_s)})]


# -- Q-process ergodics --------------------------------------------------------
def check_mqp_ergodics(spec: mqp.QProcessSpec, t: float, states=(1, 2, 3), n: int = 200,
                       tol_explosive: float = 0.1) -> list[CheckResult]:
    """Long-time behaviour of ``Q_i1(t)`` and of the whole row ``Q_1.(t)``."""
    law = spec.base
    rows = mqp.qprocess_matrix(spec, t, max(states), n)
    out = []
    if spec.kind is mqp.QProcessClass.RESTRICTIVE:
        target = spec.ext.lambda_S * gf.survival_amplitude(law, 0.0) / law.a0
        for i in states:
            out.append(make_result(f"qprocess_return_i{i}", law, rows[i - 1, 1], target, 0.05,
                                   budget=f"t={t:g}"))
        u = mqp.stationary_distribution(spec, n)
        row_tail = max(0.0, 1.0 - rows[0].sum())
        tv = simulate.total_variation(rows[0], u.coefficients)
        omega = mqp.ratio_limit_measure(spec, 10)
        const = u[1:11] / omega[1:11]
        out.append(make_result("qprocess_stationary_tv", law, tv, 0.0, 0.02, kind=DISTANCE,
                               tail_bound=row_tail + u.tail_bound, budget=f"t={t:g}, N={n}",
                               diagnostics={"Q_1j(t)": (np.arange(n + 1), rows[0]),
                                            "u_j": (np.arange(n + 1), u.coefficients)}))
        out.append(make_result("qprocess_stationary_mass", law, u.total(), 1.0, 1e-6, budget=f"N={n}",
                               notes=f"u_j/omega_j = {const.mean():.10g} (spread {np.ptp(const):.1e})"))
    else:
        scale = _critical_scale(law, t)
        for i in states:
            out.append(make_result(f"qprocess_return_i{i}", law, scale * rows[i - 1, 1], 1.0, tol_explosive,
                                   budget=f"t={t:g}", notes="(nu t)^(1+1/nu) Q_i1 a_0 / N"))
    return out


# -- scaling limit ---------------------------------------------------------------
def _exact_scaled_cdf_gap(spec: mqp.QProcessSpec, t: float, scale: float, nu: float):
    """Kolmogorov distance between the exact law of ``scale * W(t)`` and the limit."""
    n = 256
    while True:
        row = mqp.qprocess_transition(spec, t, 1, n)
        if row.tail_bound < 1e-6 or n >= 1 << 15:
            break
        n *= 2
    cdf = np.cumsum(row.coefficients)
    x = scale * np.arange(n + 1)
    g = mqp.limit_cdf(nu, x) if nu == 1.0 else np.interp(x, *_limit_grid(nu, x[-1]))
    left = np.concatenate(([0.0], cdf[:-1]))
    return float(max(np.max(np.abs(cdf - g)), np.max(np.abs(left - g)))), row.tail_bound


def _limit_grid(nu: float, xmax: float, points: int = 200):
    xs = np.linspace(0.0, xmax, points)
    return xs, mqp.limit_cdf(nu, xs)


def check_scaling_limit(spec: mqp.QProcessSpec, t: float, reps: int, seed: int, jobs: int = 1,
                        max_omitted: float = 1e-8) -> list[CheckResult]:
    """Empirical law of ``q(t) W(t)`` against the limit with transform
    ``(1 + theta**nu)**(-(1 + 1/nu))``.

    ``q(t) = R(t;0)`` is the exact survival probability.  The KS tolerance
    is ``max(0.02, 1.36/sqrt(reps) + bias)`` where ``bias`` is the exact
    Kolmogorov distance of ``q(t) W(t)`` to the limit, computed from the
    transition series rather than estimated from a second run.
    """
    if spec.kind is not mqp.QProcessClass.EXPLOSIVE:
        raise NotApplicable("the scaling limit concerns explosive Q-processes")
    law = spec.base
    nu, _ = law.regular_variation()
    scale = float(gf.remainder(law, t, 0.0))
    fs = simulate.mqp_final_states(spec, 1, t, reps, seed, jobs=jobs, max_omitted=max_omitted)
    x = np.sort(scale * fs.states[fs.valid])
    m = len(x)
    if nu == 1.0:
        g = mqp.limit_cdf(nu, x)
    else:
        g = np.interp(x, *_limit_grid(nu, float(x[-1])))
    ecdf_hi = np.arange(1, m + 1) / m
    ecdf_lo = np.arange(0, m) / m
    ks = float(max(np.max(ecdf_hi - g), np.max(g - ecdf_lo)))
    bias, tail = _exact_scaled_cdf_gap(spec, t, scale, nu)
    ks_tol = max(0.02, 1.36 / math.sqrt(m) + bias)
    budget = f"t={t:g}, reps={reps}, capped={fs.capped}, events={fs.events}"
    xs_plot = np.linspace(0.0, float(np.quantile(x, 0.995)), 120)
    g_plot = mqp.limit_cdf(nu, xs_plot) if nu == 1.0 else np.interp(xs_plot, *_limit_grid(nu, xs_plot[-1]))
    e_plot = np.searchsorted(x, xs_plot, side="right") / m
    results = [make_result("scaling_limit_ks", law, ks, 0.0, ks_tol, kind=DISTANCE, tail_bound=tail,
                           budget=budget, notes=f"exact finite-t bias {bias:.4g}",
                           diagnostics={"empirical": (xs_plot, e_plot), "limit": (xs_plot, g_plot)})]
    lap = float(np.mean(np.exp(-x)))
    results.append(make_result("scaling_limit_laplace", law, lap, mqp.limit_laplace(nu, 1.0), 0.01,
                               budget=budget, notes="theta = 1"))
    if math.isfinite(spec.alpha):
        limit_mean = 1.0 + 1.0 / nu
        exact_mean = scale * mqp.qprocess_moments(spec, t)[0]
        se = float(np.std(x, ddof=1)) / math.sqrt(m)
        results.append(make_result("scaling_limit_mean", law, float(x.mean()), limit_mean,
                                   1.96 * se + abs(exact_mean - limit_mean), budget=budget,
                                   notes=f"exact finite-t mean {exact_mean:.6g}"))
    return results


# -- default suite -----------------------------------------------------------------
def _derive_seed(master: int, index: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


CHECK_GROUPS = ("local_limit", "ratio_local_limit", "tauberian", "monotone_ratio",
                "conditioned_limit", "qprocess_ergodics", "scaling_limit")


def default_suite(law: OffspringLaw, seed: int, jobs: int = 1, reps: int = 10_000,
                  groups=None) -> list[CheckResult]:
    """Every check applicable to ``law`` at the default desk-scale budget.

    Parameters
    ----------
    groups : iterable of str, optional
        Restrict to these entries of :data:`CHECK_GROUPS`.  Groups that do
        not apply to the law are skipped silently.
    """
    wanted = set(CHECK_GROUPS if groups is None else groups)
    unknown = wanted - set(CHECK_GROUPS)
    if unknown:
        raise ValueError(f"unknown check groups {sorted(unknown)}")
    ext = gf.extinction_data(law)
    spec = mqp.build_qprocess(law)
    plan = []
    if ext.criticality is Criticality.CRITICAL:
        nu, _ = law.regular_variation()
        t_big = 100.0 if nu == 1.0 else 200.0
        n_top = 1000 if nu == 1.0 else 10_000
        plan += [
            ("local_limit", lambda: check_local_limit(law, np.geomspace(1.0, t_big, 12))),
            ("ratio_local_limit", lambda: check_ratio_local_limit(law, t_big, 2, 3)
             + check_ratio_local_limit(law, t_big, 1, 2)),
            ("tauberian", lambda: check_tauberian(
                law, np.unique(np.geomspace(10, n_top, 8).astype(int)))),
            ("monotone_ratio", lambda: check_monotone_ratio(law, np.linspace(1.0, 50.0, 12))),
            ("conditioned_limit", lambda: check_conditioned_limits(law, 100.0)),
            ("qprocess_ergodics", lambda: check_mqp_ergodics(spec, t_big)),
        ]
        if math.isfinite(spec.alpha):
            # heavier tails cannot meet the rate-window bound; see row_window
            plan.append(("scaling_limit", lambda: check_scaling_limit(
                spec, 50.0, reps, _derive_seed(seed, 0), jobs)))
    else:
        plan += [
            ("local_limit", lambda: check_local_limit(law, np.linspace(1.0, 15.0, 12))),
            ("monotone_ratio", lambda: check_monotone_ratio(law, np.linspace(1.0, 15.0, 12))),
            ("conditioned_limit", lambda: check_conditioned_limits(law, 30.0)),
            ("qprocess_ergodics", lambda: check_mqp_ergodics(spec, 15.0)),
        ]
    results: list[CheckResult] = []
    for name, run in plan:
        if name in wanted:
            results += run()
    return results
