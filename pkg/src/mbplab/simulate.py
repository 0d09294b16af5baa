"""Exact event-driven Monte Carlo for the branching process and its Q-process.

Random streams follow a counter-based contract: replication ``r`` of a run
with master seed ``seed`` draws from ``Philox(key=(seed, r))``.  Results are
therefore identical whatever the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats

from . import _kernels as K
from .errors import DomainError
from .gf import extinction_data
from .mqp import QProcessSpec, build_qprocess, row_window
from .offspring import OffspringLaw

DEFAULT_CAP = 10**6


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replication ``index`` of master ``seed``."""
    key = np.array([seed % 2**64, index % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class Terminal(str, Enum):
    EXTINCT = "extinct"
    ALIVE = "alive"
    CAPPED = "capped"


_STATUS = {K.EXTINCT: Terminal.EXTINCT, K.ALIVE: Terminal.ALIVE, K.CAPPED: Terminal.CAPPED}


@dataclass(frozen=True)
class Trajectory:
    """Event times and populations; ``terminal_time`` is when the run stopped."""

    times: np.ndarray
    populations: np.ndarray
    terminal: Terminal
    terminal_time: float

    def rows(self):
        return [(float(t), int(n)) for t, n in zip(self.times, self.populations)]


@dataclass(frozen=True)
class JumpTable:
    """Alias table over the jump sizes ``k - 1`` of one kind of particle.

    ``deficit`` is the rate mass beyond the truncation order that was
    folded into the largest retained offspring size.
    """

    rate: float
    prob: np.ndarray
    alias: np.ndarray
    jumps: np.ndarray
    order: int
    deficit: float


def _jump_table(rates: np.ndarray, total: float, deficit: float) -> JumpTable:
    rates = np.array(rates, dtype=float)
    rates[1] = 0.0
    n = len(rates) - 1
    rates[n] += deficit
    keep = np.nonzero(rates > 0)[0]
    prob, alias = K.build_alias(rates[keep] / total)
    return JumpTable(total, prob, alias, (keep - 1).astype(np.int64), n, deficit)


def offspring_table(law: OffspringLaw, tol: float = 1e-10) -> JumpTable:
    """Jump table of the branching process (truncated at ``law.truncation_order``)."""
    n = law.truncation_order(tol)
    return _jump_table(law.coefficients(n), law.total_rate, max(law.tail_mass(n), 0.0))


def qprocess_tables(spec: QProcessSpec, max_omitted: float = 1e-8) -> tuple[JumpTable, JumpTable]:
    """Tables for unmarked particles (rates ``q**(k-1) a_k``) and the marked line
    (rates ``lambda_k``)."""
    n = row_window(spec, 1, max_omitted)
    ordinary_tail, marked_tail = spec.omitted_rates(n)
    ordinary = _jump_table(spec.ordinary_rates(n), spec.base.total_rate, max(ordinary_tail, 0.0))
    lam = spec.intensities(n)
    lam[1] = 0.0
    marked = _jump_table(lam, -spec.lambda_1, max(marked_tail, 0.0))
    return ordinary, marked


# -- single trajectories -------------------------------------------------
def simulate_mbp(law: OffspringLaw, z0: int, horizon: float, rng: np.random.Generator,
                 cap: int = DEFAULT_CAP, table: JumpTable | None = None) -> Trajectory:
    """Exact path of the branching process started from ``z0`` particles."""
    if z0 < 1 or horizon < 0 or cap < z0:
        raise DomainError("need z0 >= 1, horizon >= 0 and cap >= z0")
    tab = table or offspring_table(law)
    times, pops, status = K.mbp_path(rng, z0, float(horizon), tab.rate, tab.prob, tab.alias, tab.jumps, cap)
    term = _STATUS[status]
    return Trajectory(times, pops, term, float(times[-1]) if term is not Terminal.ALIVE else float(horizon))


def simulate_mqp(spec: QProcessSpec, w0: int, horizon: float, rng: np.random.Generator,
                 cap: int = DEFAULT_CAP, max_omitted: float = 1e-8) -> Trajectory:
    """Exact path of the Q-process from state ``w0``.

    Raises
    ------
    RateOverflow
        If no jump window bounds the omitted rate by ``max_omitted``.
    """
    if w0 < 1 or horizon < 0 or cap < w0:
        raise DomainError("need w0 >= 1, horizon >= 0 and cap >= w0")
    o, m = qprocess_tables(spec, max_omitted)
    times, pops, status = K.mqp_path(rng, w0, float(horizon), o.rate, o.prob, o.alias, o.jumps,
                                     m.rate, m.prob, m.alias, m.jumps, cap)
    term = _STATUS[status]
    return Trajectory(times, pops, term, float(times[-1]) if term is Terminal.CAPPED else float(horizon))


# -- batches ---------------------------------------------------------------
@dataclass(frozen=True)
class FinalStates:
    """Terminal states of ``len(states)`` replications."""

    states: np.ndarray
    status: np.ndarray
    stop_times: np.ndarray
    events: int
    seed: int

    @property
    def capped(self) -> int:
        return int(np.sum(self.status == K.CAPPED))

    @property
    def valid(self) -> np.ndarray:
        return self.status != K.CAPPED


def _run_batch(kernel, args, reps: int, seed: int, jobs: int) -> FinalStates:
    states = np.zeros(reps, dtype=np.int64)
    status = np.zeros(reps, dtype=np.int64)
    stops = np.zeros(reps)
    events = np.zeros(reps, dtype=np.int64)

    def work(lo, hi):
        for r in range(lo, hi):
            states[r], status[r], stops[r], events[r] = kernel(stream(seed, r), *args)

    jobs = max(1, min(jobs, reps))
    bounds = np.linspace(0, reps, jobs + 1).astype(int)
    if jobs == 1:
        work(0, reps)
    else:
        with ThreadPoolExecutor(jobs) as pool:
            list(pool.map(lambda k: work(bounds[k], bounds[k + 1]), range(jobs)))
    return FinalStates(states, status, stops, int(events.sum()), seed)


def mbp_final_states(law: OffspringLaw, z0: int, horizon: float, reps: int, seed: int,
                     cap: int = DEFAULT_CAP, jobs: int = 1) -> FinalStates:
    tab = offspring_table(law)
    args = (z0, float(horizon), tab.rate, tab.prob, tab.alias, tab.jumps, cap)
    return _run_batch(K.mbp_final, args, reps, seed, jobs)


def mqp_final_states(spec: QProcessSpec, w0: int, horizon: float, reps: int, seed: int,
                     cap: int = DEFAULT_CAP, jobs: int = 1, max_omitted: float = 1e-8) -> FinalStates:
    o, m = qprocess_tables(spec, max_omitted)
    args = (w0, float(horizon), o.rate, o.prob, o.alias, o.jumps, m.rate, m.prob, m.alias, m.jumps, cap)
    return _run_batch(K.mqp_final, args, reps, seed, jobs)


# -- estimators ------------------------------------------------------------
def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class SurvivalEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    replications: int
    capped: int = 0

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def estimate_survival(law: OffspringLaw, t: float, reps: int, seed: int,
                      cap: int = DEFAULT_CAP, jobs: int = 1) -> SurvivalEstimate:
    """Monte Carlo ``P(Z(t) > 0 | Z(0) = 1)`` with a Wilson 95% interval."""
    if reps < 100:
        raise DomainError("need at least 100 replications")
    if t == 0:
        return SurvivalEstimate(1.0, 1.0, 1.0, reps)
    fs = mbp_final_states(law, 1, t, reps, seed, cap, jobs)
    ok = fs.valid
    alive = int(np.sum(fs.states[ok] > 0))
    n = int(ok.sum())
    lo, hi = wilson_interval(alive, n)
    return SurvivalEstimate(alive / n, lo, hi, n, fs.capped)


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Empirical pmf on ``support`` with 95% Wilson half-widths."""

    support: np.ndarray
    masses: np.ndarray
    replications: int
    seed: int
    half_width: np.ndarray
    capped: int = 0

    def pmf(self, n: int) -> np.ndarray:
        """Masses on ``0..n`` (mass above ``n`` dropped)."""
        out = np.zeros(n + 1)
        sel = self.support <= n
        out[self.support[sel]] = self.masses[sel]
        return out

    def rows(self):
        return [(int(s), float(m), float(h)) for s, m, h in zip(self.support, self.masses, self.half_width)]

    def merge(self, other: EmpiricalDistribution) -> EmpiricalDistribution:
        """Pool two independent samples."""
        n = self.replications + other.replications
        top = int(max(self.support.max(initial=0), other.support.max(initial=0)))
        counts = self.pmf(top) * self.replications + other.pmf(top) * other.replications
        return _from_counts(np.rint(counts).astype(np.int64), n, self.seed, self.capped + other.capped)


def _from_counts(counts: np.ndarray, n: int, seed: int, capped: int) -> EmpiricalDistribution:
    support = np.nonzero(counts)[0]
    masses = counts[support] / n
    half = np.empty(len(support))
    for k, c in enumerate(counts[support]):
        lo, hi = wilson_interval(int(c), n)
        half[k] = 0.5 * (hi - lo)
    return EmpiricalDistribution(support, masses, n, seed, half, capped)


def empirical_transition(kind: str, params, t: float, i: int, reps: int, seed: int,
                         cap: int = DEFAULT_CAP, jobs: int = 1) -> EmpiricalDistribution:
    """Empirical law of ``Z(t)`` (``kind='mbp'``) or ``W(t)`` (``kind='mqp'``)
    started from ``i``.  ``params`` is an offspring law or a Q-process spec."""
    if reps < 1000:
        raise DomainError("need at least 1000 replications")
    kind = kind.lower()
    if kind == "mbp":
        fs = mbp_final_states(params, i, t, reps, seed, cap, jobs)
    elif kind == "mqp":
        spec = params if isinstance(params, QProcessSpec) else build_qprocess(params)
        fs = mqp_final_states(spec, i, t, reps, seed, cap, jobs)
    else:
        raise DomainError(f"unknown process kind {kind!r}")
    states = fs.states[fs.valid]
    counts = np.bincount(states)
    return _from_counts(counts, len(states), seed, fs.capped)


def reweighted_qprocess(law: OffspringLaw, t: float, i: int, reps: int, seed: int,
                        cap: int = DEFAULT_CAP, jobs: int = 1) -> EmpiricalDistribution:
    """Q-process pmf from branching-process runs weighted by ``j q**(j-i) / (i beta**t)``.

    The weights have mean one; the estimate is self-normalised so the
    masses sum to one.  Half-widths use the weighted-sample standard error.
    """
    ext = extinction_data(law)
    fs = mbp_final_states(law, i, t, reps, seed, cap, jobs)
    states = fs.states[fs.valid]
    weights = states * ext.q ** (states - i).astype(float) / (i * math.exp(ext.log_beta * t))
    top = int(states.max(initial=0))
    sums = np.bincount(states, weights=weights, minlength=top + 1)
    sq = np.bincount(states, weights=weights**2, minlength=top + 1)
    n = len(states)
    norm = sums.sum()
    support = np.nonzero(sums > 0)[0]
    masses = sums[support] / norm
    se = np.sqrt(np.maximum(sq[support] / n - (sums[support] / n) ** 2, 0.0) / n)
    return EmpiricalDistribution(support, masses, n, seed, 1.96 * se * n / norm, fs.capped)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    n = max(len(p), len(q))
    a = np.zeros(n)
    b = np.zeros(n)
    a[: len(p)] = p
    b[: len(q)] = q
    return 0.5 * float(np.abs(a - b).sum())
