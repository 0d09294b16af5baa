"""The Markov Q-process: the branching process conditioned to survive forever.

For a law with extinction probability ``q`` and ``beta = exp(f'(q))`` the
Q-process lives on ``{1, 2, ...}`` with transition functions

    Q_ij(t) = j q**(j-i) P_ij(t) / (i beta**t),

and transformed intensities ``lambda_1 = a_1 - ln(beta)``,
``lambda_j = j q**(j-1) a_j`` (``j >= 2``).  Its generating functions reuse
the remainder machinery of :mod:`mbplab.gf`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import mpmath
import numpy as np

from . import gf
from .errors import DomainError, InfiniteMoment, NotApplicable, RateOverflow, ToleranceNotMet
from .gf import DEFAULT_TOL, ExtinctionData, FlowModel
from .offspring import Criticality, OffspringLaw, Stable
from .series import PowerSeries, cauchy_coefficients, extraction_radius, line_integral

MAX_WINDOW = 1 << 22


class QProcessClass(str, Enum):
    RESTRICTIVE = "restrictive"
    EXPLOSIVE = "explosive"


@dataclass(frozen=True)
class QProcessSpec:
    """Intensities and classification of the Q-process built on ``base``.

    Attributes
    ----------
    lambda_1 : float
        ``a_1 - ln(beta)``, minus the total jump rate of the marked line.
    alpha : float
        ``g'(1) = q f''(q)``; ``inf`` for stable laws with ``nu < 1``.
    gamma : float or None
        ``alpha / |ln beta|`` for restrictive processes.
    kappa : float
        ``q**2 f'''(q)``, needed for the variance.
    """

    base: OffspringLaw
    ext: ExtinctionData
    lambda_1: float
    kind: QProcessClass
    alpha: float
    gamma: float | None
    kappa: float
    model: FlowModel = field(repr=False, compare=False)

    @property
    def q(self) -> float:
        return self.ext.q

    def intensities(self, n: int) -> np.ndarray:
        """``lambda_0 .. lambda_n``."""
        a = self.base.coefficients(n)
        k = np.arange(n + 1, dtype=float)
        lam = k * self.q ** np.maximum(k - 1, 0) * a
        lam[0] = 0.0
        if n >= 1:
            lam[1] = self.lambda_1
        return lam

    def ordinary_rates(self, n: int) -> np.ndarray:
        """Per-particle rates ``q**(k-1) a_k`` of the unmarked particles."""
        a = self.base.coefficients(n)
        k = np.arange(n + 1, dtype=float)
        return self.q ** (k - 1) * a

    def omitted_rates(self, n: int) -> tuple[float, float]:
        """Rate mass beyond offspring size ``n`` for (ordinary, marked) particles."""
        if isinstance(self.base, Stable):
            return self.base.tail_mass(n), self.base.tail_first_moment(n)
        return 0.0, 0.0


def build_qprocess(law: OffspringLaw, tol: float = 1e-13) -> QProcessSpec:
    """Assemble the Q-process of ``law``."""
    ext = gf.extinction_data(law, tol)
    model = FlowModel(law, ext)
    q = ext.q
    lambda_1 = law.a1 - ext.log_beta
    f2 = float(np.real(law._f2(np.asarray(q))))
    f3 = float(np.real(law._f3(np.asarray(q))))
    alpha = q * f2
    kappa = q * q * f3 if math.isfinite(f3) else math.inf
    if ext.criticality is Criticality.CRITICAL:
        kind, gamma = QProcessClass.EXPLOSIVE, None
    else:
        kind, gamma = QProcessClass.RESTRICTIVE, alpha / ext.lambda_S
    return QProcessSpec(law, ext, lambda_1, kind, alpha, gamma, kappa, model)


def generator_gf(spec: QProcessSpec, s: float) -> float:
    """``g(s) = s [f'(qs) - f'(q)]``; exactly zero at ``s = 1``."""
    if not 0.0 <= s <= 1.0:
        raise DomainError("s must lie in [0, 1]")
    if s == 1.0:
        return 0.0
    law, q = spec.base, spec.q
    return s * (law.f_prime(q * s) - law.f_prime(q))


# -- q-matrix -------------------------------------------------------------
@dataclass(frozen=True)
class QMatrixRow:
    """Row ``i`` of the q-matrix restricted to ``j = i-1 .. i+window``."""

    i: int
    entries: dict
    omitted_rate: float = 0.0

    @property
    def diagonal(self) -> float:
        return self.entries[self.i]

    def row_sum(self) -> float:
        return math.fsum(self.entries.values())

    def rows(self):
        return [(self.i, j, v) for j, v in sorted(self.entries.items())]


def _row_omitted(spec: QProcessSpec, i: int, kmax: int) -> float:
    ordinary, marked = spec.omitted_rates(kmax)
    return (i - 1) * ordinary + marked


def row_window(spec: QProcessSpec, i: int, max_omitted: float = 1e-8) -> int:
    """Largest offspring size ``k`` kept so omitted rate < ``max_omitted * |q_ii|``.

    Raises
    ------
    RateOverflow
        When no window up to ``2**22`` achieves the bound.
    """
    law = spec.base
    if not isinstance(law, Stable) or law.nu == 1.0:
        return law.truncation_order()
    diag = abs(i * law.a1 - spec.ext.log_beta)
    budget = max_omitted * diag
    if _row_omitted(spec, i, MAX_WINDOW) >= budget:
        raise RateOverflow(
            f"row {i}: omitted rate {_row_omitted(spec, i, MAX_WINDOW):.3e} at window {MAX_WINDOW} "
            f"exceeds {budget:.3e}"
        )
    lo, hi = 1, 2
    while _row_omitted(spec, i, hi) >= budget:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _row_omitted(spec, i, mid) < budget:
            hi = mid
        else:
            lo = mid
    return hi


def q_matrix_row(spec: QProcessSpec, i: int, window: int | None = None,
                 max_omitted: float = 1e-8) -> QMatrixRow:
    """Entries ``q_ij = j q**(j-i) a_{j-i+1}`` and ``q_ii = i a_1 - ln(beta)``.

    The ``j = i-1`` entry is ``(i-1) a_0 / q``.  ``window`` bounds the
    largest upward jump ``j - i``; by default it is chosen so the omitted
    rate is below ``max_omitted * |q_ii|``.
    """
    if i < 1:
        raise DomainError("states start at 1")
    kmax = row_window(spec, i, max_omitted) if window is None else window + 1
    a = spec.base.coefficients(kmax)
    q = spec.q
    entries = {}
    for k in range(kmax + 1):
        j = i - 1 + k
        if j < 1:
            continue
        if k == 1:
            entries[j] = i * a[1] - spec.ext.log_beta
        else:
            entries[j] = j * q ** (k - 1) * a[k]
    return QMatrixRow(i, entries, _row_omitted(spec, i, kmax) + 0.0)


# -- transition functions ------------------------------------------------
def _q_rows(spec: QProcessSpec, t: float, imax: int, n: int, tol: float) -> np.ndarray:
    """``Q_ij(t)`` for ``i = 1..imax`` and ``j = 0..n`` (column 0 is zero)."""
    q = spec.q
    coeffs, _ = gf._power_coefficients(spec.model, [t], imax, n, q, tol)
    coeffs = coeffs[0]
    j = np.arange(n + 1)
    i = np.arange(1, imax + 1)[:, None]
    # coefficients of F(t;qz)**i are q**j P_ij(t)
    out = j[None, :] * coeffs / (i * q**i * spec.ext.beta_power(t))
    out[:, 0] = 0.0
    return out


def qprocess_transition(spec: QProcessSpec, t: float, i: int, n: int,
                        tol: float = DEFAULT_TOL) -> PowerSeries:
    """``Q_ij(t)`` for ``j = 0..n`` by reweighting the branching transition."""
    if i < 1:
        raise DomainError("states start at 1")
    if t == 0:
        c = np.zeros(n + 1)
        if i <= n:
            c[i] = 1.0
        return PowerSeries(c, label=f"Q_{i}j(t=0)")
    row = _q_rows(spec, t, i, n, tol)[i - 1]
    return PowerSeries(row, label=f"Q_{i}j(t={t:g})", tail_bound=max(0.0, 1.0 - row.sum()))


def qprocess_matrix(spec: QProcessSpec, t: float, kmax: int, n: int,
                    tol: float = DEFAULT_TOL) -> np.ndarray:
    """Rows ``Q_kj(t)``, ``k = 1..kmax``, ``j = 0..n``."""
    if t == 0:
        out = np.zeros((kmax, n + 1))
        for k in range(1, min(kmax, n) + 1):
            out[k - 1, k] = 1.0
        return out
    return _q_rows(spec, t, kmax, n, tol)


def qprocess_gf(spec: QProcessSpec, t: float, s: float, i: int = 1,
                tol: float = DEFAULT_TOL) -> float:
    """``G_i(t;s) = [F(t;qs)/q]**(i-1) * (s / beta**t) * dF/dx at x = qs``."""
    if not 0.0 <= s < 1.0:
        raise DomainError("s must lie in [0, 1)")
    if t == 0:
        return s**i
    m, q = spec.model, spec.q
    y0 = q * (1.0 - s)
    r = complex(m.remainder([t], q * s, tol)[0])
    slope = m.psi(r) / m.psi(complex(y0))
    value = ((q - r) / q) ** (i - 1) * s * slope / spec.ext.beta_power(t)
    return float(np.real(value))


def qprocess_moments(spec: QProcessSpec, t: float, i: int = 1) -> tuple[float, float]:
    """Mean and variance of ``W(t)`` started from ``i``.

    With ``m1 = beta**t`` and ``m2 = alpha m1 (m1 - 1) / ln(beta)`` (the
    first two factorial moments of the unmarked particles), the marked line
    contributes ``1 + m2/m1`` to the mean and the unmarked ``i - 1``
    particles add ``(i - 1) m1``.

    Raises
    ------
    InfiniteMoment
        When ``alpha`` (or, for the variance, ``kappa``) is infinite.
    """
    if t < 0 or i < 1:
        raise DomainError("need t >= 0 and i >= 1")
    alpha, kappa = spec.alpha, spec.kappa
    if not math.isfinite(alpha) or not math.isfinite(kappa):
        raise InfiniteMoment("the offspring law has an infinite second moment")
    lam = spec.ext.log_beta
    m1 = math.exp(lam * t)
    if lam == 0.0:
        m2_over = alpha * t
        m3_over = 1.5 * alpha**2 * t**2 + kappa * t
    else:
        m2_over = alpha * math.expm1(lam * t) / lam
        m3_over = ((3 * alpha**2 / lam + kappa) * math.expm1(2 * lam * t) / (2 * lam)
                   - 3 * alpha**2 * math.expm1(lam * t) / lam**2)
    mean_marked = 1.0 + m2_over
    var_marked = m3_over + m2_over - m2_over**2
    m2 = m2_over * m1
    mean = mean_marked + (i - 1) * m1
    var = var_marked + (i - 1) * (m2 + m1 - m1 * m1)
    return mean, max(var, 0.0)


# -- invariant objects -----------------------------------------------------
def _stationary_gf(spec: QProcessSpec, s, radius=None):
    m, q = spec.model, spec.q
    s = np.asarray(s, dtype=complex)
    amp = gf._amplitude(m, q * s, radius)
    return s * spec.ext.lambda_S * amp / m.psi(q * (1.0 - s))


def stationary_gf(spec: QProcessSpec, s):
    """``U(s) = s |ln beta| A(qs) / f(qs)``: invariant distribution of a
    restrictive Q-process."""
    if spec.kind is not QProcessClass.RESTRICTIVE:
        raise NotApplicable("U(s) exists only for restrictive Q-processes")
    arr = np.asarray(s, dtype=float)
    if np.any((arr < 0) | (arr >= 1)):
        raise DomainError("s must lie in [0, 1)")
    val = _stationary_gf(spec, arr).real
    return float(val) if np.ndim(s) == 0 else val


def stationary_distribution(spec: QProcessSpec, n: int) -> PowerSeries:
    """``u_0 .. u_n`` (``u_0 = 0``)."""
    if spec.kind is not QProcessClass.RESTRICTIVE:
        raise NotApplicable("U(s) exists only for restrictive Q-processes")
    radius = extraction_radius(n)
    c, resid = cauchy_coefficients(lambda z: _stationary_gf(spec, z, radius), n, radius)
    c = c.real
    c[0] = 0.0
    return PowerSeries(c, label="u", tail_bound=max(0.0, 1.0 - c.sum()), extraction_error=resid)


def _pi_gf(spec: QProcessSpec, s):
    s = np.asarray(s, dtype=complex)
    return s / spec.model.psi(1.0 - s)


def pi_gf(spec: QProcessSpec, s):
    """``pi(s) = s / f(s)``: invariant measure of an explosive Q-process."""
    if spec.kind is not QProcessClass.EXPLOSIVE:
        raise NotApplicable("pi(s) is defined for explosive Q-processes")
    val = _pi_gf(spec, s).real
    return float(val) if np.ndim(s) == 0 else val


def pi_coefficients(spec: QProcessSpec, n: int) -> PowerSeries:
    """``pi_0 .. pi_n`` (``pi_0 = 0``)."""
    if spec.kind is not QProcessClass.EXPLOSIVE:
        raise NotApplicable("pi(s) is defined for explosive Q-processes")
    c, resid = cauchy_coefficients(lambda z: _pi_gf(spec, z), n)
    c = c.real
    c[0] = 0.0
    return PowerSeries(c, label="pi", extraction_error=resid)


def explosive_measure_partial_sums(spec: QProcessSpec, n: int) -> float:
    """``sum_{j<=n} pi_j``."""
    return float(pi_coefficients(spec, n).coefficients.sum())


def _ratio_limit_gf(spec: QProcessSpec, s, radius=None):
    m, q = spec.model, spec.q
    s = np.asarray(s, dtype=complex)

    def integrand(x):
        y = q * (1.0 - x)
        return q * m.excess_slope(y) / m.p1(y)

    return s * np.exp(line_integral(integrand, 0.0, s, gf._levels(radius)))


def ratio_limit_gf(spec: QProcessSpec, s):
    """``W(s) = s exp{int_0^s |h(x)| / fhat(x) dx}``, generating ``omega``."""
    arr = np.asarray(s, dtype=float)
    if np.any((arr < 0) | (arr >= 1)):
        raise DomainError("s must lie in [0, 1)")
    val = _ratio_limit_gf(spec, arr).real
    return float(val) if np.ndim(s) == 0 else val


def ratio_limit_measure(spec: QProcessSpec, n: int) -> PowerSeries:
    """``omega_0 .. omega_n`` with ``omega_1 = 1``."""
    radius = extraction_radius(n)
    c, resid = cauchy_coefficients(lambda z: _ratio_limit_gf(spec, z, radius), n, radius)
    c = c.real
    c[0] = 0.0
    return PowerSeries(c, label="omega", extraction_error=resid)


# -- scaling limit of an explosive process --------------------------------
def limit_laplace(nu: float, theta):
    """Laplace transform ``(1 + theta**nu)**(-(1 + 1/nu))`` of the limit law."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise DomainError("theta must be nonnegative")
    out = (1.0 + theta**nu) ** (-(1.0 + 1.0 / nu))
    return float(out) if out.ndim == 0 else out


def _stehfest_cdf(nu: float, x: float, degree: int) -> float:
    if x == 0:
        return 0.0
    mp_nu = mpmath.mpf(nu)
    with mpmath.workdps(max(30, 2 * degree)):
        val = mpmath.invertlaplace(
            lambda p: (1 + p**mp_nu) ** (-(1 + 1 / mp_nu)) / p,
            x,
            method="stehfest",
            degree=degree,
        )
    return float(val)


def limit_cdf(nu: float, x, degree: int = 24, check: float = 1e-3):
    """CDF of the limit law of ``q(t) W(t)``.

    ``nu = 1`` uses the closed form ``1 - exp(-x) - x exp(-x)``.  Otherwise
    the transform divided by ``p`` is inverted with the Gaver-Stehfest rule
    at two orders; a disagreement above ``check`` raises.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0):
        raise DomainError("x must be nonnegative")
    if nu == 1.0:
        out = -np.expm1(-xs) - xs * np.exp(-xs)
    else:
        out = np.array([_stehfest_cdf(nu, xi, degree) for xi in xs])
        low = np.array([_stehfest_cdf(nu, xi, degree - 8) for xi in xs])
        gap = float(np.max(np.abs(out - low))) if xs.size else 0.0
        if gap > check:
            raise ToleranceNotMet(f"Stehfest orders disagree by {gap:.2e}")
        out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if np.ndim(x) == 0 else out
