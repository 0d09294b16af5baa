"""Generating-function engine for the branching process.

Everything here is computed from the remainder ``R(t;s) = q - F(t;s)``
rather than from ``F`` itself.  ``R`` obeys ``dR/dt = -psi(R)`` with
``psi(y) = f(q - y)``, and since ``psi(y) = y * p1(y)`` the logarithm
``log R`` satisfies the smooth equation ``d log R / dt = -p1(R)``.  Solving
for ``log R`` keeps full relative precision even when ``R`` is of order
``beta**t`` or ``t**(-1/nu)``, which is where every limit theorem lives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as npoly
from scipy import integrate, optimize

from .errors import (
    ConvergenceFailure,
    DegenerateCondition,
    DomainError,
    NotApplicable,
    SingularPoint,
    ToleranceNotMet,
)
from .offspring import Criticality, OffspringLaw, Stable
from .series import PowerSeries, cauchy_coefficients, extraction_radius, line_integral, sample_count

DEFAULT_TOL = 1e-10
EXTRACTION_SLACK = 100.0


@dataclass(frozen=True)
class ExtinctionData:
    """Extinction probability and the exponential decay rate.

    ``log_beta`` is ``f'(q)`` and is kept separately so that ``beta**t``
    can be formed as ``exp(t * log_beta)`` without round-off.
    """

    q: float
    beta: float
    lambda_S: float
    criticality: Criticality
    log_beta: float = 0.0

    def beta_power(self, t):
        return np.exp(np.multiply(t, self.log_beta))


@dataclass(frozen=True)
class GfValue:
    """``F(t;s)`` together with the remainder ``R = q - F``."""

    t: float
    s: float
    value: float
    R: float


def extinction_data(law: OffspringLaw, tol: float = 1e-13) -> ExtinctionData:
    """Smallest root ``q`` of ``f`` on ``(0, 1]`` and ``beta = exp(f'(q))``.

    Non-supercritical laws return ``q = 1`` from the sign of ``f'(1)``.
    """
    mean = law.offspring_mean
    crit = law.criticality
    if crit is not Criticality.SUPERCRITICAL:
        log_beta = float(mean)
        return ExtinctionData(1.0, math.exp(log_beta), abs(log_beta), crit, log_beta)

    # f(0) > 0 and f < 0 just left of 1 because f'(1) > 0
    upper = None
    for k in range(1, 60):
        b = 1.0 - 2.0 ** -k
        if law.f(b) < 0:
            upper = b
            break
    if upper is None:
        raise ConvergenceFailure("could not bracket the extinction root")
    q = optimize.brentq(law.f, 0.0, upper, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(law.f(q)) > tol:
        raise ConvergenceFailure(f"extinction root residual {law.f(q):.3e} exceeds {tol:.1e}")
    log_beta = float(law.f_prime(q))
    return ExtinctionData(q, math.exp(log_beta), abs(log_beta), crit, log_beta)


class FlowModel:
    """The law re-expanded about its extinction root.

    ``psi(y) = f(q - y) = y * p1(y)``; for finite laws ``p1`` is a
    polynomial and ``p1(y) - p1(0) = y * p2(y)``.  The constant term of
    ``psi`` is zero by construction, and so is the linear term for
    critical laws, so these identities hold exactly in floating point.
    """

    def __init__(self, law: OffspringLaw, ext: ExtinctionData | None = None):
        self.law = law
        self.ext = ext if ext is not None else extinction_data(law)
        self.q = self.ext.q
        self.stable = isinstance(law, Stable)
        if self.stable:
            self.nu, self.c = law.nu, law.c
        else:
            shifted = Polynomial(law.coefficients(law.degree))(Polynomial([self.q, -1.0])).coef
            b = np.zeros(law.degree + 1)
            b[: len(shifted)] = shifted
            b[0] = 0.0
            if self.ext.criticality is Criticality.CRITICAL:
                b[1] = 0.0
            else:
                b[1] = -self.ext.log_beta
            self.psi_coeffs = b
            self.p1_coeffs = b[1:]
            self.p2_coeffs = b[2:] if len(b) > 2 else np.zeros(1)
            # (psi'(y) - psi'(0)) / y
            k = np.arange(2, len(b))
            self.excess_coeffs = k * b[2:] if len(b) > 2 else np.zeros(1)

    # -- pieces of psi ---------------------------------------------------
    def psi(self, y):
        if self.stable:
            return self.c * np.power(y, 1.0 + self.nu)
        return npoly.polyval(y, self.psi_coeffs)

    def p1(self, y):
        if self.stable:
            return self.c * np.power(y, self.nu)
        return npoly.polyval(y, self.p1_coeffs)

    def p2(self, y):
        if self.stable:
            raise NotApplicable("p2 is only used for non-critical laws")
        return npoly.polyval(y, self.p2_coeffs)

    def excess_slope(self, y):
        """``(psi'(y) - psi'(0)) / y``."""
        if self.stable:
            return self.c * (1.0 + self.nu) * np.power(y, self.nu - 1.0)
        return npoly.polyval(y, self.excess_coeffs)

    # -- the flow --------------------------------------------------------
    def remainder(self, times, s, tol: float = DEFAULT_TOL) -> np.ndarray:
        """``R(t;s)`` for every ``t`` in ``times`` and every point ``s``.

        Returns a complex array of shape ``(len(times),) + shape(s)``.
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(times < 0):
            raise DomainError("time must be nonnegative")
        s = np.asarray(s, dtype=complex)
        r0 = (self.q - s).ravel()
        out = np.zeros((len(times), r0.size), dtype=complex)
        live = r0 != 0
        tmax = float(times.max()) if len(times) else 0.0
        if tmax == 0.0 or not np.any(live):
            out[:, live] = r0[live]
            return out.reshape((len(times),) + s.shape)

        y0 = np.log(r0[live])
        order = np.argsort(times)
        sol = integrate.solve_ivp(
            lambda _t, y: -self.p1(np.exp(y)),
            (0.0, tmax),
            y0,
            method="RK45",
            t_eval=times[order],
            rtol=tol,
            atol=tol,
        )
        if not sol.success:
            raise ConvergenceFailure(f"flow integration failed: {sol.message}")
        logs = np.empty((len(times), y0.size), dtype=complex)
        logs[order] = sol.y.T
        out[:, live] = np.exp(logs)
        return out.reshape((len(times),) + s.shape)

    def elapsed_time(self, r_end: float, r_start: float) -> float:
        """Time the flow needs to carry ``R`` from ``r_start`` to ``r_end``.

        Both must share a sign with ``|r_end| <= |r_start|``.  The integral
        ``int dy / psi(y)`` is taken in the variable ``log|y|`` where the
        integrand ``1/p1`` is smooth.
        """
        if r_end == r_start:
            return 0.0
        sign = 1.0 if r_start > 0 else -1.0
        val, _ = integrate.quad(
            lambda u: 1.0 / float(np.real(self.p1(complex(sign * math.exp(u))))),
            math.log(abs(r_end)),
            math.log(abs(r_start)),
            epsabs=0.0,
            epsrel=1e-13,
            limit=200,
        )
        return val


def _model(law, ext=None) -> FlowModel:
    return law if isinstance(law, FlowModel) else FlowModel(law, ext)


def _check_s(s, upper=1.0):
    if not (0.0 <= s < upper):
        raise DomainError(f"s must lie in [0, {upper}), got {s}")


def remainder(law, t, s, tol: float = DEFAULT_TOL):
    """Vectorised ``R(t;s)`` for real or complex ``s``; scalar ``t``."""
    m = _model(law)
    out = m.remainder([t], s, tol)[0]
    return out.real if not np.iscomplexobj(s) else out


def solve_F(law, t: float, s: float, tol: float = DEFAULT_TOL) -> GfValue:
    """Solve the backward equation ``dF/dt = f(F)``, ``F(0;s) = s``.

    The answer is checked against the integral form: the time needed by
    the flow to carry ``q - s`` to ``R`` must equal ``t``.  The mismatch is
    converted to an error in ``F`` by the local speed ``psi(R)``.

    Raises
    ------
    ToleranceNotMet
        If the two routes differ by more than ``10 * tol`` in ``F``.
    """
    if t < 0:
        raise DomainError("time must be nonnegative")
    _check_s(s)
    m = _model(law)
    r0 = m.q - s
    r = float(m.remainder([t], s, tol)[0].real)
    if t > 0 and r0 != 0:
        elapsed = m.elapsed_time(r, r0)
        mismatch = abs(elapsed - t) * abs(complex(m.psi(complex(r))))
        if mismatch > 10 * tol * max(1.0, abs(r0)):
            raise ToleranceNotMet(f"ODE and integral routes disagree by {mismatch:.3e} at t={t}, s={s}")
    return GfValue(t=float(t), s=float(s), value=m.q - r, R=r)


def _power_coefficients(model: FlowModel, times, imax: int, n: int, scale: float = 1.0,
                        tol: float = DEFAULT_TOL):
    """Coefficients of ``F(t; scale*z)**i`` for ``i = 1..imax``, ``j = 0..n``.

    The ``j >= 1`` coefficients are taken from ``F**i - q**i``, written as
    ``-R * sum_k F**k q**(i-1-k)`` so their error scales with ``|R|``.

    Returns
    -------
    coeffs : ndarray, shape (len(times), imax, n + 1)
    residue : float
        Largest imaginary part relative to the allowed extraction error.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    q = model.q
    radius = extraction_radius(n)
    m = sample_count(n, radius)
    z = radius * np.exp(2j * np.pi * np.arange(m) / m)
    rem = model.remainder(times, scale * z, tol)
    rem0 = model.remainder(times, 0.0, tol).real
    f_vals = q - rem
    geo = np.zeros_like(rem)
    fpow = np.ones_like(rem)
    inv_r = radius ** -np.arange(n + 1)
    out = np.zeros((len(times), imax, n + 1))
    worst = 0.0
    for i in range(1, imax + 1):
        geo = q * geo + fpow
        fpow = fpow * f_vals
        vals = -rem * geo
        c = np.fft.fft(vals, axis=-1)[:, : n + 1] / m * inv_r
        out[:, i - 1, 1:] = c[:, 1:].real
        out[:, i - 1, 0] = (q - rem0) ** i
        allowed = EXTRACTION_SLACK * max(tol, 1e-13) * np.max(np.abs(vals), axis=-1) * inv_r[-1]
        ratio = np.max(np.abs(c[:, 1:].imag), axis=-1) / np.maximum(allowed, 1e-300)
        worst = max(worst, float(np.max(ratio)) if ratio.size else 0.0)
    if worst > 1.0:
        raise ToleranceNotMet(f"coefficient extraction residue {worst:.2f}x over budget")
    return out, worst


def transition_probabilities(law, t: float, i: int, n: int, tol: float = DEFAULT_TOL) -> PowerSeries:
    """``P_ij(t)`` for ``j = 0..n``: coefficients of ``F(t;s)**i``."""
    if i < 1 or n < 0:
        raise DomainError("need i >= 1 and n >= 0")
    if t == 0:
        c = np.zeros(n + 1)
        if i <= n:
            c[i] = 1.0
        return PowerSeries(c, label=f"P_{i}j(t=0)")
    m = _model(law)
    coeffs, worst = _power_coefficients(m, [t], i, n, 1.0, tol)
    row = coeffs[0, i - 1]
    return PowerSeries(row, label=f"P_{i}j(t={t:g})", tail_bound=max(0.0, 1.0 - row.sum()),
                       extraction_error=worst)


def transition_matrix(law, t: float, kmax: int, n: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Rows ``P_kj(t)`` for ``k = 1..kmax``, ``j = 0..n`` (row ``k-1``)."""
    if t == 0:
        out = np.zeros((kmax, n + 1))
        for k in range(1, min(kmax, n) + 1):
            out[k - 1, k] = 1.0
        return out
    coeffs, _ = _power_coefficients(_model(law), [t], kmax, n, 1.0, tol)
    return coeffs[0]


def transition_family(law, times, i: int, n: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``P_ij(t)`` on a time grid in one integration; shape ``(len(times), n+1)``."""
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise DomainError("time grid must be positive")
    coeffs, _ = _power_coefficients(_model(law), times, i, n, 1.0, tol)
    return coeffs[:, i - 1, :]


# -- limit objects ------------------------------------------------------
def _levels(radius: float | None) -> int:
    """Graded panels needed when singularities sit ``1 - radius`` away."""
    if radius is None:
        return 44
    return int(min(44, np.ceil(np.log2(1.0 / (1.0 - radius))) + 8))


def _amplitude(model: FlowModel, s, radius=None):
    """``A(s)`` on the complex plane via the singularity-free integrand."""
    y_end = model.q - np.asarray(s, dtype=complex)
    integral = line_integral(lambda y: model.p2(y) / model.p1(y), 0.0, y_end, _levels(radius))
    return y_end * np.exp(-integral)


def survival_amplitude(law, s):
    """Limit ``A(s) = lim R(t;s) / beta**t`` for a non-critical law.

    Equal to ``(q-s) exp{int_s^q [1/(u-q) - f'(q)/f(u)] du}``.
    """
    m = _model(law)
    if m.ext.criticality is Criticality.CRITICAL:
        raise NotApplicable("the amplitude A(s) is defined for non-critical laws")
    arr = np.asarray(s, dtype=float)
    if np.any((arr < 0) | (arr > m.q)):
        raise DomainError(f"s must lie in [0, q] with q={m.q}")
    val = _amplitude(m, arr).real
    return float(val) if np.ndim(s) == 0 else val


def amplitude_at_time(law, t: float, s: float, tol: float = DEFAULT_TOL) -> float:
    """``A(t;s) = R(t;s) / beta**t``."""
    m = _model(law)
    return float(m.remainder([t], s, tol)[0].real) / float(m.ext.beta_power(t))


def _flow_time(model: FlowModel, s, radius=None):
    s = np.asarray(s, dtype=complex)
    return line_integral(lambda x: 1.0 / model.psi(1.0 - x), 0.0, s, _levels(radius))


def flow_time(law, s):
    """``M(s) = int_0^s dx / f(x)`` for a critical law."""
    m = _model(law)
    if m.ext.criticality is not Criticality.CRITICAL:
        raise NotApplicable("M(s) is defined for critical laws")
    arr = np.asarray(s, dtype=float)
    if np.any((arr < 0) | (arr >= 1)):
        raise DomainError("s must lie in [0, 1)")
    val = _flow_time(m, arr).real
    return float(val) if np.ndim(s) == 0 else val


def _invariant_gf(model: FlowModel, s, radius=None):
    a0 = model.law.a0
    if model.ext.criticality is Criticality.CRITICAL:
        return a0 * _flow_time(model, s, radius)
    ratio = _amplitude(model, s, radius) / _amplitude(model, 0.0)
    return a0 / model.ext.lambda_S * (1.0 - ratio)


def invariant_measure_gf(law, s):
    """Generating function ``M(s)`` of the invariant measure ``mu``."""
    m = _model(law)
    arr = np.asarray(s, dtype=float)
    if np.any((arr < 0) | (arr >= 1)):
        raise DomainError("s must lie in [0, 1)")
    val = _invariant_gf(m, arr).real
    return float(val) if np.ndim(s) == 0 else val


def invariant_measure(law, n: int) -> PowerSeries:
    """``mu_0 .. mu_n`` (``mu_0 = 0``) extracted from ``M``."""
    m = _model(law)
    radius = extraction_radius(n)
    c, resid = cauchy_coefficients(lambda z: _invariant_gf(m, z, radius), n, radius)
    c = c.real
    c[0] = 0.0
    return PowerSeries(c, label="mu", extraction_error=resid)


def tail_asymptote(law, t: float, s: float) -> float:
    """Large-time prediction for ``R(t;s)``.

    Non-critical: ``A(s) beta**t``.  Critical:
    ``N(t) (nu t)**(-1/nu) (1 + M(s)/t)**(-1/nu)``.
    """
    m = _model(law)
    if t <= 0:
        raise DomainError("t must be positive")
    if m.ext.criticality is not Criticality.CRITICAL:
        return float(survival_amplitude(m, s) * m.ext.beta_power(t))
    nu, _ = m.law.regular_variation()
    return normalizer(m, t) * (nu * t) ** (-1.0 / nu) * (1.0 + flow_time(m, s) / t) ** (-1.0 / nu)


def normalizer(law, t: float, damping: float = 0.5, tol: float = 1e-14, max_iter: int = 500) -> float:
    """The normalising function ``N(t)`` of a critical law.

    Solves ``N * L((nu t)**(1/nu) / N)**(1/nu) = 1`` where
    ``L(x) = x**(1+nu) f(1 - 1/x)``.  For constant ``L = c`` this is
    ``c**(-1/nu)``; otherwise a damped fixed-point iteration is used.
    """
    m = _model(law)
    if m.ext.criticality is not Criticality.CRITICAL:
        raise NotApplicable("N(t) is defined for critical laws")
    nu, limit = m.law.regular_variation()
    if m.stable:
        return limit ** (-1.0 / nu)

    def slowly_varying(x):
        return float(np.real(m.psi(1.0 / x))) * x ** (1.0 + nu)

    value = limit ** (-1.0 / nu)
    for _ in range(max_iter):
        x = (nu * t) ** (1.0 / nu) / value
        new = (1 - damping) * value + damping * slowly_varying(x) ** (-1.0 / nu)
        if abs(new - value) <= tol * value:
            return new
        value = new
    raise ConvergenceFailure("normaliser iteration did not converge")


def gf_derivative(law, t: float, s: float, tol: float = DEFAULT_TOL) -> float:
    """``dF(t;s)/ds = f(F(t;s)) / f(s)``."""
    m = _model(law)
    _check_s(s)
    r0 = m.q - s
    if r0 == 0:
        raise SingularPoint("f vanishes at s = q")
    if t == 0:
        return 1.0
    r = m.remainder([t], s, tol)[0]
    return float(np.real(m.psi(r) / m.psi(complex(r0))))


# -- the chain conditioned on eventual extinction -------------------------
def _extinct_mass(model: FlowModel, t: float, i: int, tol: float) -> float:
    """``q**i - F(t;0)**i``: probability of being alive at t yet dying later."""
    q = model.q
    r = float(model.remainder([t], 0.0, tol)[0].real)
    f0 = q - r
    return r * sum(f0**k * q ** (i - 1 - k) for k in range(i))


def conditioned_transition(law, t: float, i: int, n: int, tol: float = DEFAULT_TOL) -> PowerSeries:
    """``P_ij(t) q**j / sum_{k>=1} P_ik(t) q**k`` for ``j = 0..n``."""
    if i < 1:
        raise DomainError("need i >= 1")
    if t == 0:
        c = np.zeros(n + 1)
        if i <= n:
            c[i] = 1.0
        return PowerSeries(c, label=f"Ptilde_{i}j(t=0)")
    m = _model(law)
    denom = _extinct_mass(m, t, i, tol)
    if denom < 1e-14:
        raise DegenerateCondition(f"conditioning event has mass {denom:.2e}")
    coeffs, worst = _power_coefficients(m, [t], i, n, m.q, tol)
    row = coeffs[0, i - 1].copy()
    row[0] = 0.0
    row /= denom
    return PowerSeries(row, label=f"Ptilde_{i}j(t={t:g})", tail_bound=max(0.0, 1.0 - row.sum()),
                       extraction_error=worst)


def conditioned_gf(law, t: float, s, i: int = 1, tol: float = DEFAULT_TOL):
    """``[F(t;qs)**i - F(t;0)**i] / [q**i - F(t;0)**i]``."""
    m = _model(law)
    q = m.q
    s_arr = np.asarray(s, dtype=float)
    r = m.remainder([t], q * s_arr, tol)[0].real
    r0 = float(m.remainder([t], 0.0, tol)[0].real)
    f_s, f_0 = q - r, q - r0
    num = sum(f_s**k * f_0 ** (i - 1 - k) for k in range(i)) * (r0 - r)
    den = sum(f_0**k * q ** (i - 1 - k) for k in range(i)) * r0
    out = num / den
    return float(out) if np.ndim(s) == 0 else out


def _conditioned_limit_gf(model: FlowModel, s, radius=None):
    s = np.asarray(s, dtype=complex)
    return 1.0 - _amplitude(model, model.q * s, radius) / _amplitude(model, 0.0)


def conditioned_limit_gf(law, s):
    """``V(s) = M(qs) / M(q)``, the limit law of the conditioned chain."""
    m = _model(law)
    if m.ext.criticality is Criticality.CRITICAL:
        raise NotApplicable("V(s) is defined for non-critical laws")
    arr = np.asarray(s, dtype=float)
    if np.any((arr < 0) | (arr > 1)):
        raise DomainError("s must lie in [0, 1]")
    val = _conditioned_limit_gf(m, arr).real
    return float(val) if np.ndim(s) == 0 else val


def conditioned_limit(law, n: int) -> PowerSeries:
    """Coefficients ``nu_1 .. nu_n`` of ``V`` (index 0 is zero)."""
    m = _model(law)
    if m.ext.criticality is Criticality.CRITICAL:
        raise NotApplicable("V(s) is defined for non-critical laws")
    radius = extraction_radius(n)
    c, resid = cauchy_coefficients(lambda z: _conditioned_limit_gf(m, z, radius), n, radius)
    c = c.real
    c[0] = 0.0
    return PowerSeries(c, label="nu", tail_bound=max(0.0, 1.0 - c.sum()), extraction_error=resid)
