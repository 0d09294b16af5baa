"""Offspring intensity laws and their infinitesimal generating functions.

A law is the sequence of transformation intensities ``a_0, a_1, a_2, ...``
of a continuous-time Markov branching process: each particle lives an
exponential time with rate ``-a_1`` and is then replaced by ``j != 1``
particles with probability ``a_j / (-a_1)``.  The infinitesimal generating
function is ``f(s) = sum_j a_j s**j``.

Two families are provided:

* :class:`FiniteSupport` -- an explicit finite list of intensities.
* :class:`Stable` -- ``f(s) = c (1 - s)**(1 + nu)``, the critical law with a
  regularly varying tail of index ``nu`` in ``(0, 1]`` and constant slowly
  varying factor ``c``.  For ``nu < 1`` its second moment is infinite.
"""

from __future__ import annotations

import abc
import math
from collections.abc import Mapping
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import special

from .errors import ConfigError, DomainError, InvalidLaw

CONSERVATION_TOL = 1e-12


class Criticality(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class LawReport:
    """Summary returned by :meth:`OffspringLaw.validate`."""

    criticality: Criticality
    offspring_mean: float
    xlogx_finite: bool
    second_moment_finite: bool
    stable_params: tuple[float, float] | None = None


def _check_unit_interval(s):
    arr = np.asarray(s)
    if np.iscomplexobj(arr) or np.any(~np.isfinite(arr)) or np.any((arr < 0) | (arr > 1)):
        raise DomainError(f"generating function argument must lie in [0, 1], got {s!r}")
    return arr.astype(float)


def _as_output(value, like):
    return float(value) if np.ndim(like) == 0 else value


class OffspringLaw(abc.ABC):
    """Common interface of offspring laws.

    Public evaluators (``f``, ``f_prime``, ...) accept real ``s`` in
    ``[0, 1]`` only.  The underscored evaluators accept complex arrays and
    are used for contour integration and coefficient extraction.
    """

    # -- evaluators on the complex disk ---------------------------------
    @abc.abstractmethod
    def _f(self, z): ...

    @abc.abstractmethod
    def _f1(self, z): ...

    @abc.abstractmethod
    def _f2(self, z): ...

    @abc.abstractmethod
    def _f3(self, z): ...

    # -- intensities ----------------------------------------------------
    @abc.abstractmethod
    def coefficients(self, n: int) -> np.ndarray:
        """Intensities ``a_0 .. a_n`` (zero padded past the support)."""

    @abc.abstractmethod
    def tail_mass(self, n: int) -> float:
        """``sum_{j > n} a_j``; the conservation deficit of truncation at n."""

    @abc.abstractmethod
    def tail_first_moment(self, n: int) -> float:
        """``sum_{j > n} j a_j``."""

    @property
    @abc.abstractmethod
    def offspring_mean(self) -> float:
        """``a = f'(1-)``."""

    @abc.abstractmethod
    def regular_variation(self) -> tuple[float, float]:
        """Tail index ``nu`` and the limit of the slowly varying factor.

        Only defined for critical laws, where ``f(s) ~ L (1-s)**(1+nu)``.
        """

    @abc.abstractmethod
    def truncation_order(self, tol: float = 1e-10, n_max: int = 1 << 22) -> int:
        """Smallest ``n <= n_max`` with ``tail_mass(n) < tol``."""

    @property
    def a0(self) -> float:
        return float(self.coefficients(1)[0])

    @property
    def a1(self) -> float:
        return float(self.coefficients(1)[1])

    @property
    def total_rate(self) -> float:
        """Event rate per particle, ``-a_1``."""
        return -self.a1

    @property
    def criticality(self) -> Criticality:
        a = self.offspring_mean
        if a == 0.0:
            return Criticality.CRITICAL
        return Criticality.SUBCRITICAL if a < 0 else Criticality.SUPERCRITICAL

    # -- public real evaluators -----------------------------------------
    def f(self, s):
        """Infinitesimal generating function ``f(s)``."""
        arr = _check_unit_interval(s)
        return _as_output(np.real(self._f(arr)), s)

    def f_prime(self, s):
        """Derivative ``f'(s)``; at ``s = 1`` the offspring mean."""
        arr = _check_unit_interval(s)
        return _as_output(np.real(self._f1(arr)), s)

    def f_second(self, s):
        arr = _check_unit_interval(s)
        return _as_output(np.real(self._f2(arr)), s)

    def f_third(self, s):
        arr = _check_unit_interval(s)
        return _as_output(np.real(self._f3(arr)), s)

    def validate(self) -> LawReport:
        """Classify the law and report its moment conditions."""
        crit = self.criticality
        return LawReport(
            criticality=crit,
            offspring_mean=self.offspring_mean,
            xlogx_finite=self._xlogx_finite(),
            second_moment_finite=bool(np.isfinite(self.f_second(1.0))),
            stable_params=self._stable_params(),
        )

    def _xlogx_finite(self) -> bool:
        return True

    def _stable_params(self):
        return None


@dataclass(frozen=True)
class FiniteSupport(OffspringLaw):
    """Law with finitely many nonzero intensities ``a_0 .. a_J``."""

    coeffs: tuple[float, ...]

    def __init__(self, *coeffs):
        if len(coeffs) == 1 and np.ndim(coeffs[0]) == 1:
            coeffs = tuple(coeffs[0])
        object.__setattr__(self, "coeffs", tuple(float(a) for a in coeffs))
        self._check()

    def _check(self):
        a = self.coeffs
        if len(a) < 2:
            raise InvalidLaw("need at least a_0 and a_1")
        if not all(math.isfinite(x) for x in a):
            raise InvalidLaw("intensities must be finite")
        if a[0] <= 0:
            raise InvalidLaw(f"a_0 must be positive, got {a[0]}")
        if a[1] >= 0:
            raise InvalidLaw(f"a_1 must be negative, got {a[1]}")
        if any(x < 0 for j, x in enumerate(a) if j != 1):
            raise InvalidLaw("a_j must be nonnegative for j != 1")
        if abs(math.fsum(a)) > CONSERVATION_TOL * max(1.0, -a[1]):
            raise InvalidLaw(f"intensities must sum to zero, got {math.fsum(a)!r}")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def _f(self, z):
        return npoly.polyval(z, self.coeffs)

    def _deriv(self, z, m):
        c = npoly.polyder(self.coeffs, m)
        return npoly.polyval(z, c) if len(c) else np.zeros_like(z)

    def _f1(self, z):
        return self._deriv(z, 1)

    def _f2(self, z):
        return self._deriv(z, 2)

    def _f3(self, z):
        return self._deriv(z, 3)

    def coefficients(self, n: int) -> np.ndarray:
        out = np.zeros(n + 1)
        m = min(n + 1, len(self.coeffs))
        out[:m] = self.coeffs[:m]
        return out

    def tail_mass(self, n: int) -> float:
        return math.fsum(self.coeffs[n + 1:])

    def tail_first_moment(self, n: int) -> float:
        return math.fsum(j * a for j, a in enumerate(self.coeffs) if j > n)

    @property
    def offspring_mean(self) -> float:
        terms = [j * a for j, a in enumerate(self.coeffs)]
        mean = math.fsum(terms)
        scale = math.fsum(abs(x) for x in terms)
        return 0.0 if abs(mean) <= CONSERVATION_TOL * scale else mean

    def regular_variation(self) -> tuple[float, float]:
        if self.criticality is not Criticality.CRITICAL:
            raise InvalidLaw("regular variation at 1 is only defined for critical laws")
        return 1.0, 0.5 * self.f_second(1.0)

    def truncation_order(self, tol: float = 1e-10, n_max: int = 1 << 22) -> int:
        return self.degree


@dataclass(frozen=True)
class Stable(OffspringLaw):
    """Critical law ``f(s) = c (1 - s)**(1 + nu)`` with ``0 < nu <= 1``.

    Intensities are ``a_j = c (-1)**j binom(1 + nu, j)``; they are produced
    by the ratio recursion ``a_{j+1} = a_j (j - 1 - nu) / (j + 1)``, which
    avoids cancellation in the binomial coefficients.
    """

    nu: float
    c: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.nu <= 1.0):
            raise InvalidLaw(f"tail index nu must lie in (0, 1], got {self.nu}")
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise InvalidLaw(f"scale c must be positive, got {self.c}")

    def _f(self, z):
        return self.c * np.power(1.0 - z, 1.0 + self.nu)

    def _f1(self, z):
        return -self.c * (1.0 + self.nu) * np.power(1.0 - z, self.nu)

    def _f2(self, z):
        if self.nu == 1.0:
            return np.full(np.shape(z), 2.0 * self.c)
        w = 1.0 - np.asarray(z)
        with np.errstate(divide="ignore"):
            return self.c * self.nu * (1.0 + self.nu) * np.where(w == 0, np.inf, np.power(w, self.nu - 1.0))

    def _f3(self, z):
        if self.nu == 1.0:
            return np.zeros(np.shape(z))
        w = 1.0 - np.asarray(z)
        k = -self.c * self.nu * (1.0 + self.nu) * (self.nu - 1.0)
        with np.errstate(divide="ignore"):
            return k * np.where(w == 0, np.inf, np.power(w, self.nu - 2.0))

    def coefficients(self, n: int) -> np.ndarray:
        j = np.arange(n, dtype=float)
        ratios = (j - 1.0 - self.nu) / (j + 1.0)
        return self.c * np.concatenate(([1.0], np.cumprod(ratios)))

    def tail_mass(self, n: int) -> float:
        # partial sums of (-1)^j binom(1+nu, j) telescope to (-1)^n binom(nu, n)
        return float(self.c * (-1.0) ** (n + 1) * special.binom(self.nu, n))

    def tail_first_moment(self, n: int) -> float:
        if n == 0:
            return 0.0
        return float(self.c * (1.0 + self.nu) * (-1.0) ** (n - 1) * special.binom(self.nu - 1.0, n - 1))

    @property
    def offspring_mean(self) -> float:
        return 0.0

    def regular_variation(self) -> tuple[float, float]:
        return self.nu, self.c

    def truncation_order(self, tol: float = 1e-10, n_max: int = 1 << 22) -> int:
        if self.nu == 1.0:
            return 2
        if self.tail_mass(n_max) >= tol:
            return n_max
        lo, hi = 1, 2
        while hi < n_max and self.tail_mass(hi) >= tol:
            lo, hi = hi, min(2 * hi, n_max)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.tail_mass(mid) < tol:
                hi = mid
            else:
                lo = mid
        return hi

    def _stable_params(self):
        return (self.nu, self.c)


def law_from_mapping(cfg: Mapping[str, str]) -> OffspringLaw:
    """Build a law from a flat ``[law]`` config section.

    ``kind = finite`` with ``coefficients = a0, a1, ...`` or
    ``kind = stable`` with ``nu`` and optional ``c``.
    """
    kind = str(cfg.get("kind", "")).strip().lower()
    try:
        if kind == "finite":
            raw = cfg["coefficients"]
            coeffs = [float(x) for x in str(raw).replace(";", ",").split(",") if x.strip()]
            return FiniteSupport(*coeffs)
        if kind == "stable":
            return Stable(float(cfg["nu"]), float(cfg.get("c", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"law section is missing key {exc}") from None
    except InvalidLaw as exc:
        raise ConfigError(f"invalid law: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"could not parse law: {exc}") from None
    raise ConfigError(f"unknown law kind {kind!r}; expected 'finite' or 'stable'")
