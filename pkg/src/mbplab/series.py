"""Truncated power series and the numerical tools that produce them.

Coefficients of a generating function are recovered with the trapezoid
rule on a circle (a discrete Cauchy integral), and contour integrals from
the origin are evaluated with Gauss-Legendre panels graded toward the
endpoint, where every integrand in this package is singular or nearly so.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre

OVERSAMPLE = 8
_GL_NODES, _GL_WEIGHTS = legendre.leggauss(16)
_CHUNK = 2048


@dataclass(frozen=True)
class PowerSeries:
    """Coefficients ``c_0 .. c_N`` of a generating function.

    Parameters
    ----------
    coefficients : ndarray
        Real coefficients indexed by state ``j = 0 .. N``.
    label : str
        Name of the family, e.g. ``"P_1j(t=1)"`` or ``"mu"``.
    tail_bound : float
        Bound on the mass omitted beyond ``N`` when one is known.
    extraction_error : float
        Largest imaginary residue observed during extraction.
    """

    coefficients: np.ndarray
    label: str = ""
    tail_bound: float = 0.0
    extraction_error: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.coefficients, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "coefficients", arr)

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __len__(self) -> int:
        return len(self.coefficients)

    def __getitem__(self, j):
        return self.coefficients[j]

    def total(self) -> float:
        return float(np.sum(self.coefficients))

    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.coefficients)

    def mean(self) -> float:
        j = np.arange(len(self.coefficients))
        return float(np.dot(j, self.coefficients))

    def evaluate(self, s):
        """Horner evaluation of the truncated series."""
        return np.polynomial.polynomial.polyval(s, self.coefficients)

    def rows(self):
        """``(j, value)`` pairs for CSV export."""
        return [(j, float(v)) for j, v in enumerate(self.coefficients)]


def extraction_radius(n: int) -> float:
    """Circle radius (relative to the unit disk) used to extract n coefficients.

    Round-off in coefficient ``j`` grows like ``radius**-j`` while aliasing
    decays like ``radius**M``; ``1 - 4/n`` keeps the first factor below
    ``e**4`` and the second negligible for ``M = 8(n+1)``.
    """
    return max(0.7, 1.0 - 4.0 / max(n, 1))


def sample_count(n: int, radius: float, oversample: int = OVERSAMPLE) -> int:
    """Number of circle samples: at least ``oversample*(n+1)`` and enough
    that the aliasing factor ``radius**M`` is below ``1e-16``."""
    return max(oversample * (n + 1), int(np.ceil(37.0 / -np.log(radius))))


def cauchy_coefficients(
    func: Callable[[np.ndarray], np.ndarray],
    n: int,
    radius: float | None = None,
    oversample: int = OVERSAMPLE,
) -> tuple[np.ndarray, float]:
    """Taylor coefficients ``c_0 .. c_n`` of ``func`` about the origin.

    Parameters
    ----------
    func : callable
        Vectorised over complex arrays; analytic on a disk containing the
        circle ``|z| = radius``.
    n : int
        Highest coefficient wanted.
    radius : float, optional
        Defaults to :func:`extraction_radius`.
    oversample : int
        Number of samples per coefficient.

    Returns
    -------
    coefficients : ndarray of complex
    imag_residue : float
        ``max |Im c_j|``, a proxy for the extraction error of real series.
    """
    if radius is None:
        radius = extraction_radius(n)
    m = sample_count(n, radius, oversample)
    z = radius * np.exp(2j * np.pi * np.arange(m) / m)
    values = np.asarray(func(z), dtype=complex)
    c = np.fft.fft(values)[: n + 1] / m
    c /= radius ** np.arange(n + 1)
    return c, float(np.max(np.abs(c.imag)))


def line_integral(
    integrand: Callable[[np.ndarray], np.ndarray],
    start,
    end,
    levels: int = 44,
) -> np.ndarray:
    """Integrate along straight segments ``start -> end`` (vectorised).

    Panels are ``[0, 1/2], [1/2, 3/4], ...`` in the path parameter, so
    singularities near ``end`` are resolved down to ``2**-levels`` of the
    path length.  Each panel uses 16-point Gauss-Legendre.
    """
    start = np.asarray(start, dtype=complex)
    end = np.asarray(end, dtype=complex)
    start, end = np.broadcast_arrays(start, end)
    shape = start.shape
    a = start.ravel()
    b = end.ravel()

    breaks = np.concatenate(([0.0], 1.0 - 2.0 ** -np.arange(1, levels + 1), [1.0]))
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    tau = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_NODES[None, :]
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    tau = tau.ravel()

    out = np.empty(a.shape, dtype=complex)
    for k in range(0, len(a), _CHUNK):
        aa = a[k:k + _CHUNK, None]
        dd = b[k:k + _CHUNK, None] - aa
        x = aa + tau[None, :] * dd
        out[k:k + _CHUNK] = (integrand(x) @ weights) * dd[:, 0]
    return out.reshape(shape)
