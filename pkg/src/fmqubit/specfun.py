r"""Bessel functions of the first kind and sideband coefficients.

A harmonically modulated phase :math:`\phi(t) = x \sin(\Omega t)` has the
Fourier expansion

.. math::
    e^{i\phi(t)} = \sum_{m=-\infty}^{\infty} J_m(x)\, e^{i m \Omega t},

so every absorption line of the bath is split into sidebands carrying weight
:math:`J_m^2(x)`. Only integer orders and real, non-negative arguments are
needed, which makes Miller's backward recurrence the natural evaluation
scheme: it is stable for all orders, and normalising with
:math:`\sum_m J_m^2 = 1` fixes the scale without any reference value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "X_MAX",
    "SidebandCoeffs",
    "bessel_j",
    "bessel_table",
    "cutoff_order",
    "sideband_coeffs",
    "bessel_quartic_sum",
]

X_MAX = 1.0e4
_RESCALE = 1.0e100


def _check_x(x: float) -> float:
    x = float(x)
    if not (0.0 <= x <= X_MAX) or math.isnan(x):
        raise ValueError(f"argument must lie in [0, {X_MAX:g}], got {x!r}")
    return x


def _start_order(x: float, mmax: int) -> int:
    # Far enough past the turning point that J_start / max|J| < 1e-20.
    top = max(mmax, math.ceil(x))
    start = top + 40 + int(math.sqrt(60.0 * top))
    return start + (start % 2)


def _series_table(x: float, mmax: int) -> np.ndarray:
    # Ascending series; for x < 1 the terms fall by (x/2)^2 / (k (k+m)) and
    # 20 of them exhaust double precision. Leading factors go through logs
    # so that tiny x underflows to zero instead of overflowing the recurrence.
    m = np.arange(mmax + 1, dtype=float)
    lead = np.exp(m * (math.log(x) - math.log(2.0)) - np.array([math.lgamma(k + 1.0) for k in m]))
    q = -(x / 2.0) ** 2
    total, term = np.ones_like(m), np.ones_like(m)
    for k in range(1, 21):
        term = term * q / (k * (k + m))
        total += term
    return lead * total


def bessel_table(x: float, mmax: int) -> np.ndarray:
    """Return ``[J_0(x), J_1(x), ..., J_mmax(x)]``.

    For ``x >= 1`` uses downward recurrence ``J_{m-1} = (2m/x) J_m - J_{m+1}``
    from a start order well beyond both ``mmax`` and ``x``; below that the
    ascending power series is used. The arbitrary scale
    is removed with the sum rule ``J_0^2 + 2 sum_{m>=1} J_m^2 = 1``; the
    sign comes from ``J_0 + 2 sum_k J_{2k} = 1``.
    """
    x = _check_x(x)
    mmax = int(mmax)
    if mmax < 0:
        raise ValueError("mmax must be non-negative")
    out = np.zeros(mmax + 1)
    if x == 0.0:
        out[0] = 1.0
        return out
    if x < 1.0:
        return _series_table(x, mmax)

    start = _start_order(x, mmax)
    vals = np.zeros(start + 2)
    vals[start] = 1.0e-300
    j_next, j_cur = 0.0, 1.0e-300
    for m in range(start, 0, -1):
        j_prev = (2.0 * m / x) * j_cur - j_next
        vals[m - 1] = j_prev
        if abs(j_prev) > _RESCALE:
            vals[m - 1 :] /= _RESCALE
            j_prev /= _RESCALE
            j_cur /= _RESCALE
        j_next, j_cur = j_cur, j_prev

    vals /= np.abs(vals).max()
    sumsq = vals[0] ** 2 + 2.0 * np.dot(vals[1:], vals[1:])
    even = vals[0] + 2.0 * vals[2::2].sum()
    scale = math.copysign(math.sqrt(sumsq), even)
    out[:] = vals[: mmax + 1] / scale
    return out


def bessel_j(m: int, x: float) -> float:
    """Bessel function of the first kind ``J_m(x)`` for integer ``m``.

    Negative orders follow from ``J_{-m}(x) = (-1)^m J_m(x)``.

    Examples
    --------
    >>> round(bessel_j(1, 1.0), 7)
    0.4400506
    """
    m = int(m)
    value = float(bessel_table(x, abs(m))[abs(m)])
    if m < 0 and m % 2:
        value = -value
    return value


def cutoff_order(x: float, tol: float) -> int:
    """Sideband order ``M`` beyond which the weight ``sum J_m^2`` is below ``tol``."""
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")
    return math.ceil(x) + max(20, math.ceil(10.0 * math.log10(1.0 / tol)))


@dataclass(frozen=True)
class SidebandCoeffs:
    """Coefficients ``J_m(x)`` for ``m = -M..M``.

    ``values[m + M]`` holds ``J_m(x)``; use :meth:`coefficient` for
    order-based lookup.
    """

    x: float
    order_cutoff: int
    values: np.ndarray

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.order_cutoff, self.order_cutoff + 1)

    @property
    def weights(self) -> np.ndarray:
        """Sideband weights ``J_m^2``."""
        return self.values**2

    def coefficient(self, m: int) -> float:
        if abs(m) > self.order_cutoff:
            return 0.0
        return float(self.values[m + self.order_cutoff])


def sideband_coeffs(x: float, tol: float = 1e-10) -> SidebandCoeffs:
    """Truncated Fourier coefficients of ``exp(i x sin(t))``.

    The cutoff satisfies ``1 - sum_{|m|<=M} J_m(x)^2 <= tol``.
    """
    x = _check_x(x)
    order = cutoff_order(x, tol)
    pos = bessel_table(x, order)
    neg = pos[:0:-1] * np.where(np.arange(order, 0, -1) % 2, -1.0, 1.0)
    values = np.concatenate([neg, pos])
    values.setflags(write=False)
    return SidebandCoeffs(x=x, order_cutoff=order, values=values)


def bessel_quartic_sum(x: float, tol: float = 1e-10) -> float:
    """``sum_m J_m(x)^4`` over all integer orders.

    This factor sets the spread of the modulated relaxation rate; for
    large ``x`` it falls off roughly as ``1/x`` with a slowly varying
    logarithmic correction.
    """
    x = _check_x(x)
    j = bessel_table(x, cutoff_order(x, tol))
    j4 = j**4
    return float(j4[0] + 2.0 * j4[1:].sum())
