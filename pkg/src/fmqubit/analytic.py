"""Closed-form relaxation rates and Lamb shifts.

In the weak-coupling, Markov regime the qubit amplitude obeys
``da/dt = -C a`` with the complex rate

    C = 1/4 * sum_n sum_m g_n^2 J_m(A/Omega)^2 / (gamma_n - i (E0 + m Omega - eps_n))

so the population decays at ``Gamma = 2 Re C`` and the qubit level is
pulled by ``Im C``. Without modulation only ``m = 0`` survives and every
TLS contributes a single Lorentzian of half-width ``gamma_n``.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bath import BathRealization, DriveParams, TlsParams
from .specfun import sideband_coeffs

__all__ = [
    "ValidityWarning",
    "ComplexRate",
    "RateCurve",
    "gamma_static",
    "complex_rate",
    "complex_rate_grid",
    "gamma_modulated",
    "lamb_shift_low",
    "markov_valid",
    "DEFAULT_TOL",
    "CSV_COLUMNS",
]

DEFAULT_TOL = 1e-10
# Sidebands this light cannot move a rate at double precision.
_WEIGHT_FLOOR = 1e-32


class ValidityWarning(UserWarning):
    """Parameters fall outside the regime where the rate formula was derived."""


@dataclass(frozen=True)
class ComplexRate:
    c: complex
    truncation_order: int
    valid: bool = True

    @property
    def decay_rate(self) -> float:
        return 2.0 * self.c.real

    @property
    def energy_shift(self) -> float:
        return self.c.imag


def markov_valid(bath: BathRealization, drive: DriveParams) -> bool:
    """True when the modulation is faster than every TLS decay and couplings are weak."""
    if len(bath) == 0:
        return True
    gamma = bath.gamma
    weak = bool(np.all(bath.g < gamma))
    return weak and (drive.amp == 0 or drive.omega > gamma.max())


def gamma_static(e0, tls: TlsParams):
    """Lorentzian rate ``(1/2) g^2 gamma / ((E0 - eps)^2 + gamma^2)`` of one TLS."""
    d = np.asarray(e0, dtype=float) - tls.epsilon
    out = 0.5 * tls.g**2 * tls.gamma / (d * d + tls.gamma**2)
    return float(out) if out.ndim == 0 else out


def _rate_sum(detuning: np.ndarray, g2: np.ndarray, gamma: np.ndarray,
              weights: np.ndarray, orders: np.ndarray, omega: float) -> np.ndarray:
    """``1/4 sum_n sum_m g2_n w_m / (gamma_n - i (detuning_n + m omega))`` over the last axis."""
    out = np.zeros(detuning.shape[:-1], dtype=complex)
    for w, m in zip(weights, orders):
        if w < _WEIGHT_FLOOR:
            continue
        out += (g2 * w / (gamma - 1j * (detuning + m * omega))).sum(axis=-1)
    return 0.25 * out


def complex_rate_grid(e0_grid, bath: BathRealization, drive: DriveParams,
                      tol: float = DEFAULT_TOL, mask=None) -> np.ndarray:
    """Complex rate ``C`` at every point of ``e0_grid``.

    ``mask`` optionally restricts the TLS sum, either as a boolean array
    over the bath or as a callable ``mask(e0_column, eps_row)`` returning
    a broadcastable boolean array.
    """
    e0 = np.atleast_1d(np.asarray(e0_grid, dtype=float))
    if len(bath) == 0:
        return np.zeros(e0.shape, dtype=complex)
    sb = sideband_coeffs(drive.index, tol)
    eps, g2, gamma = bath.epsilon, bath.g**2, bath.gamma
    det = e0[:, None] - eps[None, :]
    g2 = np.broadcast_to(g2, det.shape)
    if mask is not None:
        sel = mask(e0[:, None], eps[None, :]) if callable(mask) else np.asarray(mask, dtype=bool)
        g2 = np.where(np.broadcast_to(sel, det.shape), g2, 0.0)
    return _rate_sum(det, g2, np.broadcast_to(gamma, det.shape), sb.weights, sb.orders, drive.omega)


def complex_rate(e0: float, bath: BathRealization, drive: DriveParams,
                 tol: float = DEFAULT_TOL) -> ComplexRate:
    """Complex rate ``C`` at a single qubit splitting ``e0``.

    A :class:`ValidityWarning` is issued (and ``valid`` cleared) when
    ``Omega <= max gamma_n`` under modulation or any TLS is strongly
    coupled; the value is still returned.
    """
    valid = markov_valid(bath, drive)
    if not valid:
        warnings.warn("rate formula used outside the weak-coupling / fast-modulation regime",
                      ValidityWarning, stacklevel=2)
    c = complex_rate_grid([e0], bath, drive, tol)[0]
    order = sideband_coeffs(drive.index, tol).order_cutoff
    return ComplexRate(c=complex(c), truncation_order=order, valid=valid)


def gamma_modulated(e0, bath: BathRealization, drive: DriveParams, tol: float = DEFAULT_TOL):
    """Relaxation rate ``Gamma(E0) = 2 Re C``; accepts a scalar or an array of ``e0``."""
    scalar = np.ndim(e0) == 0
    rate = 2.0 * complex_rate_grid(e0, bath, drive, tol).real
    return float(rate[0]) if scalar else rate


def lamb_shift_low(e0, bath: BathRealization, drive: DriveParams, tol: float = DEFAULT_TOL):
    """Fluctuating part of the Lamb shift, ``Im C`` from TLSs with ``0 < eps <= 2 E0``.

    The complementary high-energy part does not fluctuate appreciably and
    is taken as already absorbed into ``E0``.
    """
    scalar = np.ndim(e0) == 0
    e0_arr = np.atleast_1d(np.asarray(e0, dtype=float))
    if np.any(e0_arr <= 0):
        raise ValueError("lamb_shift_low needs e0 > 0")
    shift = complex_rate_grid(e0_arr, bath, drive, tol,
                              mask=lambda e, eps: (eps > 0) & (eps <= 2.0 * e)).imag
    return float(shift[0]) if scalar else shift


@dataclass
class RateCurve:
    """Relaxation rate sampled on a grid of qubit splittings."""

    e0_grid: np.ndarray
    rates: np.ndarray
    method: str
    drive: DriveParams
    bath_fingerprint: str = ""
    realization_id: int = 0
    status: list = field(default_factory=list)

    def __post_init__(self):
        self.e0_grid = np.asarray(self.e0_grid, dtype=float)
        self.rates = np.asarray(self.rates, dtype=float)
        if self.e0_grid.shape != self.rates.shape:
            raise ValueError("grid and rates must have equal length")
        if np.any(np.diff(self.e0_grid) <= 0):
            raise ValueError("e0 grid must be strictly increasing")
        if np.any(self.rates < 0):
            raise ValueError("rates must be non-negative")
        if self.method not in ("analytic", "gamma099", "expfit"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.status:
            self.status = ["ok"] * len(self.rates)

    def csv_rows(self, e_ref: float = 0.0):
        x = self.drive.index
        for e0, rate in zip(self.e0_grid, self.rates):
            yield [f"{(e0 - e_ref) / self.drive.omega:.17g}", f"{rate / self.drive.omega:.17g}",
                   self.method, f"{x:.17g}", str(self.realization_id)]

    def to_csv(self, e_ref: float = 0.0, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(CSV_COLUMNS)
        w.writerows(self.csv_rows(e_ref))
        return buf.getvalue()


CSV_COLUMNS = ["e0_over_omega", "gamma_over_omega", "method", "amp_over_omega", "realization_id"]
