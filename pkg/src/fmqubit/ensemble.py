"""Disorder statistics of the relaxation rate.

For TLS splittings spread uniformly with mean spacing ``Delta``, the
ensemble mean of the rate is ``pi <g^2> / (2 Delta)`` whatever the
modulation, while the leading-order variance carries a factor
``sum_m J_m(A/Omega)^4`` that shrinks roughly as ``Omega / A``. The
functions here evaluate those predictions and estimate the same
quantities by Monte Carlo over seeded bath realizations.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from .analytic import DEFAULT_TOL, complex_rate_grid
from .bath import BathSpec, DriveParams, make_rng, sample_bath
from .dynamics import IntegratorControls, expfit_rate, gamma_099
from .specfun import bessel_quartic_sum, sideband_coeffs

__all__ = [
    "EstimatorFailureError",
    "EnsembleStats",
    "ScalingFit",
    "uniform_moment",
    "predicted_mean",
    "predicted_variance",
    "overlap_variance",
    "relative_static_spread",
    "draw_e0",
    "sample_rates",
    "monte_carlo_stats",
    "scaling_fit",
    "lamb_shift_moments",
]

ESTIMATORS = ("analytic", "gamma099", "expfit")
MAX_FAILURE_FRACTION = 0.05
_E0_STREAM = 1


class EstimatorFailureError(RuntimeError):
    """Too many realizations failed to produce a rate."""


def uniform_moment(lo: float, hi: float, power: float) -> float:
    """``E[X^power]`` for ``X ~ U[lo, hi]`` (``lo > 0``); handles ``power = -1`` and ``lo == hi``."""
    if hi == lo:
        return lo**power
    if power == -1:
        return math.log(hi / lo) / (hi - lo)
    return (hi ** (power + 1) - lo ** (power + 1)) / ((power + 1) * (hi - lo))


def predicted_mean(spec: BathSpec) -> float:
    """``pi <g^2> / (2 Delta)``."""
    return math.pi * uniform_moment(*spec.g_range, 2) / (2.0 * spec.spacing)


def _g4_over_gamma(spec: BathSpec) -> float:
    return uniform_moment(*spec.g_range, 4) * uniform_moment(*spec.gamma_range, -1)


def predicted_variance(spec: BathSpec, modulation_index: float, tol: float = DEFAULT_TOL) -> float:
    """Leading-order variance ``(pi / 8 Delta) <g^4/gamma> sum_m J_m^4``."""
    return math.pi / (8.0 * spec.spacing) * _g4_over_gamma(spec) * bessel_quartic_sum(modulation_index, tol)


def overlap_variance(spec: BathSpec, modulation_index: float, omega: float = 1.0,
                     tol: float = DEFAULT_TOL) -> float:
    """Infinite-window variance including overlaps between sidebands of one TLS.

    ``(1 / Delta) <g^4/4 sum_k c_k 2 pi gamma / (k^2 Omega^2 + 4 gamma^2)>``
    with ``c_k = sum_m J_m^2 J_{m+k}^2``. The ``k = 0`` term alone is
    :func:`predicted_variance`; the rest is of relative order
    ``(gamma / Omega)^2``.
    """
    w = sideband_coeffs(modulation_index, tol).weights
    c = np.correlate(w, w, mode="full")
    k = np.arange(-(len(w) - 1), len(w))
    g4 = uniform_moment(*spec.g_range, 4)

    def per_gamma(gam):
        return 0.25 * (c * 2.0 * math.pi * gam / ((k * omega) ** 2 + 4.0 * gam**2)).sum()

    lo, hi = spec.gamma_range
    if hi == lo:
        avg = per_gamma(lo)
    else:
        avg = integrate.quad(per_gamma, lo, hi, epsabs=0, epsrel=1e-10, limit=200)[0] / (hi - lo)
    return g4 * avg / spec.spacing


def relative_static_spread(spacing: float, gamma_typ: float) -> float:
    """``sigma_static / <Gamma> = sqrt(1 / 2 pi) sqrt(Delta / gamma_typ)`` at typical values."""
    return math.sqrt(1.0 / (2.0 * math.pi)) * math.sqrt(spacing / gamma_typ)


@dataclass(frozen=True)
class EnsembleStats:
    n_realizations: int
    mean: float
    variance: float
    std_err_mean: float
    estimator: str
    amp_over_omega: float = 0.0
    seed: int = 0
    n_failed: int = 0

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def to_json(self) -> str:
        d = {"n": self.n_realizations, "mean": self.mean, "variance": self.variance,
             "std_err": self.std_err_mean, "estimator": self.estimator,
             "amp_over_omega": self.amp_over_omega, "seed": self.seed, "n_failed": self.n_failed}
        return json.dumps(d, indent=2)

    @classmethod
    def from_samples(cls, samples, estimator, amp_over_omega=0.0, seed=0, n_failed=0):
        x = np.asarray(samples, dtype=float)
        n = x.size
        if n < 2:
            raise ValueError("need at least two realizations")
        var = float(x.var(ddof=1))
        return cls(n_realizations=n, mean=float(x.mean()), variance=var,
                   std_err_mean=math.sqrt(var / n), estimator=estimator,
                   amp_over_omega=amp_over_omega, seed=seed, n_failed=n_failed)


def draw_e0(spec: BathSpec, realization_index: int, policy="uniform-spacing") -> float:
    """Qubit splitting for one realization.

    ``policy`` is ``"uniform-spacing"`` (uniform over one level spacing at
    the window centre, drawn from a substream separate from the bath) or
    a number giving a fixed ``E0``.
    """
    if policy == "uniform-spacing":
        rng = make_rng(spec.seed, realization_index, stream=_E0_STREAM)
        return spec.center + spec.spacing * (rng.random() - 0.5)
    return float(policy)


def _analytic_chunk(spec, drive, indices, e0_policy, tol):
    sb = sideband_coeffs(drive.index, tol)
    baths = [sample_bath(spec, i) for i in indices]
    e0 = np.array([draw_e0(spec, i, e0_policy) for i in indices])
    eps = np.stack([b.epsilon for b in baths])
    g2 = np.stack([b.g for b in baths]) ** 2
    gam = np.stack([b.gamma for b in baths])
    det = e0[:, None] - eps
    out = np.zeros(len(indices))
    for w, m in zip(sb.weights, sb.orders):
        if w < 1e-32:
            continue
        d = det + m * drive.omega
        out += (g2 * w * gam / (d * d + gam * gam)).sum(axis=1)
    return 0.5 * out


def _dynamic_one(args):
    spec, drive, index, e0_policy, estimator, controls = args
    bath = sample_bath(spec, index)
    d = drive.with_e0(draw_e0(spec, index, e0_policy))
    try:
        if estimator == "gamma099":
            res = gamma_099(bath, d, controls)
            return res.rate if res.crossed else math.nan
        return expfit_rate(bath, d, controls)[0]
    except (RuntimeError, ValueError):
        return math.nan


def sample_rates(spec: BathSpec, drive: DriveParams, n_realizations: int,
                 estimator: str = "analytic", e0_policy="uniform-spacing",
                 controls: IntegratorControls | None = None, workers: int = 1,
                 tol: float = DEFAULT_TOL, chunk: int = 256) -> np.ndarray:
    """Per-realization rates, in realization order; failed realizations are NaN."""
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    indices = list(range(n_realizations))
    if estimator == "analytic":
        parts = [_analytic_chunk(spec, drive, indices[i:i + chunk], e0_policy, tol)
                 for i in range(0, n_realizations, chunk)]
        return np.concatenate(parts)
    controls = controls or IntegratorControls()
    tasks = [(spec, drive, i, e0_policy, estimator, controls) for i in indices]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return np.array(list(ex.map(_dynamic_one, tasks, chunksize=4)))
    return np.array([_dynamic_one(t) for t in tasks])


def monte_carlo_stats(spec: BathSpec, drive: DriveParams, e0_policy="uniform-spacing",
                      n_realizations: int = 2000, estimator: str = "analytic",
                      controls: IntegratorControls | None = None, workers: int = 1,
                      tol: float = DEFAULT_TOL) -> EnsembleStats:
    """Mean and unbiased variance of the rate over ``n_realizations`` baths.

    Raises
    ------
    EstimatorFailureError
        If more than 5% of realizations yield no rate.
    """
    if n_realizations < 2:
        raise ValueError("n_realizations must be at least 2")
    rates = sample_rates(spec, drive, n_realizations, estimator, e0_policy, controls, workers, tol)
    ok = np.isfinite(rates)
    n_failed = int((~ok).sum())
    if n_failed > MAX_FAILURE_FRACTION * n_realizations:
        raise EstimatorFailureError(f"{n_failed} of {n_realizations} realizations failed")
    return EnsembleStats.from_samples(rates[ok], estimator, drive.index, spec.seed, n_failed)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    ci_low: float
    ci_high: float
    intercept: float
    indices: tuple
    sigmas: tuple

    def to_dict(self) -> dict:
        return asdict(self)


def scaling_fit(spec: BathSpec, drive_template: DriveParams, index_list: Sequence[float],
                n_realizations: int = 2000, estimator: str = "analytic",
                e0_policy="uniform-spacing", controls=None, workers: int = 1) -> ScalingFit:
    """Least-squares exponent of ``sigma`` against ``A / Omega`` on log-log axes.

    Returns the slope with a 95% confidence interval from the t
    distribution with ``len(index_list) - 2`` degrees of freedom.
    """
    x = np.asarray(index_list, dtype=float)
    if x.size < 3:
        raise ValueError("need at least three modulation indices")
    if x.min() <= 0 or x.max() / x.min() < 8:
        raise ValueError("modulation indices must span at least a factor 8")
    sig = []
    for xi in x:
        d = DriveParams(e0=drive_template.e0, amp=xi * drive_template.omega, omega=drive_template.omega)
        st = monte_carlo_stats(spec, d, e0_policy, n_realizations, estimator, controls, workers)
        sig.append(st.std)
    res = stats.linregress(np.log(x), np.log(sig))
    half = stats.t.ppf(0.975, x.size - 2) * res.stderr
    return ScalingFit(slope=float(res.slope), ci_low=float(res.slope - half),
                      ci_high=float(res.slope + half), intercept=float(res.intercept),
                      indices=tuple(x.tolist()), sigmas=tuple(float(s) for s in sig))


def lamb_shift_moments(spec: BathSpec, drive: DriveParams, n_realizations: int,
                       tol: float = DEFAULT_TOL):
    """Monte Carlo ``<dE_low>``, ``<dE_low^2>`` and ``Var(Gamma)`` at ``E0 = spec.center``.

    The bath window should cover ``[0, 2 E0]`` so the low-energy part is
    complete. Returns ``(mean, second_moment, std_err_mean, rate_variance)``.
    """
    e0 = spec.center
    if e0 <= 0:
        raise ValueError("lamb_shift_moments needs spec.center > 0")
    shifts, rates = np.empty(n_realizations), np.empty(n_realizations)
    for i in range(n_realizations):
        bath = sample_bath(spec, i)
        c_low = complex_rate_grid([e0], bath, drive, tol,
                                  mask=lambda e, eps: (eps > 0) & (eps <= 2.0 * e))[0]
        shifts[i] = c_low.imag
        rates[i] = 2.0 * complex_rate_grid([e0], bath, drive, tol)[0].real
    return (float(shifts.mean()), float((shifts**2).mean()),
            float(shifts.std(ddof=1) / math.sqrt(n_realizations)), float(rates.var(ddof=1)))
