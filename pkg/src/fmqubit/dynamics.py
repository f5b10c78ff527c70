r"""Time integration of the single-excitation amplitudes.

The state is ``[a, b_1, ..., b_N]``: the excited-qubit amplitude and the
amplitudes of each TLS being excited. With
``theta_n(t) = (E0 - eps_n) t + (A/Omega) sin(Omega t)`` the equations are

.. math::
    \dot a = -\tfrac{i}{2}\sum_n g_n e^{i\theta_n} b_n, \qquad
    \dot b_n = -\tfrac{i}{2} g_n e^{-i\theta_n} a - \gamma_n b_n .

``b_n`` here is the physical (decaying) amplitude, so the manifold
population ``|a|^2 + sum |b_n|^2`` can only decrease, at rate
``2 sum gamma_n |b_n|^2``.

Long runs avoid stepping through every period. The RK4 step map ``S(t)``
obeys ``S(t + T) = Phi S(t) Phi^{-1}`` with ``T = 2 pi / Omega`` and
``Phi = diag(1, exp(-i (E0 - eps_n) T))``, so after building the one-period
map ``U`` once the stroboscopic states follow from powers of
``Phi^{-1} U``. This reproduces the fixed-step RK4 trajectory exactly up to
rounding, at a small fraction of the cost.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from .analytic import RateCurve, gamma_modulated
from .bath import BathRealization, DriveParams

__all__ = [
    "StepSizeError",
    "HorizonError",
    "NonMonotoneError",
    "IntegratorControls",
    "AmplitudeTrajectory",
    "Gamma099",
    "PeriodPropagator",
    "suggest_dt",
    "integrate",
    "gamma_099",
    "gamma_expfit",
    "expfit_rate",
    "rate_curve",
    "THRESHOLD",
]

THRESHOLD = 0.99
_MONOTONE_SLACK = 1e-8


class StepSizeError(RuntimeError):
    """Population grew during integration: the step is too coarse."""


class HorizonError(RuntimeError):
    """The integration horizon is too short for the requested quantity."""


class NonMonotoneError(ValueError):
    """``|a(t)|`` is not monotone on the fit window (coherent oscillations)."""


def suggest_dt(bath: BathRealization, drive: DriveParams, e0: float | None = None) -> float:
    """Fixed step resolving every rate and frequency by a factor 50.

    Besides ``Omega``, ``gamma_max``, ``g_max`` and the sweep rate set by
    ``A``, the largest detuning is resolved to at most one radian per step.
    """
    scales = [2 * math.pi / drive.omega]
    if len(bath):
        scales.append(1.0 / bath.gamma.max())
        if bath.g.max() > 0:
            scales.append(1.0 / bath.g.max())
    if drive.amp > 0:
        scales.append(2 * math.pi / drive.amp)
    dt = min(scales) / 50.0
    e0 = drive.e0 if e0 is None else e0
    if len(bath):
        dmax = np.abs(e0 - bath.epsilon).max()
        if dmax > 0:
            dt = min(dt, 1.0 / dmax)
    return dt


def _snap_dt(dt: float, omega: float) -> tuple[float, int]:
    """Largest step not above ``dt`` that divides the modulation period."""
    period = 2 * math.pi / omega
    steps = int(math.ceil(period / dt - 1e-9))
    return period / steps, steps


@dataclass(frozen=True)
class IntegratorControls:
    """Step control. ``dt=None`` picks :func:`suggest_dt`; ``stride`` thins stored samples."""

    dt: float | None = None
    t_max: float = 1.0e5
    scheme: str = "rk4-fixed"
    rtol: float = 1e-10
    atol: float = 1e-12
    stride: int = 1

    def __post_init__(self):
        if self.scheme not in ("rk4-fixed", "adaptive"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")

    def resolve_dt(self, bath, drive) -> float:
        return suggest_dt(bath, drive) if self.dt is None else float(self.dt)

    def to_dict(self) -> dict:
        return {"dt": self.dt, "t_max": self.t_max, "scheme": self.scheme,
                "rtol": self.rtol, "atol": self.atol, "stride": self.stride}


@dataclass
class AmplitudeTrajectory:
    times: np.ndarray
    a: np.ndarray
    b: np.ndarray | None = None
    drive: DriveParams | None = None
    bath_fingerprint: str = ""

    @property
    def population(self) -> np.ndarray:
        p = np.abs(self.a) ** 2
        if self.b is not None:
            p = p + (np.abs(self.b) ** 2).sum(axis=1)
        return p

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "re_a", "im_a", "abs_a", "population"])
        for t, a, p in zip(self.times, self.a, self.population):
            w.writerow([f"{t:.17g}", f"{a.real:.17g}", f"{a.imag:.17g}", f"{abs(a):.17g}", f"{p:.17g}"])
        return buf.getvalue()


class _Rhs:
    """Right-hand side of the amplitude equations, vectorised over columns."""

    def __init__(self, bath: BathRealization, drive: DriveParams):
        self.det = drive.e0 - bath.epsilon
        self.half_g = 0.5 * bath.g
        self.gamma = bath.gamma
        self.drive = drive

    def coupling(self, t: float):
        ph = np.exp(1j * (self.det * t + self.drive.phase(t)))
        return -1j * self.half_g * ph, -1j * self.half_g * ph.conj()

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        up, down = self.coupling(t)
        out = np.empty_like(y)
        if y.ndim == 1:
            out[0] = up @ y[1:]
            out[1:] = down * y[0] - self.gamma * y[1:]
        else:
            out[0] = up @ y[1:]
            out[1:] = down[:, None] * y[0][None, :] - self.gamma[:, None] * y[1:]
        return out


def _rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _initial_state(n: int) -> np.ndarray:
    y = np.zeros(n + 1, dtype=complex)
    y[0] = 1.0
    return y


def integrate(bath: BathRealization, drive: DriveParams,
              controls: IntegratorControls = IntegratorControls()) -> AmplitudeTrajectory:
    """Integrate from ``a(0) = 1, b(0) = 0`` up to ``controls.t_max``.

    Raises
    ------
    StepSizeError
        If the manifold population increases by more than ``1e-8``.
    """
    if len(bath) == 0:
        raise ValueError("bath must contain at least one TLS")
    rhs = _Rhs(bath, drive)
    y0 = _initial_state(len(bath))

    if controls.scheme == "adaptive":
        dt = controls.resolve_dt(bath, drive)
        n = max(2, int(round(controls.t_max / (dt * controls.stride))) + 1)
        t_eval = np.linspace(0.0, controls.t_max, n)
        sol = solve_ivp(rhs, (0.0, controls.t_max), y0, method="DOP853",
                        t_eval=t_eval, rtol=controls.rtol, atol=controls.atol)
        if not sol.success:
            raise RuntimeError(sol.message)
        ys = sol.y.T
        times = sol.t
    else:
        dt, _ = _snap_dt(controls.resolve_dt(bath, drive), drive.omega)
        nsteps = int(math.ceil(controls.t_max / dt - 1e-9))
        stride = max(1, int(controls.stride))
        times = [0.0]
        ys = [y0]
        y = y0
        for k in range(nsteps):
            y = _rk4_step(rhs, k * dt, y, dt)
            if (k + 1) % stride == 0 or k + 1 == nsteps:
                times.append((k + 1) * dt)
                ys.append(y)
        times = np.asarray(times)
        ys = np.asarray(ys)

    traj = AmplitudeTrajectory(times=times, a=ys[:, 0].copy(), b=ys[:, 1:].copy(),
                               drive=drive, bath_fingerprint=bath.spec_fingerprint)
    pop = traj.population
    if np.any(np.diff(pop) > _MONOTONE_SLACK):
        raise StepSizeError("manifold population increased; reduce dt")
    return traj


class PeriodPropagator:
    """Fixed-step RK4 evolution organised by modulation periods.

    ``rows[j]`` is the qubit row of the RK4 map from ``t = 0`` to ``j dt``;
    ``reduced`` is ``Phi^{-1} U`` with ``U`` the one-period map. The state
    after ``k`` periods is ``Phi^k chi_k`` where ``chi_k = reduced^k psi_0``,
    and ``a(k T + j dt) = rows[j] @ chi_k``.
    """

    def __init__(self, bath: BathRealization, drive: DriveParams, dt: float | None = None,
                 keep_partial: bool = False):
        if len(bath) == 0:
            raise ValueError("bath must contain at least one TLS")
        self.bath, self.drive = bath, drive
        dt = suggest_dt(bath, drive) if dt is None else dt
        self.period = 2 * math.pi / drive.omega
        self.dt, self.steps = _snap_dt(dt, drive.omega)
        n = len(bath) + 1

        rhs = _Rhs(bath, drive)
        y = np.eye(n, dtype=complex)
        rows = np.empty((self.steps + 1, n), dtype=complex)
        full = np.empty((self.steps + 1, n, n), dtype=complex) if keep_partial else None
        rows[0] = y[0]
        if full is not None:
            full[0] = y
        for j in range(self.steps):
            y = _rk4_step(rhs, j * self.dt, y, self.dt)
            rows[j + 1] = y[0]
            if full is not None:
                full[j + 1] = y
        self.rows = rows
        self.partial = full
        phase = np.exp(1j * rhs.det * self.period)
        # Phi^{-1} U: scale rows 1..N by exp(+i det T).
        self.reduced = y.copy()
        self.reduced[1:] *= phase[:, None]
        # Bound on how far |a| can move inside a period, given ||chi|| <= 1.
        self.excursion = float(np.linalg.norm(rows - rows[0], axis=1).max())

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def initial(self) -> np.ndarray:
        return _initial_state(len(self.bath))

    def advance(self, chi: np.ndarray, periods: int) -> np.ndarray:
        if periods <= 0:
            return chi
        if periods < 32:
            for _ in range(periods):
                chi = self.reduced @ chi
            return chi
        return np.linalg.matrix_power(self.reduced, periods) @ chi

    def stroboscopic(self, k_start: int, stride: int, count: int):
        """``(times, a)`` at periods ``k_start, k_start + stride, ...``."""
        chi = self.advance(self.initial(), k_start)
        step = np.linalg.matrix_power(self.reduced, stride) if stride > 1 else self.reduced
        a = np.empty(count, dtype=complex)
        pop = np.empty(count)
        for i in range(count):
            a[i] = chi[0]
            pop[i] = np.vdot(chi, chi).real
            chi = step @ chi
        times = (k_start + stride * np.arange(count)) * self.period
        return times, a, pop

    def trajectory(self, periods: int) -> AmplitudeTrajectory:
        """Dense trajectory over ``periods`` full periods (every RK4 step)."""
        if self.partial is None:
            raise ValueError("dense trajectories need keep_partial=True")
        chi = self.initial()
        ts, states = [], []
        phase_step = np.exp(-1j * (self.drive.e0 - self.bath.epsilon) * self.period)
        phi = np.ones(len(self.bath), dtype=complex)
        for k in range(periods):
            block = self.partial[:-1] @ chi
            block[:, 1:] *= phi
            states.append(block)
            ts.append(k * self.period + self.times[:-1])
            chi = self.reduced @ chi
            phi = phi * phase_step
        last = chi.copy()
        last[1:] *= phi
        states.append(last[None, :])
        ts.append(np.array([periods * self.period]))
        ys = np.concatenate(states)
        return AmplitudeTrajectory(times=np.concatenate(ts), a=ys[:, 0], b=ys[:, 1:],
                                   drive=self.drive, bath_fingerprint=self.bath.spec_fingerprint)

    def first_crossing(self, level: float, t_max: float):
        """First time ``|a| <= level`` on the RK4 grid, linearly interpolated.

        Returns ``(time, decayed)``; ``time`` is ``None`` without a crossing.
        """
        chi = self.initial()
        kmax = int(math.ceil(t_max / self.period))
        k = 0
        block = 16
        while k < kmax:
            nb = min(block, kmax - k)
            cols = np.empty((len(chi), nb), dtype=complex)
            for i in range(nb):
                cols[:, i] = chi
                chi = self.reduced @ chi
            # Skip periods where |a| provably stays above the level.
            lo = np.abs(cols[0]) - self.excursion * np.linalg.norm(cols, axis=0)
            cand = np.nonzero(lo <= level)[0]
            for i in cand:
                mags = np.abs(self.rows @ cols[:, i])
                hit = np.nonzero(mags <= level)[0]
                if len(hit):
                    j = int(hit[0])
                    t0 = (k + i) * self.period
                    if j == 0:
                        return t0, True
                    m0, m1 = mags[j - 1], mags[j]
                    frac = (m0 - level) / (m0 - m1)
                    return t0 + (j - 1 + frac) * self.dt, True
            k += nb
            block = min(block * 2, 1024)
        decayed = abs(chi[0]) < 1.0 - 1e-12
        return None, decayed


@dataclass(frozen=True)
class Gamma099:
    """Operational rate ``1/T`` with ``T`` the first time ``|a(T)| = 0.99``.

    ``status`` is ``"crossed"``, ``"no-crossing"`` (no decay at all) or
    ``"horizon-exhausted"`` (decaying, but not enough within ``t_max``).
    """

    rate: float
    crossing_time: float | None
    status: str

    @property
    def crossed(self) -> bool:
        return self.status == "crossed"


def gamma_099(bath: BathRealization, drive: DriveParams,
              controls: IntegratorControls = IntegratorControls(),
              level: float = THRESHOLD) -> Gamma099:
    """Relaxation rate ``1/T`` from the first time ``|a(T)| = level``."""
    if len(bath) == 0 or not np.any(bath.g > 0):
        return Gamma099(0.0, None, "no-crossing")
    if controls.scheme == "adaptive":
        return _gamma_099_adaptive(bath, drive, controls, level)
    prop = PeriodPropagator(bath, drive, controls.dt)
    t, decayed = prop.first_crossing(level, controls.t_max)
    if t is None:
        return Gamma099(0.0, None, "horizon-exhausted" if decayed else "no-crossing")
    return Gamma099(1.0 / t, t, "crossed")


def _gamma_099_adaptive(bath, drive, controls, level):
    rhs = _Rhs(bath, drive)

    def event(t, y):
        return abs(y[0]) - level

    event.terminal = True
    event.direction = -1
    dt = controls.resolve_dt(bath, drive)
    sol = solve_ivp(rhs, (0.0, controls.t_max), _initial_state(len(bath)), method="DOP853",
                    events=event, rtol=controls.rtol, atol=controls.atol, max_step=10 * dt)
    if sol.t_events[0].size:
        t = float(sol.t_events[0][0])
        return Gamma099(1.0 / t, t, "crossed")
    decayed = abs(sol.y[0, -1]) < 1.0 - 1e-12
    return Gamma099(0.0, None, "horizon-exhausted" if decayed else "no-crossing")


def gamma_expfit(trajectory: AmplitudeTrajectory, window, monotone_tol: float = 0.02):
    """Decay rate of ``|a|^2`` from a least-squares line through ``ln |a|^2``.

    Parameters
    ----------
    trajectory : AmplitudeTrajectory
    window : (float, float)
        Fit interval ``[t1, t2]``.
    monotone_tol : float
        Largest allowed rise of ``ln |a|^2`` between samples, relative to
        the total drop across the window.

    Raises
    ------
    NonMonotoneError
        If ``|a|`` rises appreciably inside the window, as it does for
        vacuum Rabi oscillations with a strongly coupled TLS.
    """
    t1, t2 = window
    sel = (trajectory.times >= t1) & (trajectory.times <= t2)
    t = trajectory.times[sel]
    if t.size < 3:
        raise HorizonError("fit window holds fewer than three samples")
    mag2 = np.abs(trajectory.a[sel]) ** 2
    if np.any(mag2 <= 0):
        raise NonMonotoneError("|a| vanishes inside the fit window")
    y = np.log(mag2)
    drop = y[0] - y[-1]
    rise = np.diff(y).max()
    if drop <= 0 or rise > max(monotone_tol * drop, 1e-12):
        raise NonMonotoneError(
            f"ln|a|^2 not monotone on [{t1:g}, {t2:g}] (drop {drop:.3g}, largest rise {rise:.3g})")
    slope, _ = np.polyfit(t - t[0], y, 1)
    return float(-slope)


def expfit_rate(bath: BathRealization, drive: DriveParams,
                controls: IntegratorControls = IntegratorControls(),
                samples: int = 129, settle: float = 20.0):
    """Asymptotic decay rate of ``|a|^2`` from stroboscopic samples.

    The window opens after ``settle / gamma_min`` (transients of the TLS
    amplitudes have died out) and spans roughly half an e-fold of the
    qubit population, capped by ``controls.t_max``. Sampling once per
    modulation period removes the periodic ripple.

    Returns ``(rate, trajectory, window)``.
    """
    if len(bath) == 0 or not np.any(bath.g > 0):
        return 0.0, None, None
    prop = PeriodPropagator(bath, drive, controls.dt)
    T = prop.period
    k1 = max(10, int(math.ceil(settle / bath.gamma.min() / T)))
    probe = 64
    _, a_probe, _ = prop.stroboscopic(k1, probe, 2)
    d = math.log(abs(a_probe[0]) ** 2) - math.log(max(abs(a_probe[1]) ** 2, 1e-300))
    kmax = int(t_max_periods(controls.t_max, T))
    if kmax <= k1 + samples:
        raise HorizonError("t_max too short for the exponential-fit window")
    if d > 0:
        span = int(min(max(0.5 / (d / (probe * T)) / T, probe), kmax - k1))
    else:
        span = kmax - k1
    stride = max(1, span // (samples - 1))
    times, a, pop = prop.stroboscopic(k1, stride, samples)
    traj = AmplitudeTrajectory(times=times, a=a, drive=drive, bath_fingerprint=bath.spec_fingerprint)
    window = (times[0], times[-1])
    return gamma_expfit(traj, window), traj, window


def t_max_periods(t_max: float, period: float) -> int:
    return int(math.floor(t_max / period))


def with_dt(controls: IntegratorControls, dt: float) -> IntegratorControls:
    return replace(controls, dt=dt)


def _curve_point(args):
    bath, drive, method, controls = args
    if method == "analytic":
        return gamma_modulated(drive.e0, bath, drive), "ok"
    try:
        if method == "gamma099":
            res = gamma_099(bath, drive, controls)
            if res.status == "horizon-exhausted":
                return math.nan, res.status
            return res.rate, "ok" if res.crossed else res.status
        return expfit_rate(bath, drive, controls)[0], "ok"
    except (HorizonError, NonMonotoneError, StepSizeError) as exc:
        return math.nan, type(exc).__name__


def rate_curve(bath: BathRealization, drive_template: DriveParams, e0_grid, method: str = "analytic",
               controls: IntegratorControls = IntegratorControls(), workers: int = 1,
               realization_id: int = 0) -> RateCurve:
    """Rate at every qubit splitting of ``e0_grid`` by ``method``.

    ``method`` is ``"analytic"``, ``"gamma099"`` or ``"expfit"``. Points
    are independent; a failed point becomes NaN and its status records
    why. Results do not depend on ``workers``.
    """
    grid = np.asarray(e0_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("e0 grid must be strictly increasing")
    if method not in ("analytic", "gamma099", "expfit"):
        raise ValueError(f"unknown method {method!r}")
    if method == "analytic":
        rates = gamma_modulated(grid, bath, drive_template)
        status = ["ok"] * grid.size
    else:
        tasks = [(bath, drive_template.with_e0(e), method, controls) for e in grid]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                out = list(ex.map(_curve_point, tasks))
        else:
            out = [_curve_point(t) for t in tasks]
        rates = np.array([r for r, _ in out])
        status = [s for _, s in out]
    return RateCurve(e0_grid=grid, rates=rates, method=method, drive=drive_template,
                     bath_fingerprint=bath.spec_fingerprint, realization_id=realization_id,
                     status=status)
