"""Acceptance criteria 1 to 11, one PASS/FAIL line each (see the terminal summary).

Criteria whose literal statement disagrees with the model are marked
``xfail(strict=True)``: the measurement is still made at the stated
tolerance and reported as FAIL, and a companion test pins down what the
model actually gives.
"""
import math
import tempfile
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import OptimizeWarning, brentq, curve_fit, minimize_scalar

from fmqubit.analytic import gamma_modulated, gamma_static
from fmqubit.bath import BathSpec, DriveParams, TlsParams, fig1a_spec, fig1b_tls, sample_bath, single_tls_bath
from fmqubit.cli import BUNDLED, load_config, run
from fmqubit.dynamics import IntegratorControls, PeriodPropagator, expfit_rate, gamma_099
from fmqubit.ensemble import overlap_variance, predicted_mean, predicted_variance, sample_rates, scaling_fit
from fmqubit.gates import RabiDrive, effective_rabi, multiharmonic_recovery, simulate_rabi
from fmqubit.phonon_oracle import PhononBathSpec, golden_rule_rate, simulate_explicit
from fmqubit.specfun import bessel_j, bessel_quartic_sum

pytestmark = pytest.mark.acceptance

LONG = IntegratorControls(t_max=1e6)
LN99 = 2 * abs(math.log(0.99))
AMPS = (0.0, 5.0, 10.0, 20.0)
ENSEMBLE = BathSpec(240, 5 / 3, (2 / 3 * 1e-2, 10 / 3 * 1e-2), (2 / 3 * 1e-1, 10 / 3 * 1e-1),
                    "uniform-random", seed=2021)
N_MC = 2000


def lorentzian(x, h, c, w):
    return h * w * w / ((x - c) ** 2 + w * w)


# ---------------------------------------------------------------- 1

def test_c01_static_resonance(verdict):
    worst = 0.0
    for g, gam in [(0.01, 0.1), (2 / 30, 0.02), (1e-5, 1e-4), (0.3, 7.0)]:
        tls = TlsParams(1.3, g, gam)
        worst = max(worst, abs(gamma_static(1.3, tls) / (g * g / (2 * gam)) - 1))
    assert verdict("criterion 1", worst <= 1e-12, f"worst relative error {worst:.1e} (tol 1e-12)")


# ---------------------------------------------------------------- 2, 3

@pytest.fixture(scope="module")
def fig1a_fits():
    """Exponential-fit rate and analytic rate at every fig1a grid point below gamma_min / 5."""
    bath = sample_bath(fig1a_spec())
    cut = bath.gamma.min() / 5
    out = {}
    for amp in AMPS:
        rows = []
        for e0 in np.linspace(-30, 30, 121):
            d = DriveParams(e0, amp)
            an = gamma_modulated(e0, bath, d)
            if an < cut:
                rate, traj, _ = expfit_rate(bath, d, LONG)
                rows.append((d, an, rate, traj))
        out[amp] = rows
    return bath, out


def test_c02_expfit_matches_analytic(verdict, fig1a_fits):
    _, fits = fig1a_fits
    parts, ok = [], True
    for amp, rows in fits.items():
        err = np.array([abs(rate / an - 1) for _, an, rate, _ in rows])
        frac = np.mean(err <= 0.05)
        ok &= bool(frac >= 0.95)
        parts.append(f"A={amp:g}: {frac:.0%} of {err.size} (worst {err.max():.1%})")
    assert verdict("criterion 2", ok, "within 5%: " + ", ".join(parts))


def exponential_deviation(bath, drive, rate, crossing):
    """Largest gap between ln|a|^2 and -rate*t on [0, crossing], in units of the crossing drop."""
    prop = PeriodPropagator(bath, drive, keep_partial=True)
    tr = prop.trajectory(int(math.ceil(crossing / prop.period)))
    sel = tr.times <= crossing
    return float(np.max(np.abs(np.log(np.abs(tr.a[sel]) ** 2) + rate * tr.times[sel]))) / LN99


def test_c03_gamma099_consistency(verdict, fig1a_fits):
    # "exponential" = |a|^2 stays within 1% of the crossing drop of exp(-rate t) from t = 0 to the crossing
    bath, fits = fig1a_fits
    cases = [(bath, d, rate, traj) for rows in fits.values() for d, _, rate, traj in rows]
    markov = single_tls_bath(TlsParams(0.0, 0.1, 5.0))
    for amp in AMPS:
        for e0 in (0.0, 0.37, 1.5, 3.2):
            d = DriveParams(e0, amp)
            rate, traj, _ = expfit_rate(markov, d, LONG)
            cases.append((markov, d, rate, traj))
    errs = []
    for b, d, rate, traj in cases:
        slope, icpt = np.polyfit(traj.times, np.log(np.abs(traj.a) ** 2), 1)
        if abs(icpt) > 0.01 * LN99:  # cheap necessary condition before the dense trajectory
            continue
        r = gamma_099(b, d, LONG)
        assert r.crossed
        if exponential_deviation(b, d, rate, r.crossing_time) <= 0.01:
            errs.append(abs(r.rate * LN99 / rate - 1))
    errs = np.array(errs)
    ok = errs.size > 0 and errs.max() <= 0.02
    assert verdict("criterion 3", ok, f"{errs.size} exponential cases of {len(cases)}, "
                                      f"worst {errs.max():.2%} (tol 2%)")


# ---------------------------------------------------------------- 4

@pytest.fixture(scope="module")
def replica_peaks():
    g, gam = 1e-5, 1e-4
    bath = single_tls_bath(TlsParams(0.0, g, gam))
    d = DriveParams(0.0, 20.0)

    def f(e):
        return gamma_modulated(e, bath, d.with_e0(e))

    rows = []
    for m in range(-20, 21):
        r = minimize_scalar(lambda e: -f(e), bounds=(m - 3 * gam, m + 3 * gam), method="bounded",
                            options={"xatol": 1e-6 * gam})
        x, h = r.x, f(r.x)
        # a local maximum: lower on both sides
        is_max = f(x - gam) < h and f(x + gam) < h
        left = brentq(lambda e: f(e) - h / 2, m - 20 * gam, x)
        right = brentq(lambda e: f(e) - h / 2, x, m + 20 * gam)
        rows.append((m, x, h, (right - left) / 2, is_max, g * g * bessel_j(m, 20.0) ** 2 / gam))
    return gam, rows


@pytest.mark.xfail(strict=True, reason="replica heights are g^2 J_m^2 / (2 gamma), consistent with criterion 1")
def test_c04_peak_replication(verdict, replica_peaks):
    gam, rows = replica_peaks
    pos = max(abs(x - m) / gam for m, x, *_ in rows)
    height = max(abs(h / ref - 1) for _, _, h, _, _, ref in rows)
    width = max(abs(hw / gam - 1) for _, _, _, hw, _, _ in rows)
    maxima = all(r[4] for r in rows)
    ok = maxima and height <= 0.03 and width <= 0.05
    assert verdict("criterion 4", ok, f"41 maxima at eps+m: {maxima} (offset {pos:.1e} gamma); "
                                      f"height vs g^2 J^2/gamma off by {height:.1%} (tol 3%); "
                                      f"HWHM vs gamma off by {width:.2%} (tol 5%)")


def test_c04_companion_half_height(verdict, replica_peaks):
    gam, rows = replica_peaks
    height = max(abs(h / (ref / 2) - 1) for _, _, h, _, _, ref in rows)
    width = max(abs(hw / gam - 1) for _, _, _, hw, _, _ in rows)
    ok = all(r[4] for r in rows) and height <= 0.03 and width <= 0.05
    assert verdict("criterion 4 (heights vs g^2 J^2/(2 gamma))", ok,
                   f"height off by {height:.2%}, HWHM off by {width:.2%}")


# ---------------------------------------------------------------- 5, 6, 7

@pytest.fixture(scope="module")
def ensemble_rates():
    return {amp: sample_rates(ENSEMBLE, DriveParams(0.0, amp), N_MC) for amp in (0.0, 20.0)}


def test_c05_mean_invariance(verdict, ensemble_rates):
    mu = predicted_mean(ENSEMBLE)
    z = {amp: (r.mean() - mu) / (r.std(ddof=1) / math.sqrt(r.size)) for amp, r in ensemble_rates.items()}
    # the two amplitudes share bath realizations, so the difference is tested pairwise
    diff = ensemble_rates[20.0] - ensemble_rates[0.0]
    z_diff = diff.mean() / (diff.std(ddof=1) / math.sqrt(diff.size))
    ok = all(abs(v) <= 3 for v in z.values()) and abs(z_diff) <= 3
    assert verdict("criterion 5", ok, f"n={N_MC}, z(A=0)={z[0.0]:+.2f}, z(A=20)={z[20.0]:+.2f}, "
                                      f"z(difference)={z_diff:+.2f} (tol 3)")


def test_c06_variance_static(verdict, ensemble_rates):
    dev = ensemble_rates[0.0].var(ddof=1) / predicted_variance(ENSEMBLE, 0.0) - 1
    assert verdict("criterion 6 (A=0)", abs(dev) <= 0.10, f"variance off by {dev:+.1%} (tol 10%)")


@pytest.mark.xfail(strict=True, reason="sideband overlap adds variance beyond the sum of J_m^4")
def test_c06_variance_modulated(verdict, ensemble_rates):
    ref = predicted_variance(ENSEMBLE, 0.0) * bessel_quartic_sum(20.0)
    dev = ensemble_rates[20.0].var(ddof=1) / ref - 1
    assert verdict("criterion 6 (A=20)", abs(dev) <= 0.15, f"variance off by {dev:+.1%} (tol 15%)")


def test_c06_companion_overlap(verdict, ensemble_rates):
    dev = ensemble_rates[20.0].var(ddof=1) / overlap_variance(ENSEMBLE, 20.0) - 1
    assert verdict("criterion 6 (A=20 with overlap terms)", abs(dev) <= 0.15, f"variance off by {dev:+.1%}")


def test_c07_suppression_exponent(verdict):
    fit = scaling_fit(ENSEMBLE, DriveParams(0.0), [8, 16, 32, 64], n_realizations=N_MC)
    ok = abs(fit.slope + 0.5) <= 0.15
    assert verdict("criterion 7", ok, f"slope {fit.slope:.3f} (CI {fit.ci_low:.3f}..{fit.ci_high:.3f}), "
                                      f"target -0.5 +- 0.15")


# ---------------------------------------------------------------- 8

def test_c08_flat_top(verdict):
    tls = fig1b_tls()
    bath = single_tls_bath(tls)
    g = tls.g

    def rate(delta):
        return gamma_099(bath, DriveParams(delta, 0.0), LONG).rate

    top = rate(0.0)
    # flat top: within 5% of the centre value for |E0 - eps| <= g
    flat = all(abs(rate(s * g) / top - 1) <= 0.05 for s in (0.5, 1.0))
    hwhm = brentq(lambda x: rate(x * g) - top / 2, 0.1, 30.0, xtol=1e-3) * g
    # the edge sits where off-resonant exchange g^2/(g^2 + delta^2) can no longer reach 1 - 0.99^2
    ok = abs(top / g / 3.53 - 1) <= 0.10 and flat and 0.1 <= hwhm / g <= 10
    assert verdict("criterion 8 (flat top)", ok, f"height {top / g:.3f} g (target 3.53 g +- 10%), "
                                                 f"flat {flat}, HWHM {hwhm / g:.2f} g")


@pytest.fixture(scope="module")
def replica_fits():
    tls = fig1b_tls()
    bath = single_tls_bath(tls)
    g, gam = tls.g, tls.gamma
    rows = []
    for amp in (12.0, 20.0):
        d = DriveParams(0.0, amp)
        for m in range(-int(amp), int(amp) + 1):
            j2 = bessel_j(m, amp) ** 2
            if j2 < 1e-3:  # no resolvable replica
                continue
            xs = m + gam * np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
            ys = np.array([expfit_rate(bath, d.with_e0(x), LONG)[0] for x in xs])
            with warnings.catch_warnings():
                # an exactly symmetric sample set fits with zero residual and no covariance
                warnings.simplefilter("ignore", OptimizeWarning)
                p, _ = curve_fit(lorentzian, xs, ys, p0=[ys[2], m, gam])
            rows.append((amp, m, j2, p[0], abs(p[2]), g * g * j2 / gam))
    return g, gam, rows


@pytest.mark.xfail(strict=True, reason="weak-coupling replica height is g^2 J_m^2 / (2 gamma); "
                                       "A=12 low orders are not weak")
def test_c08_replicas(verdict, replica_fits):
    _, _, rows = replica_fits
    err = np.array([abs(h / ref - 1) for *_, h, _, ref in rows])
    ok = bool(err.max() <= 0.15)
    assert verdict("criterion 8 (replicas)", ok, f"{len(rows)} replicas at A=12,20; height vs g^2 J^2/gamma "
                                                 f"off by {err.min():.0%}..{err.max():.0%} (tol 15%)")


def test_c08_companion_weak_replicas(verdict, replica_fits):
    g, gam, rows = replica_fits
    weak = [(h, ref) for _, _, j2, h, _, ref in rows if g * g * j2 / gam**2 <= 1 / 3]
    err = np.array([abs(h / (ref / 2) - 1) for h, ref in weak])
    ok = weak and err.max() <= 0.15
    assert verdict("criterion 8 (weak replicas vs g^2 J^2/(2 gamma))", ok,
                   f"{len(weak)} replicas, worst {err.max():.1%}")


# ---------------------------------------------------------------- 9

def test_c09_phonon_oracle(verdict):
    band = PhononBathSpec(center=0.0, width=8.0, spacing=0.001, v=0.02)
    res = simulate_explicit(band, 0.0, horizon=10.0)
    expect = 2 * golden_rule_rate(band, 0.0)
    dev = res.rate / expect - 1
    ok = abs(dev) <= 0.10 and res.norm_error <= 1e-8
    assert verdict("criterion 9", ok, f"rate off by {dev:+.2%} (tol 10%), norm error {res.norm_error:.1e}")


# ---------------------------------------------------------------- 10

def test_c10_rabi_gates(verdict):
    wr, e0 = 0.02, 20.0
    worst = 0.0
    for m in (0, 1, 2):
        for x in (0.0, 1.0, 2.40483):
            res = simulate_rabi(DriveParams(e0, x), RabiDrive(wr, e0 + m))
            # deviations in units of the bare Rabi frequency, so vanishing J_m is covered too
            worst = max(worst, abs(res.frequency - abs(effective_rabi(m, x, wr))) / wr)
    mh = multiharmonic_recovery(DriveParams(e0, 2.0), wr, order=8)
    mh_err = abs(mh.frequency / wr - 1)
    ok = worst <= 0.02 and mh_err <= 0.02
    assert verdict("criterion 10", ok, f"worst sideband deviation {worst:.2%} of Omega_R, "
                                       f"multi-harmonic {mh_err:.2%} (tol 2%)")


# ---------------------------------------------------------------- 11

def test_c11_determinism(verdict):
    bad = []
    with tempfile.TemporaryDirectory() as tmp:
        for name in BUNDLED:
            cfg = load_config(name)
            one, two = Path(tmp, name, "1"), Path(tmp, name, "2")
            m1 = run(cfg, one, workers=1)
            run(cfg, two, workers=2)
            for fname in m1["outputs"]:
                if fname.endswith(".csv") and (one / fname).read_bytes() != (two / fname).read_bytes():
                    bad.append(f"{name}/{fname}")
    assert verdict("criterion 11", not bad, f"{len(BUNDLED)} bundled configs at 1 and 2 workers, "
                                            f"differing CSVs: {bad or 'none'}")
