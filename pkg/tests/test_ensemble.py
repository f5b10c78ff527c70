import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fmqubit.bath import BathSpec, DriveParams, fig1a_spec, make_rng, sample_bath
from fmqubit.analytic import gamma_modulated
from fmqubit.dynamics import IntegratorControls
from fmqubit.ensemble import (EnsembleStats, EstimatorFailureError, draw_e0, monte_carlo_stats, overlap_variance,
                              predicted_mean, predicted_variance, relative_static_spread, sample_rates,
                              scaling_fit, uniform_moment)
from fmqubit.specfun import bessel_quartic_sum

G = (2 / 3 * 1e-2, 10 / 3 * 1e-2)
GAMMA = (2 / 3 * 1e-1, 10 / 3 * 1e-1)


def uniform_spec(n_tls=240, seed=2021, spacing=5 / 3):
    return BathSpec(n_tls, spacing, G, GAMMA, "uniform-random", seed=seed)


def test_uniform_moments():
    assert uniform_moment(1.0, 3.0, 2) == pytest.approx(13 / 3)
    assert uniform_moment(1.0, 3.0, -1) == pytest.approx(math.log(3) / 2)
    assert uniform_moment(2.0, 2.0, 4) == 16.0
    rng = np.random.default_rng(0)
    x = rng.uniform(0.1, 0.4, 400_000)
    assert uniform_moment(0.1, 0.4, -1) == pytest.approx(np.mean(1 / x), rel=3e-3)


def test_predicted_mean_value():
    assert predicted_mean(uniform_spec()) == pytest.approx(4.33e-4, abs=5e-7)
    g0 = 0.02
    point = BathSpec(10, 2.0, (g0, g0), GAMMA, "uniform-random")
    assert predicted_mean(point) == pytest.approx(math.pi * g0**2 / 4.0, rel=1e-14)
    assert predicted_mean(uniform_spec(spacing=10 / 3)) == pytest.approx(predicted_mean(uniform_spec()) / 2)


def test_predicted_variance_forms():
    spec = uniform_spec()
    static = predicted_variance(spec, 0.0)
    ref = math.pi / (8 * spec.spacing) * uniform_moment(*G, 4) * uniform_moment(*GAMMA, -1)
    assert static == pytest.approx(ref, rel=1e-14)
    for x in (1.0, 8.0, 20.0):
        assert predicted_variance(spec, x) / static == pytest.approx(bessel_quartic_sum(x), rel=1e-12)


@given(st.floats(0, 80))
def test_variance_never_exceeds_static(x):
    spec = uniform_spec()
    assert predicted_variance(spec, x) <= predicted_variance(spec, 0.0) * (1 + 1e-12)


def test_overlap_variance_reduces_to_leading_term():
    spec = uniform_spec()
    assert overlap_variance(spec, 0.0) == pytest.approx(predicted_variance(spec, 0.0), rel=1e-9)
    lead = predicted_variance(spec, 20.0)
    full = overlap_variance(spec, 20.0)
    assert full > lead
    # the correction is of order (gamma_typ / Omega)^2 relative to the sideband count
    assert full / lead - 1 < 0.5


def test_relative_static_spread():
    assert relative_static_spread(5 / 3, 0.2) == pytest.approx(1.152, abs=1e-3)


def test_draw_e0_policies():
    spec = uniform_spec()
    xs = np.array([draw_e0(spec, i) for i in range(2000)])
    assert np.all(np.abs(xs) <= spec.spacing / 2)
    assert abs(xs.mean()) < 3 * spec.spacing / math.sqrt(12 * xs.size)
    assert draw_e0(spec, 7, 3.5) == 3.5
    assert draw_e0(spec, 7) == draw_e0(spec, 7)
    # the qubit splitting does not consume the bath's own stream
    assert draw_e0(spec, 7) != make_rng(spec.seed, 7).random() * spec.spacing - spec.spacing / 2


def test_analytic_samples_match_direct_evaluation():
    spec = uniform_spec(n_tls=60)
    d = DriveParams(0.0, 5.0)
    rates = sample_rates(spec, d, 7, chunk=3)
    for i, r in enumerate(rates):
        e0 = draw_e0(spec, i)
        assert r == pytest.approx(gamma_modulated(e0, sample_bath(spec, i), d.with_e0(e0)), rel=1e-12)


@pytest.mark.parametrize("amp", [0.0, 20.0])
def test_monte_carlo_mean(amp):
    spec = uniform_spec()
    st_ = monte_carlo_stats(spec, DriveParams(0.0, amp), n_realizations=2000)
    assert abs(st_.mean - predicted_mean(spec)) < 3 * st_.std_err_mean
    assert st_.n_failed == 0 and st_.n_realizations == 2000


def test_std_error_scaling():
    spec = uniform_spec(seed=99)
    d = DriveParams(0.0, 20.0)
    small = monte_carlo_stats(spec, d, n_realizations=4000)
    large = monte_carlo_stats(spec, d, n_realizations=8000)
    assert small.std_err_mean / large.std_err_mean == pytest.approx(math.sqrt(2), rel=0.10)
    assert small.std_err_mean == pytest.approx(math.sqrt(small.variance / 4000), rel=1e-14)


def test_estimator_swap_keeps_mean():
    spec = uniform_spec(n_tls=40)
    d = DriveParams(0.0, 0.0)
    an = monte_carlo_stats(spec, d, n_realizations=40)
    fit = monte_carlo_stats(spec, d, n_realizations=40, estimator="expfit")
    assert fit.n_failed == 0
    assert abs(fit.mean - an.mean) < 3 * an.std_err_mean


def test_estimator_failures_abort():
    spec = uniform_spec(n_tls=40)
    with pytest.raises(EstimatorFailureError):
        monte_carlo_stats(spec, DriveParams(0.0), n_realizations=4, estimator="gamma099",
                          controls=IntegratorControls(t_max=1.0))
    with pytest.raises(ValueError):
        monte_carlo_stats(spec, DriveParams(0.0), n_realizations=1)
    with pytest.raises(ValueError):
        sample_rates(spec, DriveParams(0.0), 3, estimator="median")


def test_stats_json_and_invariants():
    st_ = EnsembleStats.from_samples([1.0, 2.0, 4.0], "analytic", amp_over_omega=20.0, seed=5)
    doc = json.loads(st_.to_json())
    assert {"n", "mean", "variance", "std_err", "estimator", "amp_over_omega", "seed"} <= set(doc)
    assert doc["n"] == 3 and doc["seed"] == 5
    assert st_.variance == pytest.approx(7 / 3)
    assert st_.std_err_mean == pytest.approx(math.sqrt(7 / 9))
    with pytest.raises(ValueError):
        EnsembleStats.from_samples([1.0], "analytic")


def test_scaling_fit_validation():
    spec = uniform_spec(n_tls=40)
    d = DriveParams(0.0)
    with pytest.raises(ValueError, match="factor 8"):
        scaling_fit(spec, d, [4, 4, 4], n_realizations=10)
    with pytest.raises(ValueError, match="factor 8"):
        scaling_fit(spec, d, [8, 16, 32], n_realizations=10)
    with pytest.raises(ValueError):
        scaling_fit(spec, d, [8, 64], n_realizations=10)


def test_scaling_fit_small_run():
    fit = scaling_fit(uniform_spec(), DriveParams(0.0), [8, 16, 32, 64], n_realizations=400)
    assert fit.ci_low <= fit.slope <= fit.ci_high
    assert -1.0 < fit.slope < 0.0
    assert len(fit.sigmas) == 4 and fit.to_dict()["indices"] == (8.0, 16.0, 32.0, 64.0)


def test_static_control_ratio_is_one():
    spec = uniform_spec()
    a = monte_carlo_stats(spec, DriveParams(0.0, 0.0), n_realizations=200)
    b = monte_carlo_stats(spec, DriveParams(0.0, 0.0), n_realizations=200)
    assert a.variance / b.variance == 1.0


def test_equispaced_spec_usable():
    st_ = monte_carlo_stats(fig1a_spec(), DriveParams(0.0, 20.0), n_realizations=50)
    assert st_.mean > 0
