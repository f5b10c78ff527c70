"""
Averaging over a sparse bath
============================

Across many bath realizations the mean rate does not care about the
modulation, but the spread between realizations shrinks roughly as
(A/Omega)^(-1/2).
"""

# %%
from fmqubit.bath import BathSpec, DriveParams
from fmqubit.ensemble import monte_carlo_stats, overlap_variance, predicted_mean, predicted_variance, scaling_fit

spec = BathSpec(n_tls=240, spacing=5 / 3, g_range=(2 / 3 * 1e-2, 10 / 3 * 1e-2),
                gamma_range=(2 / 3 * 1e-1, 10 / 3 * 1e-1), epsilon_layout="uniform-random", seed=2021)

# %%
print("predicted mean", predicted_mean(spec))
for amp in (0.0, 20.0):
    st = monte_carlo_stats(spec, DriveParams(0.0, amp), n_realizations=2000)
    print(f"A/Omega={amp:4.0f}  mean {st.mean:.3e} +- {st.std_err_mean:.1e}  variance {st.variance:.3e}"
          f"  leading law {predicted_variance(spec, amp):.3e}  with overlaps {overlap_variance(spec, amp):.3e}")

# %%
fit = scaling_fit(spec, DriveParams(0.0), [8, 16, 32, 64], n_realizations=2000)
print(f"sigma ~ (A/Omega)^{fit.slope:.3f}  (95% CI {fit.ci_low:.3f} .. {fit.ci_high:.3f})")
