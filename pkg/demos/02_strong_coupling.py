"""
A strongly coupled defect, with and without modulation
======================================================

For g >> gamma the qubit exchanges its excitation coherently with the
defect, so the operational rate 1/T (T: first time |a| = 0.99) is set by
g. Modulation splits the coupling over many sidebands of strength
g J_m, each weak enough to act as an ordinary Lorentzian.
"""

# %%
from fmqubit.bath import DriveParams, fig1b_tls, single_tls_bath
from fmqubit.dynamics import IntegratorControls, expfit_rate, gamma_099
from fmqubit.specfun import bessel_j

tls = fig1b_tls()
bath = single_tls_bath(tls)
g, gam = tls.g, tls.gamma
controls = IntegratorControls(t_max=1e6)

# %%
# Undriven: a flat top of height ~3.5 g that ends abruptly once the
# off-resonant exchange can no longer pull |a| below 0.99.
for s in (0.0, 1.0, 3.0, 6.0, 7.0, 8.0):
    r = gamma_099(bath, DriveParams(s * g, 0.0), controls)
    print(f"detuning {s:3.1f} g   Gamma_0.99 = {r.rate / g:.3f} g")

# %%
# Driven at A/Omega = 20: each replica decays exponentially at about g^2 J_m^2 / (2 gamma).
drive = DriveParams(0.0, 20.0)
for m in (1, 5, 10, 18):
    rate = expfit_rate(bath, drive.with_e0(float(m)), controls)[0]
    print(f"m={m:2d}  fitted {rate:.3e}   weak-coupling {g**2 * bessel_j(m, 20.0) ** 2 / (2 * gam):.3e}")
