"""
Sideband replicas of a single absorption peak
=============================================

A weakly coupled defect absorbs around its own splitting. Modulating the
qubit frequency spreads that single Lorentzian into a comb of replicas,
one per modulation harmonic, weighted by J_m^2.
"""

# %%
import numpy as np
from scipy.integrate import trapezoid

from fmqubit.analytic import gamma_modulated, gamma_static
from fmqubit.bath import DriveParams, TlsParams, single_tls_bath
from fmqubit.specfun import bessel_j

tls = TlsParams(epsilon=0.0, g=0.01, gamma=0.05)
bath = single_tls_bath(tls)

# %%
# Undriven: one Lorentzian of height g^2 / (2 gamma).
print("static peak", gamma_static(0.0, tls), "expected", tls.g**2 / (2 * tls.gamma))

# %%
# With A/Omega = 5 the peak is copied to every integer offset.
drive = DriveParams(0.0, amp=5.0)
for m in range(0, 8):
    rate = gamma_modulated(float(m), bath, drive.with_e0(float(m)))
    print(f"m={m}  rate={rate:.3e}  J_m^2 * static={bessel_j(m, 5.0) ** 2 * gamma_static(0.0, tls):.3e}")

# %%
# Area is conserved: the comb integrates to the same total as the single peak.
e = np.linspace(-12, 12, 24001)
static = gamma_static(e, tls)
mod = np.array([gamma_modulated(x, bath, drive.with_e0(x)) for x in e])
print("area ratio", trapezoid(mod, e) / trapezoid(static, e))
