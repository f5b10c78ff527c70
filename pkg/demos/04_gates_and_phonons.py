"""
Gates on a modulated qubit, and a check of the bath model
=========================================================

A resonant drive at E0 + m Omega rotates the qubit at Omega_R J_m. A
drive carrying every harmonic, weighted by J_m and in phase, undoes the
modulation. Separately, a TLS coupled to a dense flat phonon band decays
at the golden-rule rate that the model assigns to it.
"""

# %%
from fmqubit.bath import DriveParams
from fmqubit.gates import RabiDrive, effective_rabi, multiharmonic_recovery, simulate_rabi
from fmqubit.phonon_oracle import PhononBathSpec, golden_rule_rate, simulate_explicit

wr, e0 = 0.02, 20.0
for x in (0.0, 1.0, 2.40483):
    for m in (0, 1):
        res = simulate_rabi(DriveParams(e0, x), RabiDrive(wr, e0 + m))
        print(f"A/Omega={x:<8} m={m}  measured {res.frequency:.5f}  predicted {abs(effective_rabi(m, x, wr)):.5f}"
              f"  ({res.status})")

# %%
res = multiharmonic_recovery(DriveParams(e0, 2.0), wr, order=8)
print("multi-harmonic drive restores", res.frequency, "of", wr)

# %%
band = PhononBathSpec(center=0.0, width=8.0, spacing=0.001, v=0.02)
decay = simulate_explicit(band, 0.0, horizon=10.0)
print("explicit |b|^2 rate", decay.rate, "golden rule", 2 * golden_rule_rate(band, 0.0),
      "norm error", decay.norm_error)
