"""Relaxation of a frequency-modulated qubit coupled to a bath of two-level defects.

Submodules
----------
specfun        Bessel functions and sideband weights.
bath           Drive and TLS bath data model, seeded disorder sampling.
analytic       Closed-form relaxation rates and Lamb shifts.
dynamics       Amplitude integration, operational and fitted rates.
phonon_oracle  Explicit phonon-bath check of the TLS decay rate.
gates          Rabi gates under frequency modulation.
ensemble       Disorder statistics of the rate.
cli            Command-line sweeps.
"""
__version__ = "0.1.0"

from .analytic import complex_rate, gamma_modulated, gamma_static, lamb_shift_low
from .bath import BathRealization, BathSpec, DriveParams, TlsParams, sample_bath
from .dynamics import IntegratorControls, gamma_099, gamma_expfit, integrate, rate_curve
from .specfun import bessel_j, bessel_quartic_sum, sideband_coeffs

__all__ = [
    "__version__",
    "BathRealization",
    "BathSpec",
    "DriveParams",
    "TlsParams",
    "sample_bath",
    "bessel_j",
    "bessel_quartic_sum",
    "sideband_coeffs",
    "gamma_static",
    "gamma_modulated",
    "complex_rate",
    "lamb_shift_low",
    "IntegratorControls",
    "integrate",
    "gamma_099",
    "gamma_expfit",
    "rate_curve",
]
