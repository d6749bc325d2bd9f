"""Unit conventions.

Energies and frequencies enter and leave the package in wavenumbers (cm^-1),
times in femtoseconds.  Internally everything that multiplies a time is an
angular frequency in rad/fs.
"""

import numpy as np
from scipy import constants

#: speed of light in cm/fs
C_CM_PER_FS = constants.c * 100.0 * 1e-15

#: Boltzmann constant in cm^-1 / K
KB_CM_PER_K = constants.k / (constants.h * constants.c * 100.0)


def wavenumber_to_angular(nu):
    """cm^-1 -> rad/fs."""
    return 2.0 * np.pi * C_CM_PER_FS * np.asarray(nu, dtype=float)


def angular_to_wavenumber(omega):
    """rad/fs -> cm^-1."""
    return np.asarray(omega, dtype=float) / (2.0 * np.pi * C_CM_PER_FS)


def fwhm_to_sigma(fwhm):
    return fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))


def boltzmann_ratio(gap_cm, temperature):
    """exp(gap / kT) for a gap in cm^-1 and a temperature in K."""
    return float(np.exp(gap_cm / (KB_CM_PER_K * temperature)))
