"""Unit conventions and conversion constants.

Internal units everywhere: energy in kelvin, length in bohr, mass in amu.
Cross sections are converted to Angstrom^2 only at the output layer.
"""

_HBAR = 1.054571817e-34       # J s (CODATA 2018)
_AMU = 1.66053906660e-27      # kg
_BOHR = 5.29177210903e-11     # m
_KBOLTZ = 1.380649e-23        # J/K

# hbar^2 / (2 * 1 amu) expressed in K bohr^2
HBAR2_OVER_TWO_AMU = _HBAR ** 2 / (2.0 * _AMU * _BOHR ** 2 * _KBOLTZ)

BOHR_TO_ANGSTROM = _BOHR * 1e10
BOHR2_TO_ANGSTROM2 = BOHR_TO_ANGSTROM ** 2


def hbar2_over_2mu(mu_amu):
    """hbar^2/(2 mu) in K bohr^2 for a reduced mass in amu."""
    if mu_amu <= 0:
        raise ValueError("reduced mass must be positive")
    return HBAR2_OVER_TWO_AMU / mu_amu
