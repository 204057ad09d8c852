"""stereoscat: coupled-channel scattering and collision stereodynamics.

Rigid rotor + structureless partner: S-matrices per (J, parity) block,
helicity-frame scattering amplitudes, polarization-dependent cross
sections, preparation control, and energy-scan resonance analysis.
"""

__version__ = "0.1.0"
