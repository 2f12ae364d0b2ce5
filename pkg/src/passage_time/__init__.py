"""Tunneling passage time for a rectangular barrier, computed two ways:
the quantum-shutter wave function at the barrier exit and the
Feynman-histories passage-time function."""
from .histories import RealCurve, gp_curve, gp_value
from .resonances import PoleSet, ResonantState, find_poles, mittag_leffler_T, residue_at
from .scattering import reflection_amplitude, transmission_amplitude
from .shutter import ComplexCurve, m_function, psi_curve, psi_direct_integral, psi_pole_expansion
from .units import BarrierSpec, UnitSystem, barrier_from_config, make_unit_system, reference_barrier
from .verify import equivalence_report, find_peak, selftest

__all__ = [
    "BarrierSpec", "ComplexCurve", "PoleSet", "RealCurve", "ResonantState", "UnitSystem",
    "barrier_from_config", "equivalence_report", "find_peak", "find_poles", "gp_curve", "gp_value",
    "m_function", "make_unit_system", "mittag_leffler_T", "reference_barrier", "psi_curve",
    "psi_direct_integral", "psi_pole_expansion", "reflection_amplitude", "residue_at", "selftest",
    "transmission_amplitude",
]
__version__ = "0.1.0"
