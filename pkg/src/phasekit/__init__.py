"""phasekit: phase response curves, perturbation projection vectors and
phase-domain macromodels for limit-cycle oscillators."""

__version__ = "0.1.0"

from .dynsys import (ImpulseEvent, OdeSystem, Trajectory, crossing_times,
                     integrate, numerical_jacobian)
from .errors import (ConfigError, ConvergenceError, DivergenceError,
                     FourierFitError, IncompatibleCurvesError,
                     NotOscillatingError, OrbitAccuracyError, PhasekitError,
                     PeriodUnstableError, TooStrongImpulseError)
from .limit_cycle import (LimitCycle, asymptotic_phase_shift, find_period,
                          settle)
from .models import (InjectionPort, MemristorParams, memristor_field,
                     memristor_system, ring3_field, ring3_system, vdp_field,
                     vdp_system)
from .phase_sim import (CosimReport, Coupling, Injection, LinearKernel,
                        LockReport, PhaseNetwork, PhaseOscillator, PhaseTrace,
                        adler_lock_range, cosim_compare, injection_lock,
                        phase_step, simulate_network)
from .ppv import (FourierSeries, PpvComparison, PpvCurve, SinusoidalityReport,
                  adjoint_ppv, compare_ppv, fit_fourier, ppv_from_prc,
                  sinusoidality_report)
from .prc import (ImpulseSpec, LinearityReport, PrcCurve, measure_prc_point,
                  pick_weak_charge, sweep_prc, weakness_check)

__all__ = [
    "__version__",
    # dynsys
    "OdeSystem", "Trajectory", "ImpulseEvent", "integrate", "crossing_times",
    "numerical_jacobian",
    # models
    "MemristorParams", "InjectionPort", "memristor_field", "memristor_system",
    "vdp_field", "vdp_system", "ring3_field", "ring3_system",
    # limit_cycle
    "LimitCycle", "settle", "find_period", "asymptotic_phase_shift",
    # prc
    "ImpulseSpec", "PrcCurve", "LinearityReport", "measure_prc_point",
    "sweep_prc", "weakness_check", "pick_weak_charge",
    # ppv
    "FourierSeries", "PpvCurve", "PpvComparison", "SinusoidalityReport",
    "fit_fourier", "ppv_from_prc", "adjoint_ppv", "compare_ppv",
    "sinusoidality_report",
    # phase_sim
    "PhaseOscillator", "PhaseNetwork", "PhaseTrace", "Injection", "Coupling",
    "LinearKernel", "LockReport", "CosimReport", "phase_step",
    "injection_lock", "adler_lock_range", "simulate_network", "cosim_compare",
    # errors
    "PhasekitError", "DivergenceError", "NotOscillatingError",
    "ConvergenceError", "PeriodUnstableError", "TooStrongImpulseError",
    "FourierFitError", "OrbitAccuracyError", "IncompatibleCurvesError",
    "ConfigError",
]
