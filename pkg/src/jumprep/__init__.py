"""Pathwise functional calculus for integer-valued random measures, with Monte Carlo verification."""
from .compensator import (CompensatorModel, Constant, DensityTable, Deterministic, PathDependent, PointMasses,
                          TiltSpec, compensator_mass, hitting_time, hitting_times, tilt)
from .errors import ConfigurationError, DomainError, NumericalError
from .functional import (Coefficient, Functional, HittingSpec, PredictableField, SimpleField, SimplePhi,
                         StepSchedule, compensated_integral, diffusion_integral, integral_functional, mu_integral,
                         nabla_p, vertical_diffusion_derivative, vertical_jump_derivative)
from .measure import (EVERYWHERE, Annulus, Atom, AtomicMeasure, CadlagPath, Interval, MarkRegion, StopMode,
                      add_atom, cylinder_count, restrict)
from .simulate import LevyParams, RngStream, Scenario, run_chunks, sample_levy, sample_levy_batch, sample_prm

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
