"""Numerical lab for the damped coupled Klein-Gordon system and ray geometry.

The energy functional lives in :mod:`kvwave.energy` (not re-exported here, so
the submodule name stays importable).
"""

from .energy import (DecayFit, EnergyTrace, check_identity, dissipation_rate, fit_decay,
                     observability_ratio, random_initial_states)
from .errors import (CoefficientError, GridError, KVWaveError, MetricError, ScenarioError, SolverError,
                     StepFailure)
from .evolution import Integrator, IntegratorConfig, run, step
from .fields import CoefficientSet, Grid, State, build_grid, coefficient_preset, sample_coefficients
from .geometry import (GeodesicPath, MetricModel, analytic_metric, check_gcc, escape_certificate,
                       geodesic_flow, hamiltonian_flow, hessian, metric_from_coefficients)
from .operators import (ResolventForm, assemble_div_grad, assemble_mass, assemble_operators,
                        assemble_resolvent, solve_spd)

__version__ = "0.1.0"
