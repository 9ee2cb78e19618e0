"""Spectral Galerkin splitting scheme for the 1D stochastic Allen-Cahn equation.

``dX = (A X + X - X^3) dt + dW^Q`` on (0, 1) with Dirichlet boundary
conditions; the reaction ODE is integrated exactly, the linear part and the
stochastic convolution exactly per mode.
"""

from .error_lab import (ErrorSpec, RateReport, exp_integrability_probe, fit_rate,
                        moment_probe, rate_experiment, strong_error)
from .errors import (ConfigurationError, DomainError, ExperimentError, FitError,
                     ResourceError)
from .flow import FlowParams, apply_phi, apply_psi, drift, phi, psi
from .integrators import (SchemeConfig, Stepper, TrajectoryRecord, aux_exp_euler_step,
                          initial_profile, plain_exp_euler_step, run_trajectory,
                          splitting_step, zn_eval)
from .noise import (NoiseTape, QSpec, RngStream, convolution_increment, hs_norm_sq,
                    make_tape, q_value, stationary_variance)
from .spectral import LaplacianSpectrum

__version__ = "0.1.0"
