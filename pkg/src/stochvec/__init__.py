"""stochvec: a numerical laboratory for stochastic vector advection.

Solves dB + [v, B] dt + sum_k [sigma_k, B] o dW^k = 0 on a periodic box by
stochastic characteristics, steps the parabolic equations satisfied by the
expectations E[B e_f] and E[B^a B^b], and verifies the structural identities
(operator assembly, adjoint duality, coercivity, volume preservation,
Monte-Carlo/PDE duality) at desk scale.
"""

__version__ = "0.1.0"

from .errors import (BlowUp, DegenerateSample, DimensionMismatch,
                     InsufficientSamples, InvalidConfig, InverseToleranceExceeded,
                     KernelUnderresolved, MissingDerivatives, StepRejected,
                     StochvecError, TolExceeded)
from .fields import (AnalyticField, GridField, GridSpec, Mollifier, divergence,
                     mollify, sample)
from .noise import (BrownianEnsemble, EllipticityReport, NoiseBasis,
                    check_ellipticity, constant_basis, constant_plus_shear_basis,
                    covariance, covariance_derivatives, generate_ensemble)
from .lie import (OperatorCoefficients, apply_L_adjoint, apply_L_by_brackets,
                  apply_L_by_coefficients, assemble_coefficients, coercivity_check,
                  interpolation_ratio, lie_bracket, lie_bracket_grid)
from .flow import (FlowSample, SpdeSampleField, integrate_forward,
                   integrate_inverse, integrate_jacobian, solve_spde_sample,
                   weak_form_residual)
from .parabolic import (AdvectionData, MomentCoefficients, ParabolicState,
                        bilinear_form, energy_diagnostics, run_V, run_moments,
                        step_V, step_moments)
from .duality import (DualityReport, FSpec, StochasticExponential,
                      advance_exponential, duality_check, estimate_V,
                      estimate_moments, moment_check, run_spde_ensemble,
                      two_solution_comparison)
from .config import ExperimentConfig, load_config
