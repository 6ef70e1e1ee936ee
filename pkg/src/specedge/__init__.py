"""Spectral edges of sums of randomly rotated matrices and tensor products:
measures and transforms, free and quantized convolution, edge criticality,
symmetric-function lifts, contour moment formulas, and Monte Carlo."""

from .measures import (Measure, Atomic, Empirical, Uniform, JacobiLike,
                       TabulatedDensity, Mixture, rademacher, semicircle,
                       cauchy_transform, cauchy_derivative, inverse_cauchy,
                       quantile_spectrum, signature_spectrum,
                       measure_from_json, measure_to_json)
from .convolve import (subordination_at, convolution_cauchy, free_convolve,
                       free_convolve_n, omega_real_extension,
                       markov_krein_forward, markov_krein_inverse,
                       quantized_convolve)
from .edge import (EdgeModel, EdgeReport, A_eval, A_prime, A_second,
                   find_critical_point, edge_constants, tau, tau_optimized,
                   tau_q, sqrt_edge_indicator, level_set_grid,
                   admissibility_check, set_inclusion_check, S_eval,
                   NoCriticalPoint)
from .symfuncs import (bessel, bessel_normalized, schur, hciz_mc,
                       ssym_lift_det, ssym_lift_matrix_form,
                       ssym_lift_contour_k1, ssym_lift_schur,
                       ssym_lift_asymptotic, susy_schur_det,
                       susy_schur_contour_q)
from .moments import (MomentRequest, moment_additive, moment_tensor,
                      difference_operator_oracle, airy_laplace,
                      airy_pair_remainder, airy_recursion_check,
                      ContourViolation)
from .simulate import (ExperimentConfig, TensorDistribution, haar_unitary,
                       sample_sum_spectrum, rescale_edge, mc_moment,
                       lr_coefficients, schur_dim, rho_V,
                       sample_tensor_particles, edge_experiment)

__version__ = "0.1.0"
