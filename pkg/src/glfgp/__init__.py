"""Low-rank GP regression from tensor quadrature of the kernel's spectral density."""
from .bounds import BoundPlan, compute_s, compute_umin, plan, polyellipse_params
from .data import Dataset, ingest_csv, synth_1d, synth_2d
from .diagnostics import (EquivalenceReport, kl_divergence, quadrature_probe,
                          spectral_equivalence_check, truncation_probe)
from .errors import (BoundFailure, CapacityError, ConditioningError, GlfError, InvalidArgument,
                     OptimizationError, UnsupportedAnalyticity, UnsupportedFamily)
from .features import (FeatureModel, RffModel, approx_kernel_eval, build_feature_matrix,
                       rff_build, rff_eval, rff_grad, weight_diag)
from .gpr import (GprModel, LikelihoodReport, exact_gpr, likelihood_gradient,
                  log_marginal_likelihood, predict, train)
from .hyperopt import OptOptions, OptTrace, learn, profile_likelihood
from .kernels import (DecayClassInfo, HyperDomain, HyperParams, KernelSpec, decay_class,
                      density_grad, eval_kernel, kernel_matrix, spectral_density)
from .quadrature import GaussLegendreRule, QuadratureGrid, gauss_legendre, tensor_grid

__version__ = "0.1.0"
