"""Correlated random coefficients estimation with conditional-rank control functions."""
from .baselines import LinearFit, instrument_matrix, ols, tsls
from .dataset import (Dataset, DesignMatrix, DesignSpec, Interaction, Power, build_design,
                      load_csv)
from .estimator import (CrcEstimate, CrcPipeline, EffectQuery, LocalFit, att, effect,
                        estimate_beta_R, local_beta, pinv)
from .exceptions import (ConfigurationError, ConvergenceError, CrcError, EstimationError,
                         NumericalError, ParseError)
from .first_stage import (EmpiricalCdf, QuantileProcess, RearrangedCdf, empirical_cdf,
                          estimate_ranks, fit_conditional_cdf, fit_quantile_process,
                          fit_quantile_regression, rearranged_cdf)
from .inference import BootstrapReport, bootstrap
from .quadrature import (KernelSpec, QuadratureNodes, RSet, halton, kernel_eval,
                         kernel_weights, nodes_over)
from .simulation import DgpSpec, StudyReport, generate, run_study

__version__ = "0.1.0"
