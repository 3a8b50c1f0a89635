"""Possibilistic ensemble Kalman filter with a max-det Gaussian fit."""

from .filters import (GainPair, InitScheme, KalmanState, ProbEnsemble, UKFConfig,
                      compute_gains, enkf_predict, kf_predict, kf_update, penkf_init,
                      penkf_predict, penkf_update, penkf_update_linearised,
                      sqrt_enkf_update, stenkf_update, ukf_predict, ukf_step)
from .maxdet import (FitResult, MaxIterationsError, PrecisionFitProblem, SolverOptions,
                     SparsityPattern, UnboundedProblem, fit_precision, fit_precision_1d,
                     gaussian_from_ensemble, nongaussianity_gaps)
from .metrics import MetricSeries, aggregate, log_det, mahalanobis, quantile, rmse
from .models import (LinearModelConfig, LR96Config, StateSpaceModel, Trajectory, build_model,
                     linear_transition_matrix, lr96_step, observation_matrix,
                     sample_inverse_wishart, simulate_trajectory)
from .possibility import (AffineMap, GaussianPossibility, SingularCovarianceError,
                          WeightedEnsemble, apply_map, bayes_update, epistemic_uncertainty,
                          evaluate, linear_transform, transport_map)

__version__ = "0.1.0"
