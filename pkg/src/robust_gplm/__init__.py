"""Robust estimators for generalized partially linear models.

Three profile-kernel estimators of ``E[y | x, t] = H(x'beta + eta(t))``:
the classical quasi-likelihood (``qal``), a robust quasi-likelihood with a
Huber score (``rql``) and a bounded-deviance likelihood (``mod``).
"""
from .bandwidth import CvResult, CvSpec, robust_cv
from .data import Dataset
from .errors import (BandwidthError, BoundaryWarning, DegenerateObservationError,
                     DegenerateVarianceError, DesignError, DomainError, EmptyWindowError, GplmError,
                     IllConditionedDerivativeError, MonteCarloFailure, NearSingularWarning,
                     OptimizationFailure, PrecisionError, SingularMatrixError)
from .families import Binomial, Log, Logit, Poisson
from .inference import (SandwichEstimate, TestResult, lambda_test, sandwich, wald_test,
                        weighted_chi2_pvalue)
from .losses import ClassicalQuasi, LOSS_NAMES, ModifiedLikelihood, RobustQuasi, make_loss
from .profile import BetaSearchSpec, FitResult, fit_beta, profile_objective, profile_score
from .scores import BiancoYohai, CrouxHaesbroeck, Huber, WeightFn
from .simulation import McResult, StudySpec, gen_study1, gen_study2, gen_study3, run_monte_carlo
from .smoothing import KernelSpec, LocalSmoother, ScalarSearchSpec, eta_hat

__version__ = "0.1.0"
