"""Differentially private global classifiers from multiparty ensembles.

Local parties train arbitrary classifiers on their private shards; their
knowledge is transferred onto unlabeled auxiliary data (hard majority
votes or soft vote fractions), a regularized ERM is solved on the
transferred labels, and the minimizer is released with noise calibrated
to its L2 sensitivity.
"""
from .data import (DataError, Dataset, PartitionPlan, SyntheticSpec, add_bias,
                   apply_scale, default_means, load, normalize, partition,
                   posterior, synthesize, train_test_split)
from .ensemble import (ClassifierHandle, Ensemble, EnsembleError,
                       SoftLabeledSet, constant_handle, linear_handle,
                       majority_vote, train_locals, transfer, vote_fraction)
from .models import (ConvergenceError, LinearModel, LossSpec, ModelError,
                     SolveReport, accuracy, erm_minimize, gradient,
                     load_model, loss_value_and_deriv, predict, risk,
                     save_model, weighted_erm_minimize)
from .pipelines import (BoundParams, MethodSpec, PipelineError, evaluate,
                        run_avg, run_batch, run_indiv, run_soft, run_vote,
                        theorem3_bound)
from .privacy import (NoiseSpec, PrivacyError, SensitivitySpec,
                      gamma_tail_bound, noise_spec_for, perturb, sample_noise,
                      sensitivity)

__version__ = "0.1.0"
