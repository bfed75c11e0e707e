"""FANOVA Gaussian-process regression with exact local and global Shapley values."""

__version__ = "0.1.0"

from ._accel import BACKEND
from .datasets import SyntheticSpec, average_rank, generate_synthetic, read_csv, write_csv
from .esp import esp_newton, esp_stable
from .explain_global import GlobalExplanation, explain_global, global_shapley, l_matrices
from .explain_local import (
    LocalExplanation,
    dominance_matrix,
    explain_local,
    ssv_covariance,
    ssv_mean_all,
    ssv_variance_all,
)
from .gp import (
    Dataset,
    FittedModel,
    Hyperparameters,
    condition,
    fit,
    fit_hyperparameters,
    load_model,
    log_marginal_likelihood,
    predict,
    predict_subset,
    save_model,
)
from .kernels import FeatureMeasure, additive_kernel_eval
