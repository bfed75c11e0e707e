"""Exact stochastic Shapley values for a single query point.

Under the FANOVA GP posterior the attribution vector phi(x) is jointly
Gaussian. Its mean and covariance are written through the intermediate
vectors

    l_i = z_i * sum_{q=0}^{Q-1} w_{q+1} e_q({z_j : j != i}),   w_s = sigma_s^2 / s

where z_j = kc_j(x_j, X_j). The leave-one-out ESPs cost O(n d^2 Q).
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .esp import loo_weighted_esp, pair_loo_weighted_esp
from .exceptions import ExplanationDegenerateError
from .gp import predict

log = logging.getLogger(__name__)

EFFICIENCY_WARN = 1e-6
CLAMP_TOLERANCE = 1e-8


@dataclass
class LocalWorkspace:
    z: np.ndarray          # (d, n) kernel vectors
    zbar: np.ndarray       # (d,) self-kernels
    ell: np.ndarray        # (d, n) intermediate vectors
    weights: np.ndarray    # w_s = sigma_s^2 / s for s = 1..Q


@dataclass
class LocalExplanation:
    query: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray
    posterior_mean: float
    constant: float
    max_order: int

    @property
    def variance(self):
        return np.diag(self.covariance).copy()

    @property
    def efficiency_residual(self):
        return float(abs(self.mean.sum() - (self.posterior_mean - self.constant)))

    def to_dict(self, dominance=None):
        return {
            "query": self.query.tolist(),
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "posterior_mean": self.posterior_mean,
            "constant": self.constant,
            "efficiency_residual": self.efficiency_residual,
            "dominance": None if dominance is None else np.asarray(dominance).tolist(),
        }


def _shapley_weights(model):
    Q = model.max_order
    s = np.arange(1, Q + 1)
    return model.order_variances[1:Q + 1] / s


def workspace(model, x):
    z, zbar = model.point_kernels(x)
    w = _shapley_weights(model)
    if len(w) == 0:
        ell = np.zeros_like(z)
    else:
        ell = z * loo_weighted_esp(z, w)
    return LocalWorkspace(z, zbar, ell, w)


def ssv_mean_all(model, x, ws=None):
    ws = workspace(model, x) if ws is None else ws
    return ws.ell @ model.alpha


def _prior_diagonal(model, zbar):
    Q = model.max_order
    if Q == 0:
        return np.zeros_like(zbar)
    q = np.arange(1, Q + 1)
    w = model.order_variances[1:Q + 1] / (q * q)
    return zbar * loo_weighted_esp(zbar[:, None], w)[:, 0]


def _clamp(var, scale):
    neg = var < 0
    if np.any(neg):
        worst = float(var.min())
        if worst < -CLAMP_TOLERANCE * max(float(np.max(scale)), 1.0):
            log.warning("attribution variance %.3e clamped to 0", worst)
        else:
            log.debug("attribution variance %.3e clamped to 0", worst)
        var = np.where(neg, 0.0, var)
    return var


def ssv_variance_all(model, x, ws=None):
    """Per-feature posterior variance of the stochastic Shapley values."""
    ws = workspace(model, x) if ws is None else ws
    prior = _prior_diagonal(model, ws.zbar)
    W = model.solve_lower(ws.ell.T)
    data_term = np.einsum("nd,nd->d", W, W)
    return _clamp(prior - data_term, np.abs(prior))


def ssv_covariance(model, x, ws=None):
    """Full d x d covariance of the stochastic Shapley values.

    Off-diagonal prior terms use ESPs over the self-kernels with both
    features removed; the diagonal is the per-feature variance.
    """
    ws = workspace(model, x) if ws is None else ws
    d, Q = model.d, model.max_order
    W = model.solve_lower(ws.ell.T)
    data_term = W.T @ W
    prior = np.zeros((d, d))
    if Q >= 2:
        q = np.arange(2, Q + 1)
        w2 = model.order_variances[2:Q + 1] / (q * q)
        prior = np.outer(ws.zbar, ws.zbar) * pair_loo_weighted_esp(ws.zbar, w2)
    K = prior - data_term
    K = 0.5 * (K + K.T)
    diag_prior = _prior_diagonal(model, ws.zbar)
    np.fill_diagonal(K, _clamp(diag_prior - np.diag(data_term), np.abs(diag_prior)))
    return K


def explain_local(model, x):
    x = model.check_point(x)
    ws = workspace(model, x)
    mean = ssv_mean_all(model, x, ws)
    cov = ssv_covariance(model, x, ws)
    post_mean, _ = predict(model, x)
    expl = LocalExplanation(
        query=x.copy(),
        mean=mean,
        covariance=cov,
        posterior_mean=post_mean,
        constant=model.constant_mean,
        max_order=model.max_order,
    )
    resid = expl.efficiency_residual
    if resid > EFFICIENCY_WARN:
        warnings.warn(f"efficiency residual {resid:.3e} exceeds {EFFICIENCY_WARN}", RuntimeWarning)
    return expl


def dominance_matrix(expl, num_samples=1000, seed=0):
    """Monte-Carlo estimate of P(|phi_i| >= |phi_j|) for every pair.

    Samples come from a Philox (counter-based) generator; the covariance is
    square-rooted through an eigendecomposition with negative eigenvalues
    clipped at zero. Ties count towards both (i, j) and (j, i).
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    cov = np.asarray(expl.covariance, dtype=np.float64)
    if not np.all(np.isfinite(cov)):
        raise ExplanationDegenerateError("covariance has non-finite entries")
    try:
        evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    except np.linalg.LinAlgError as exc:
        raise ExplanationDegenerateError(f"covariance eigendecomposition failed: {exc}") from exc
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    rng = np.random.Generator(np.random.Philox(seed))
    eps = rng.standard_normal((num_samples, len(expl.mean)))
    mags = np.abs(expl.mean + eps @ root.T)
    wins = (mags[:, :, None] >= mags[:, None, :]).mean(axis=0)
    np.fill_diagonal(wins, 1.0)
    return wins
