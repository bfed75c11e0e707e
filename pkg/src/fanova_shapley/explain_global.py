"""Variance-based global Shapley attribution for a fitted FANOVA GP.

The value of a coalition S is the variance (under the feature measure) of
the posterior-mean components inside S. Its Moebius coefficients are
sigma_|S|^4 alpha^T L_S alpha with L_S the Hadamard product of per-feature
second-moment matrices

    L_i = E_p[kc_i(X_i, X[:, i]) kc_i(X_i, X[:, i])^T],

and the Shapley value of feature i is alpha^T M_i alpha with
M_i = L_i * sum_r sigma_{r+1}^4 / (r + 1) e_r({L_j : j != i}).
"""

import math
from dataclasses import dataclass

import numpy as np

from .esp import loo_weighted_esp
from .exceptions import InvalidInputError
from .gp import predict_mean_batch
from .kernels import EMPIRICAL, STANDARD_NORMAL

# entries of the (d, rows, n) work array per block
_BLOCK_ENTRIES = 1 << 24


@dataclass
class LMatrices:
    values: np.ndarray  # (d, n, n)

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return self.values.shape[0]


@dataclass
class GlobalExplanation:
    attribution: np.ndarray
    total: float
    shares: np.ndarray
    mc_check: dict | None = None

    def to_dict(self):
        return {
            "attribution": self.attribution.tolist(),
            "shares": self.shares.tolist(),
            "total": self.total,
            "mc_check": self.mc_check,
        }


def l_matrices_empirical(model, background=None):
    """L_i averaged over background points.

    ``background`` is an (m, d) sample; by default the sample that defined
    the constrained kernels is used.
    """
    if background is None:
        if model.measure.kind != EMPIRICAL:
            raise InvalidInputError("a standard-normal model needs an explicit background sample")
        background = model.measure.background
    bg = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if bg.shape[1] != model.d:
        raise InvalidInputError(f"background has {bg.shape[1]} columns, model has {model.d} features")
    m = bg.shape[0]
    L = np.empty((model.d, model.n, model.n))
    for j, kern in enumerate(model.kernels):
        Kb = kern.cross(bg[:, j], model.X[:, j], b_embed=model.train_embed[j])
        L[j] = (Kb.T @ Kb) / m
        L[j] = 0.5 * (L[j] + L[j].T)
    return LMatrices(L)


def _gauss_moment(A, B, C):
    """E[exp(-A X^2 + B X + C)] for X ~ N(0, 1)."""
    a = A + 0.5
    return np.exp(B * B / (4.0 * a) + C) / np.sqrt(2.0 * a)


def l_matrices_gaussian(model):
    """Closed-form L_i for the standard normal measure."""
    if model.measure.kind != STANDARD_NORMAL:
        raise InvalidInputError("closed-form L matrices need the standard-normal measure")
    L = np.empty((model.d, model.n, model.n))
    for j, kern in enumerate(model.kernels):
        lam2 = kern.lengthscale ** 2
        s2 = lam2 + 1.0
        c1 = kern.lengthscale / math.sqrt(s2)
        Z = kern.normalizer
        a = model.X[:, j]
        m = model.train_embed[j]
        # E[k(X, a) k(X, b)]
        kk = _gauss_moment(1.0 / lam2, (a[:, None] + a[None, :]) / lam2,
                           -(a[:, None] ** 2 + a[None, :] ** 2) / (2.0 * lam2))
        # E[k(X, a) m(X)]
        km = c1 * _gauss_moment(0.5 / lam2 + 0.5 / s2, a / lam2, -(a * a) / (2.0 * lam2))
        # E[m(X)^2]
        mm = c1 * c1 * _gauss_moment(1.0 / s2, 0.0, 0.0)
        Lj = kk - (np.outer(km, m) + np.outer(m, km)) / Z + np.outer(m, m) * mm / (Z * Z)
        L[j] = 0.5 * (Lj + Lj.T)
    return LMatrices(L)


def l_matrices(model, background=None):
    if background is None and model.measure.kind == STANDARD_NORMAL:
        return l_matrices_gaussian(model)
    return l_matrices_empirical(model, background)


def global_shapley(model, L):
    """phi_i = alpha^T M_i alpha, streamed over row blocks of the L matrices."""
    Lv = L.values if isinstance(L, LMatrices) else np.asarray(L, dtype=np.float64)
    d, n, _ = Lv.shape
    if d != model.d or n != model.n:
        raise InvalidInputError(f"L matrices have shape {Lv.shape}, model has d={model.d}, n={model.n}")
    Q = model.max_order
    if Q == 0:
        return np.zeros(d)
    r = np.arange(1, Q + 1)
    weights = model.order_variances[1:Q + 1] ** 2 / r
    alpha = model.alpha
    rows = max(1, _BLOCK_ENTRIES // max(d * n, 1))
    phi = np.zeros(d)
    for start in range(0, n, rows):
        block = Lv[:, start:start + rows, :]
        M = block * loo_weighted_esp(block, weights)
        phi += np.einsum("a,dab,b->d", alpha[start:start + rows], M, alpha)
    return phi


def _sample_measure(model, num, rng):
    if model.measure.kind == STANDARD_NORMAL:
        return rng.standard_normal((num, model.d))
    bg = model.measure.background
    idx = rng.integers(0, bg.shape[0], size=(num, model.d))
    return bg[idx, np.arange(model.d)[None, :]]


def monte_carlo_total_variance(model, num_samples=100_000, seed=0):
    """Variance of xi(X) - xi_0 for X drawn from the product feature measure.

    Returns the sample variance and its standard error.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    Xs = _sample_measure(model, num_samples, rng)
    f = predict_mean_batch(model, Xs) - model.constant_mean
    c = f - f.mean()
    var = float(c @ c / (num_samples - 1))
    m4 = float(np.mean(c ** 4))
    stderr = math.sqrt(max(m4 - var * var, 0.0) / num_samples)
    return {"estimate": var, "stderr": stderr}


def explain_global(model, background=None, mc_samples=None, seed=0):
    L = l_matrices(model, background)
    phi = global_shapley(model, L)
    total = float(phi.sum())
    shares = phi / total if total > 0 else np.zeros_like(phi)
    mc = monte_carlo_total_variance(model, mc_samples, seed) if mc_samples else None
    return GlobalExplanation(attribution=phi, total=total, shares=shares, mc_check=mc)
