"""Brute-force reference implementations.

Everything here enumerates feature subsets explicitly and uses plain dense
linear algebra, so it is exponential in d and only meant for tests. Hard
ceilings on d keep an accidental large call from hanging the suite.
"""

import itertools
import math

import numpy as np
from scipy import integrate, stats

from .exceptions import OracleTooLargeError, QuadratureFailedError

MAX_D = 15
MAX_D_COVARIANCE = 10
MAX_D_GLOBAL = 8


def _check_d(d, limit):
    if d > limit:
        raise OracleTooLargeError(f"oracle limited to d <= {limit}, got {d}")


def subsets(d, include_empty=True):
    """All subsets of range(d) as sorted tuples, smallest first."""
    start = 0 if include_empty else 1
    for k in range(start, d + 1):
        yield from itertools.combinations(range(d), k)


def _sigma2(model, size):
    v = model.order_variances
    return float(v[size]) if size < len(v) else 0.0


def _feature_values(model, x, xp):
    x = np.asarray(x, dtype=np.float64).ravel()
    xp = np.atleast_2d(np.asarray(xp, dtype=np.float64))
    return np.array([[k(x[j], xp[t, j]) for t in range(xp.shape[0])] for j, k in enumerate(model.kernels)])


def naive_additive_kernel(x, xp, model):
    """sum over subsets S with |S| <= Q of sigma_|S|^2 prod_{j in S} kc_j."""
    d = model.d
    _check_d(d, MAX_D)
    z = _feature_values(model, x, xp)[:, 0]
    total = 0.0
    for S in subsets(d):
        w = _sigma2(model, len(S))
        if w == 0.0:
            continue
        prod = 1.0
        for j in S:
            prod *= z[j]
        total += w * prod
    return total


def dense_sigma(model):
    """Sigma = K_add(X, X) + (noise + jitter) I, built entry by entry."""
    n, d = model.n, model.d
    _check_d(d, MAX_D)
    grams = [k.cross(model.X[:, j], model.X[:, j]) for j, k in enumerate(model.kernels)]
    K = np.zeros((n, n))
    for S in subsets(d):
        w = _sigma2(model, len(S))
        if w == 0.0:
            continue
        P = np.ones((n, n))
        for j in S:
            P = P * grams[j]
        K += w * P
    return K + (model.noise + model.jitter) * np.eye(n)


def dense_alpha(model):
    return np.linalg.solve(dense_sigma(model), model.y)


def _component_vectors(model, x, masks):
    """Rows sigma_|S|^2 kc_S(x_S, X_S) and prior variances sigma_|S|^2 kc_S(x_S, x_S)."""
    d = model.d
    z = _feature_values(model, x, model.X)
    zbar = np.array([k(x[j], x[j]) for j, k in enumerate(model.kernels)])
    K = np.zeros((len(masks), model.n))
    prior = np.zeros(len(masks))
    for r, mask in enumerate(masks):
        S = [j for j in range(d) if mask >> j & 1]
        w = _sigma2(model, len(S))
        if not S or w == 0.0:
            continue
        vec = np.ones(model.n)
        pb = 1.0
        for j in S:
            vec = vec * z[j]
            pb *= zbar[j]
        K[r] = w * vec
        prior[r] = w * pb
    return K, prior


def moebius_posterior(model, x, S, S_prime):
    """Posterior mean of mu_x(S), Cov(mu_x(S), mu_x(S')), and mean of mu_x(S').

    The empty coalition is the constant component: its mean is xi_0 and its
    covariance is taken as zero.
    """
    _check_d(model.d, MAX_D)
    x = np.asarray(x, dtype=np.float64).ravel()
    masks = [sum(1 << j for j in set(S)), sum(1 << j for j in set(S_prime))]
    K, prior = _component_vectors(model, x, masks)
    Sigma = dense_sigma(model)
    alpha = np.linalg.solve(Sigma, model.y)
    means = K @ alpha
    if masks[0] == 0:
        means[0] = _sigma2(model, 0) * alpha.sum()
    if masks[1] == 0:
        means[1] = _sigma2(model, 0) * alpha.sum()
    if masks[0] == 0 or masks[1] == 0:
        cov = 0.0
    else:
        cov = float((prior[0] if masks[0] == masks[1] else 0.0) - K[0] @ np.linalg.solve(Sigma, K[1]))
    return float(means[0]), cov, float(means[1])


def value_function_mean(model, x, S):
    """Posterior mean of nu_x(S) as the sum of its Moebius means."""
    total = 0.0
    for T in subsets(len(S)):
        members = [sorted(S)[t] for t in T]
        total += moebius_posterior(model, x, members, members)[0]
    return total


def _zeta(arr, d, axis=0):
    """In place: arr[S] <- sum_{T subset of S} arr[T] along ``axis``."""
    arr = np.moveaxis(arr, axis, 0)
    idx = np.arange(1 << d)
    for j in range(d):
        bit = 1 << j
        has = idx[(idx & bit) != 0]
        arr[has] += arr[has ^ bit]
    return np.moveaxis(arr, 0, axis)


def _shapley_weights(d):
    return np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) for s in range(d)])


def naive_ssv(model, x, covariance=True):
    """Stochastic Shapley mean (and covariance) by two independent routes.

    Route A applies the permutation weights c_|S| to marginal contributions
    of the value function nu(S) = sum_{T subset S} mu(T). Route B sums
    Moebius coefficients divided by coalition size.
    """
    d = model.d
    _check_d(d, MAX_D_COVARIANCE if covariance else MAX_D)
    x = np.asarray(x, dtype=np.float64).ravel()
    N = 1 << d
    masks = list(range(N))
    sizes = np.array([bin(m).count("1") for m in masks])
    K, prior = _component_vectors(model, x, masks)
    Sigma = dense_sigma(model)
    alpha = np.linalg.solve(Sigma, model.y)
    mu_mean = K @ alpha
    mu_mean[0] = _sigma2(model, 0) * alpha.sum()

    # route B
    B = np.zeros((d, N))
    for i in range(d):
        has = (np.arange(N) >> i) & 1 == 1
        B[i, has] = 1.0 / sizes[has]
    mean_b = B @ mu_mean

    # route A
    c = _shapley_weights(d)
    C = np.zeros((d, N))
    for i in range(d):
        bit = 1 << i
        for S in range(N):
            if S & bit:
                continue
            w = c[sizes[S]]
            C[i, S | bit] += w
            C[i, S] -= w
    nu_mean = _zeta(mu_mean.copy(), d)
    mean_a = C @ nu_mean

    out = {"mean_a": mean_a, "mean_b": mean_b}
    disc = float(np.max(np.abs(mean_a - mean_b)))
    if covariance:
        mu_cov = np.diag(prior) - K @ np.linalg.solve(Sigma, K.T)
        mu_cov[0, :] = 0.0
        mu_cov[:, 0] = 0.0
        nu_cov = _zeta(_zeta(mu_cov.copy(), d, axis=0), d, axis=1)
        cov_a = C @ nu_cov @ C.T
        cov_b = B @ mu_cov @ B.T
        out["cov_a"] = cov_a
        out["cov_b"] = cov_b
        disc = max(disc, float(np.max(np.abs(cov_a - cov_b))))
    out["discrepancy"] = disc
    return out


def naive_ssv_mean(model, x, limit=MAX_D):
    """Shapley means by depth-first enumeration of all 2^d subsets.

    Memory stays O(n d); used as the exponential baseline in benchmarks.
    """
    d = model.d
    _check_d(d, limit)
    x = np.asarray(x, dtype=np.float64).ravel()
    z = model.kernel_vectors(x)
    alpha = model.alpha
    phi = np.zeros(d)
    v = model.order_variances

    def visit(start, prod, members):
        for j in range(start, d):
            nxt = prod * z[j]
            members.append(j)
            size = len(members)
            w = v[size] / size if size < len(v) else 0.0
            contrib = w * float(nxt @ alpha)
            for i in members:
                phi[i] += contrib
            visit(j + 1, nxt, members)
            members.pop()

    visit(0, np.ones(model.n), [])
    return phi


def naive_global_moebius(model, L):
    """m_G(S) = sigma_|S|^4 alpha^T L_S alpha for every nonempty S."""
    d = model.d
    _check_d(d, MAX_D_GLOBAL)
    Lv = np.asarray(getattr(L, "values", L))
    alpha = model.alpha
    out = {}
    for S in subsets(d, include_empty=False):
        w = _sigma2(model, len(S))
        LS = np.ones_like(Lv[0])
        for j in S:
            LS = LS * Lv[j]
        out[S] = w * w * float(alpha @ LS @ alpha)
    return out


def naive_global(model, L):
    d = model.d
    m = naive_global_moebius(model, L)
    phi = np.zeros(d)
    for S, val in m.items():
        for i in S:
            phi[i] += val / len(S)
    return phi


# -- quadrature ------------------------------------------------------------

def quadrature(f, a, b, tol=1e-10, limit=200):
    """Adaptive Gauss-Kronrod integral of ``f`` over [a, b].

    Raises :class:`QuadratureFailedError` (carrying the best estimate) when
    the requested absolute tolerance is not met.
    """
    res = integrate.quad(f, a, b, epsabs=tol, epsrel=0.0, limit=limit, full_output=1)
    val, err = res[0], res[1]
    if not err <= tol:
        msg = res[3] if len(res) > 3 else "tolerance not met"
        raise QuadratureFailedError(f"quadrature error {err:.2e} > {tol:.2e}: {msg}", val, err)
    return val


def gaussian_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def constrained_rbf_by_quadrature(lengthscale, a, b, lo=-8.0, hi=8.0, tol=1e-12):
    """The orthogonality-constrained RBF kernel under N(0, 1), by quadrature."""
    l2 = lengthscale * lengthscale

    def k(u, v):
        return math.exp(-0.5 * (u - v) ** 2 / l2)

    def m(u):
        return quadrature(lambda s: k(u, s) * gaussian_pdf(s), lo, hi, tol)

    Z = quadrature(lambda t: m(t) * gaussian_pdf(t), lo, hi, tol * 10)
    return k(a, b) - m(a) * m(b) / Z


def gauss_hermite(f, degree=120):
    """E[f(X)] for X ~ N(0, 1); ``f`` must accept an array of nodes."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(degree)
    vals = np.asarray(f(nodes))
    return np.tensordot(weights, vals, axes=(0, 0)) / math.sqrt(2.0 * math.pi)


def abs_dominance_probability(mu1, v1, mu2, v2):
    """P(|X| >= |Y|) for independent X ~ N(mu1, v1), Y ~ N(mu2, v2)."""
    s1, s2 = math.sqrt(v1), math.sqrt(v2)

    def tail_x(t):
        if s1 == 0.0:
            return 1.0 if abs(mu1) >= t else 0.0
        return stats.norm.sf((t - mu1) / s1) + stats.norm.cdf((-t - mu1) / s1)

    if s2 == 0.0:
        return tail_x(abs(mu2))

    def dens_abs_y(t):
        return (stats.norm.pdf((t - mu2) / s2) + stats.norm.pdf((t + mu2) / s2)) / s2

    hi = abs(mu2) + 12.0 * s2
    return quadrature(lambda t: dens_abs_y(t) * tail_x(t), 0.0, hi, tol=1e-9, limit=400)
