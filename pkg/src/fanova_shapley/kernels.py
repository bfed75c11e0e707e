"""Base kernels, orthogonality-constrained kernels and the additive kernel.

A constrained kernel removes the part of a base kernel that is visible
to the feature measure p::

    kc(a, b) = k(a, b) - m(a) m(b) / Z,
    m(a) = E_p[k(a, S)],  Z = E_p E_p[k(S, T)]

so that every function drawn from it integrates to zero under p. Two
measures are supported: the empirical measure of a background column, and
the standard normal, for which the squared-exponential kernel has closed
form integrals.
"""

from dataclasses import dataclass, field

import numpy as np

from .esp import esp_stable, weighted_esp
from .exceptions import DegenerateKernelError, InvalidInputError

NORMALIZER_FLOOR = 1e-12

EMPIRICAL = "empirical"
STANDARD_NORMAL = "standard-normal"


def squared_exponential(a, b, lengthscale):
    diff = np.subtract(a, b)
    return np.exp(-0.5 * (diff * diff) / (lengthscale * lengthscale))


@dataclass(frozen=True)
class BaseKernelConfig:
    lengthscales: np.ndarray
    kind: str = "squared-exponential"

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=np.float64))
        if self.kind != "squared-exponential":
            raise InvalidInputError(f"unsupported base kernel {self.kind!r}")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise InvalidInputError("lengthscales must be positive and finite")
        object.__setattr__(self, "lengthscales", ls)


@dataclass(frozen=True)
class FeatureMeasure:
    """Density used by the orthogonality constraint.

    For ``kind="empirical"`` the background is an (m, d) array whose
    column j is the sample for feature j. ``None`` means "use the training
    inputs" and is resolved at fit time.
    """

    kind: str = EMPIRICAL
    background: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (EMPIRICAL, STANDARD_NORMAL):
            raise InvalidInputError(f"unknown measure {self.kind!r}")
        if self.background is not None:
            bg = np.asarray(self.background, dtype=np.float64)
            if bg.ndim == 1:
                bg = bg[:, None]
            if bg.shape[0] < 1:
                raise InvalidInputError("empirical background must be nonempty")
            object.__setattr__(self, "background", bg)

    @classmethod
    def standard_normal(cls):
        return cls(STANDARD_NORMAL)

    @classmethod
    def empirical(cls, background=None):
        return cls(EMPIRICAL, background)


@dataclass(frozen=True)
class OrderVariances:
    """sigma_0^2 .. sigma_Q^2; interactions above order Q are switched off."""

    values: np.ndarray = field()

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 1 or len(v) < 1:
            raise InvalidInputError("order variances must be a nonempty vector")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InvalidInputError("order variances must be finite and >= 0")
        object.__setattr__(self, "values", v)

    @property
    def max_order(self):
        return len(self.values) - 1

    def padded(self, length):
        """Values extended with zeros (or truncated) to ``length`` entries."""
        out = np.zeros(length)
        k = min(length, len(self.values))
        out[:k] = self.values[:k]
        return out


def _order_values(ordvars):
    if isinstance(ordvars, OrderVariances):
        return ordvars.values
    return OrderVariances(ordvars).values


class ConstrainedKernel:
    """Squared-exponential kernel made zero-mean under a feature measure."""

    kind = None

    def __init__(self, lengthscale):
        lengthscale = float(lengthscale)
        if not np.isfinite(lengthscale) or lengthscale <= 0:
            raise InvalidInputError(f"lengthscale must be positive, got {lengthscale}")
        self.lengthscale = lengthscale

    def base(self, a, b):
        return squared_exponential(a, b, self.lengthscale)

    def embed(self, a):
        """m(a) = E_p[k(a, S)], element-wise over ``a``."""
        raise NotImplementedError

    @property
    def normalizer(self):
        """Z = E_p E_p[k(S, T)]."""
        raise NotImplementedError

    def __call__(self, a, b, a_embed=None, b_embed=None):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        ma = self.embed(a) if a_embed is None else a_embed
        mb = self.embed(b) if b_embed is None else b_embed
        return self.base(a, b) - (ma * mb) / self.normalizer

    def cross(self, a, b, a_embed=None, b_embed=None):
        """Matrix of kc(a_s, b_t) for 1-D ``a`` and ``b``."""
        a = np.asarray(a, dtype=np.float64).ravel()
        b = np.asarray(b, dtype=np.float64).ravel()
        ma = self.embed(a) if a_embed is None else a_embed
        mb = self.embed(b) if b_embed is None else b_embed
        return self.base(a[:, None], b[None, :]) - np.outer(ma, mb) / self.normalizer


class EmpiricalConstrainedKernel(ConstrainedKernel):
    kind = EMPIRICAL

    def __init__(self, lengthscale, background):
        super().__init__(lengthscale)
        bg = np.asarray(background, dtype=np.float64).ravel()
        if bg.size < 1:
            raise InvalidInputError("empirical background must be nonempty")
        self.background = bg
        z = float(self.base(bg[:, None], bg[None, :]).mean())
        if not z > NORMALIZER_FLOOR:
            raise DegenerateKernelError(f"kernel normalizer {z:.3e} is below {NORMALIZER_FLOOR}")
        self._normalizer = z

    @property
    def normalizer(self):
        return self._normalizer

    def embed(self, a):
        a = np.asarray(a, dtype=np.float64)
        flat = a.ravel()
        out = np.empty(flat.shape)
        # chunked to bound the (len(a), m) temporary
        step = max(1, 2_000_000 // self.background.size)
        for start in range(0, flat.size, step):
            block = flat[start:start + step]
            out[start:start + step] = self.base(block[:, None], self.background[None, :]).mean(axis=1)
        return out.reshape(a.shape)


class GaussianConstrainedKernel(ConstrainedKernel):
    """Closed form for a standard normal measure.

    With k(a, b) = exp(-(a - b)^2 / (2 l^2)) and S, T ~ N(0, 1):
    m(a) = l / sqrt(l^2 + 1) * exp(-a^2 / (2 (l^2 + 1))) and
    Z = l / sqrt(l^2 + 2).
    """

    kind = STANDARD_NORMAL

    def __init__(self, lengthscale):
        super().__init__(lengthscale)
        l2 = self.lengthscale ** 2
        self._embed_scale = self.lengthscale / np.sqrt(l2 + 1.0)
        self._embed_var = l2 + 1.0
        self._normalizer = self.lengthscale / np.sqrt(l2 + 2.0)

    @property
    def normalizer(self):
        return self._normalizer

    def embed(self, a):
        a = np.asarray(a, dtype=np.float64)
        return self._embed_scale * np.exp(-0.5 * a * a / self._embed_var)


def constrain_empirical(lengthscale, background):
    return EmpiricalConstrainedKernel(lengthscale, background)


def constrain_gaussian_rbf(lengthscale):
    return GaussianConstrainedKernel(lengthscale)


def make_kernels(lengthscales, measure, X=None):
    """One constrained kernel per feature.

    An empirical measure without an explicit background uses the columns of
    ``X``.
    """
    lengthscales = np.atleast_1d(np.asarray(lengthscales, dtype=np.float64))
    if measure.kind == STANDARD_NORMAL:
        return [GaussianConstrainedKernel(ls) for ls in lengthscales]
    bg = measure.background if measure.background is not None else X
    if bg is None:
        raise InvalidInputError("empirical measure needs a background sample")
    bg = np.asarray(bg, dtype=np.float64)
    if bg.ndim == 1:
        bg = bg[:, None]
    if bg.shape[1] != len(lengthscales):
        raise InvalidInputError(
            f"background has {bg.shape[1]} columns but {len(lengthscales)} lengthscales were given"
        )
    return [EmpiricalConstrainedKernel(ls, bg[:, j]) for j, ls in enumerate(lengthscales)]


class KernelStack:
    """All per-feature kernels evaluated at once for a single query point.

    Falls back to a loop over features when the kernels do not share a
    measure layout.
    """

    def __init__(self, kernels):
        self.kernels = list(kernels)
        self.lengthscales = np.array([k.lengthscale for k in self.kernels])
        self.normalizers = np.array([k.normalizer for k in self.kernels])
        self.gaussian = all(isinstance(k, GaussianConstrainedKernel) for k in self.kernels)
        self.background = None
        if (not self.gaussian
                and all(isinstance(k, EmpiricalConstrainedKernel) for k in self.kernels)
                and len({k.background.size for k in self.kernels}) == 1):
            self.background = np.column_stack([k.background for k in self.kernels])

    def embed(self, x):
        """m_j(x_j) for every feature j."""
        ls = self.lengthscales
        if self.gaussian:
            v = ls * ls + 1.0
            return ls / np.sqrt(v) * np.exp(-0.5 * x * x / v)
        if self.background is not None:
            diff = (self.background - x) / ls
            return np.exp(-0.5 * diff * diff).mean(axis=0)
        return np.array([float(k.embed(x[j])) for j, k in enumerate(self.kernels)])

    def vectors(self, x, Xp, Xp_embed, x_embed=None):
        """(d, N) array kc_j(x_j, Xp[:, j])."""
        mx = self.embed(x) if x_embed is None else x_embed
        diff = (Xp - x) / self.lengthscales
        base = np.exp(-0.5 * diff * diff).T
        return base - (mx / self.normalizers)[:, None] * Xp_embed

    def diagonal(self, x, x_embed=None):
        """kc_j(x_j, x_j) for every feature j."""
        mx = self.embed(x) if x_embed is None else x_embed
        return 1.0 - mx * mx / self.normalizers


# -- additive kernel ---------------------------------------------------------

def feature_kernel_stack(x, Xp, kernels, x_embed=None, Xp_embed=None):
    """(d, N) array of kc_j(x_j, Xp[t, j]) for a single point ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    Xp = np.atleast_2d(np.asarray(Xp, dtype=np.float64))
    d = len(kernels)
    if x.shape[0] != d or Xp.shape[1] != d:
        raise InvalidInputError(f"expected {d} features, got point {x.shape[0]} and batch {Xp.shape[1]}")
    out = np.empty((d, Xp.shape[0]))
    for j, kern in enumerate(kernels):
        ma = None if x_embed is None else x_embed[j]
        mb = None if Xp_embed is None else Xp_embed[j]
        out[j] = kern(x[j], Xp[:, j], ma, mb)
    return out


def additive_kernel_eval(x, Xp, kernels, ordvars):
    """sigma_0^2 + sum_{q=1..Q} sigma_q^2 e_q(kc_1, ..., kc_d).

    ``Xp`` may be a single point (scalar result) or an (N, d) batch.
    """
    v = _order_values(ordvars)
    Xp_arr = np.asarray(Xp, dtype=np.float64)
    single = Xp_arr.ndim == 1
    if v.shape[0] - 1 > len(kernels):
        raise InvalidInputError(f"max order {v.shape[0] - 1} exceeds d = {len(kernels)}")
    Z = feature_kernel_stack(x, np.atleast_2d(Xp_arr), kernels)
    out = weighted_esp(Z, v)
    return float(out[0]) if single else out


def feature_gram_stack(X, kernels, Xp=None):
    """(d, n, N) per-feature constrained Gram matrices."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Xp = X if Xp is None else np.atleast_2d(np.asarray(Xp, dtype=np.float64))
    return np.stack([k.cross(X[:, j], Xp[:, j]) for j, k in enumerate(kernels)])


def esp_gram_tables(K_stack, max_order):
    """ESP tables E_0..E_Q over a (d, n, N) stack of Gram matrices."""
    return np.asarray(esp_stable(K_stack, max_order))


def additive_gram(X, kernels, ordvars, Xp=None):
    v = _order_values(ordvars)
    K_stack = feature_gram_stack(X, kernels, Xp)
    d, n, N = K_stack.shape
    return weighted_esp(K_stack.reshape(d, n * N), v).reshape(n, N)
