"""Exact FANOVA Gaussian-process regression.

The prior kernel is the additive constrained kernel; the posterior is the
usual closed form with a Cholesky factor of Sigma = K_add + noise * I.
Hyperparameters are tuned by a deterministic coordinate search on the log
marginal likelihood.
"""

import hashlib
import io
import json
import logging
import math
import zipfile
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .esp import esp_stable, weighted_esp
from .exceptions import (
    IllConditionedError,
    InvalidInputError,
    ModelFormatError,
    OptimizationFailedError,
)
from .kernels import (
    EMPIRICAL,
    STANDARD_NORMAL,
    FeatureMeasure,
    OrderVariances,
    KernelStack,
    make_kernels,
)

log = logging.getLogger(__name__)

FORMAT_TAG = "fanova-gp/v1"
DEFAULT_MAX_ORDER = 5
JITTER_RELATIVE = 1e-8
JITTER_ESCALATIONS = 3

LOG_LENGTHSCALE_BOUNDS = (math.log(0.02), math.log(200.0))
LOG_ORDER_VARIANCE_BOUNDS = (-16.0, 4.0)
LOG_NOISE_BOUNDS = (math.log(1e-5), math.log(10.0))
MAX_HALF_WIDTH = 8.0


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list = None
    target_name: str = "y"
    dropped_rows: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if X.ndim != 2 or X.shape[1] < 1:
            raise InvalidInputError("X must be an (n, d) array with d >= 1")
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[0] < 1:
            raise InvalidInputError("dataset is empty")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset contains non-finite values")
        self.X, self.y = X, y
        if self.feature_names is None:
            self.feature_names = [f"x{j + 1}" for j in range(X.shape[1])]
        self.feature_names = list(self.feature_names)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class Hyperparameters:
    log_lengthscales: np.ndarray
    log_order_variances: np.ndarray
    log_noise: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.log_lengthscales, dtype=np.float64)).copy()
        ov = np.atleast_1d(np.asarray(self.log_order_variances, dtype=np.float64)).copy()
        noise = float(self.log_noise)
        if not (np.all(np.isfinite(ls)) and np.all(np.isfinite(ov)) and math.isfinite(noise)):
            raise InvalidInputError("hyperparameters must be finite")
        if len(ov) < 1:
            raise InvalidInputError("need at least sigma_0^2")
        object.__setattr__(self, "log_lengthscales", ls)
        object.__setattr__(self, "log_order_variances", ov)
        object.__setattr__(self, "log_noise", noise)

    @classmethod
    def default(cls, d, max_order=None, noise=0.1, lengthscale=1.0):
        Q = min(d, DEFAULT_MAX_ORDER) if max_order is None else int(max_order)
        if not 1 <= Q <= d:
            raise InvalidInputError(f"max order must lie in [1, {d}], got {Q}")
        if not (noise > 0 and lengthscale > 0):
            raise InvalidInputError("noise and lengthscale must be positive")
        return cls(
            np.full(d, math.log(lengthscale)),
            np.full(Q + 1, math.log(1.0 / (Q + 1))),
            math.log(noise),
        )

    @classmethod
    def from_values(cls, lengthscales, order_variances, noise):
        return cls(np.log(lengthscales), np.log(order_variances), math.log(noise))

    @property
    def lengthscales(self):
        return np.exp(self.log_lengthscales)

    @property
    def order_variances(self):
        return np.exp(self.log_order_variances)

    @property
    def noise(self):
        return math.exp(self.log_noise)

    @property
    def max_order(self):
        return len(self.log_order_variances) - 1

    def vector(self):
        return np.concatenate([self.log_lengthscales, self.log_order_variances, [self.log_noise]])

    @classmethod
    def from_vector(cls, theta, d):
        theta = np.asarray(theta, dtype=np.float64)
        return cls(theta[:d], theta[d:-1], theta[-1])


@dataclass(frozen=True)
class TargetScaler:
    mean: float = 0.0
    scale: float = 1.0

    @classmethod
    def fit(cls, y):
        y = np.asarray(y, dtype=np.float64)
        scale = float(np.std(y))
        return cls(float(np.mean(y)), scale if scale > 0 else 1.0)

    def transform(self, y):
        return (np.asarray(y, dtype=np.float64) - self.mean) / self.scale

    def inverse(self, y):
        return np.asarray(y, dtype=np.float64) * self.scale + self.mean


@dataclass
class FittedModel:
    X: np.ndarray
    y: np.ndarray                  # targets the posterior was fitted to
    kernels: list
    order_variances: np.ndarray    # sigma_0^2 .. sigma_Q^2
    noise: float
    jitter: float
    chol: np.ndarray               # lower Cholesky factor of Sigma
    alpha: np.ndarray
    constant_mean: float
    measure: FeatureMeasure
    hyperparameters: Hyperparameters | None
    scaler: TargetScaler = field(default_factory=TargetScaler)
    feature_names: list = None
    target_name: str = "y"
    dataset_digest: str = ""
    train_embed: np.ndarray = None  # m_j(X[:, j]), shape (d, n)
    stack: KernelStack = field(init=False, repr=False)

    def __post_init__(self):
        self.stack = KernelStack(self.kernels)
        # a fixed memory layout keeps archived and in-memory models bitwise equal
        self.chol = np.ascontiguousarray(self.chol)
        if self.train_embed is None:
            self.train_embed = np.stack([k.embed(self.X[:, j]) for j, k in enumerate(self.kernels)])
        if self.feature_names is None:
            self.feature_names = [f"x{j + 1}" for j in range(self.d)]

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def max_order(self):
        return len(self.order_variances) - 1

    @property
    def lengthscales(self):
        return np.array([k.lengthscale for k in self.kernels])

    def check_point(self, x):
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.d:
            raise InvalidInputError(f"query has {x.shape[0]} features, model expects {self.d}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("query point has non-finite coordinates")
        return x

    def kernel_vectors(self, x):
        """(d, n) array z_j = kc_j(x_j, X[:, j])."""
        x = self.check_point(x)
        return self.stack.vectors(x, self.X, self.train_embed)

    def self_kernels(self, x):
        """(d,) array zbar_j = kc_j(x_j, x_j)."""
        x = self.check_point(x)
        return self.stack.diagonal(x)

    def point_kernels(self, x):
        """``(kernel_vectors(x), self_kernels(x))`` sharing one embedding pass."""
        x = self.check_point(x)
        mx = self.stack.embed(x)
        return self.stack.vectors(x, self.X, self.train_embed, mx), self.stack.diagonal(x, mx)

    def solve_lower(self, B):
        return linalg.solve_triangular(self.chol, B, lower=True, check_finite=False)

    def solve(self, b):
        return linalg.cho_solve((self.chol, True), b, check_finite=False)

    def sigma(self):
        """Sigma rebuilt from its factor (for checks)."""
        return self.chol @ self.chol.T


# -- factorization -------------------------------------------------------

def _factorize(K, noise):
    n = K.shape[0]
    base = JITTER_RELATIVE * float(np.mean(np.diag(K))) if n else 0.0
    base = max(base, 0.0)
    jitter = base
    for attempt in range(JITTER_ESCALATIONS + 1):
        S = K + (noise + jitter) * np.eye(n)
        try:
            L = linalg.cholesky(S, lower=True, check_finite=False)
            if np.all(np.isfinite(L)):
                return L, jitter
        except linalg.LinAlgError:
            pass
        jitter = (base if base > 0 else 1e-10) * 10.0 ** (attempt + 1)
    raise IllConditionedError(f"Cholesky failed after {JITTER_ESCALATIONS} jitter escalations")


def _lml_from_factor(L, y):
    a = linalg.cho_solve((L, True), y, check_finite=False)
    n = len(y)
    return float(-0.5 * y @ a - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi))


def _resolve_measure(measure, X, background_size=None, seed=0):
    if measure is None:
        measure = FeatureMeasure.empirical()
    if measure.kind == EMPIRICAL and measure.background is None:
        bg = X
        if background_size is not None and background_size < X.shape[0]:
            rng = np.random.default_rng(seed)
            idx = np.sort(rng.choice(X.shape[0], size=background_size, replace=False))
            bg = X[idx]
        measure = FeatureMeasure.empirical(np.array(bg, copy=True))
    if measure.kind == EMPIRICAL and measure.background.shape[1] != X.shape[1]:
        raise InvalidInputError("background and training data have different widths")
    return measure


def fit(data, hp, measure=None, standardize=False, background_size=None, seed=0):
    """Condition the FANOVA GP on ``data`` with fixed hyperparameters."""
    model = condition(data, hp.lengthscales, hp.order_variances, hp.noise, measure,
                      standardize, background_size, seed)
    model.hyperparameters = hp
    return model


def condition(data, lengthscales, order_variances, noise, measure=None, standardize=False,
              background_size=None, seed=0):
    """Like :func:`fit` but from raw values; order variances may be zero."""
    if not isinstance(data, Dataset):
        data = Dataset(*data)
    d = data.d
    lengthscales = np.atleast_1d(np.asarray(lengthscales, dtype=np.float64))
    if len(lengthscales) != d:
        raise InvalidInputError(f"{len(lengthscales)} lengthscales for {d} features")
    ordvars = OrderVariances(order_variances).values
    Q = len(ordvars) - 1
    if Q > d:
        raise InvalidInputError(f"max order {Q} exceeds d = {d}")
    noise = float(noise)
    if not noise > 0:
        raise InvalidInputError("noise variance must be positive")
    measure = _resolve_measure(measure, data.X, background_size, seed)
    scaler = TargetScaler.fit(data.y) if standardize else TargetScaler()
    y = scaler.transform(data.y)

    kernels = make_kernels(lengthscales, measure, data.X)
    train_embed = np.stack([k.embed(data.X[:, j]) for j, k in enumerate(kernels)])
    K = _gram(data.X, kernels, ordvars, train_embed)
    L, jitter = _factorize(K, noise)
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    hp = None
    if np.all(ordvars > 0):
        hp = Hyperparameters.from_values(lengthscales, ordvars, noise)
    return FittedModel(
        X=data.X,
        y=y,
        kernels=kernels,
        order_variances=ordvars,
        noise=noise,
        jitter=jitter,
        chol=L,
        alpha=alpha,
        constant_mean=float(ordvars[0] * alpha.sum()),
        measure=measure,
        hyperparameters=hp,
        scaler=scaler,
        feature_names=list(data.feature_names),
        target_name=data.target_name,
        dataset_digest=data.digest(),
        train_embed=train_embed,
    )


def _gram(X, kernels, ordvars, embed):
    n, d = X.shape
    stack = np.empty((d, n, n))
    for j, k in enumerate(kernels):
        stack[j] = k.cross(X[:, j], X[:, j], embed[j], embed[j])
    return weighted_esp(stack.reshape(d, n * n), ordvars).reshape(n, n)


def log_marginal_likelihood(model):
    """-1/2 y^T alpha - 1/2 log det Sigma - n/2 log 2 pi."""
    n = model.n
    return float(
        -0.5 * model.y @ model.alpha
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * n * math.log(2 * math.pi)
    )


def lml_noise_gradient(model):
    """d LML / d noise variance = 1/2 (alpha^T alpha - tr Sigma^-1)."""
    Linv = linalg.solve_triangular(model.chol, np.eye(model.n), lower=True, check_finite=False)
    return float(0.5 * (model.alpha @ model.alpha - np.sum(Linv * Linv)))


# -- prediction ------------------------------------------------------------

def predict(model, x):
    """Posterior mean and variance of the latent function at ``x``."""
    Z, zbar = model.point_kernels(x)
    kv = weighted_esp(Z, model.order_variances)
    kxx = float(weighted_esp(zbar[:, None], model.order_variances)[0])
    mean = float(kv @ model.alpha)
    w = model.solve_lower(kv)
    var = kxx - float(w @ w)
    if var < 0:
        if var < -1e-8 * max(abs(kxx), 1e-300):
            log.warning("predictive variance %.3e clamped to 0", var)
        var = 0.0
    return mean, var


def predict_mean_batch(model, Xq, chunk=2048):
    """Posterior means at every row of ``Xq``."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
    if Xq.shape[1] != model.d:
        raise InvalidInputError(f"queries have {Xq.shape[1]} features, model expects {model.d}")
    out = np.empty(Xq.shape[0])
    n, d = model.n, model.d
    step = max(1, chunk * 64 // max(n, 1))
    for start in range(0, Xq.shape[0], step):
        block = Xq[start:start + step]
        stack = np.empty((d, block.shape[0], n))
        for j, k in enumerate(model.kernels):
            stack[j] = k.cross(block[:, j], model.X[:, j], b_embed=model.train_embed[j])
        kv = weighted_esp(stack.reshape(d, -1), model.order_variances).reshape(block.shape[0], n)
        out[start:start + step] = kv @ model.alpha
    return out


def predict_subset(model, x, S):
    """Posterior mean using only the interactions inside feature subset ``S``."""
    S = sorted({int(j) for j in S})
    if any(j < 0 or j >= model.d for j in S):
        raise InvalidInputError(f"subset {S} has indices outside [0, {model.d})")
    if not S:
        return model.constant_mean
    Z = model.kernel_vectors(x)[S]
    r = min(model.max_order, len(S))
    kv = weighted_esp(Z, model.order_variances[: r + 1])
    return float(kv @ model.alpha)


# -- hyperparameter search -------------------------------------------------

class _LmlSearch:
    """Caches per-feature Gram matrices and ESP tables between probes."""

    def __init__(self, X, y, measure, Q):
        self.X, self.y, self.measure, self.Q = X, y, measure, Q
        self.n, self.d = X.shape
        self.stack = None
        self.tables = None
        self.theta = None

    def _feature_gram(self, j, lengthscale):
        kern = make_kernels([lengthscale], self._measure_for(j), self.X[:, [j]])[0]
        return kern.cross(self.X[:, j], self.X[:, j])

    def _measure_for(self, j):
        if self.measure.kind == STANDARD_NORMAL:
            return self.measure
        return FeatureMeasure.empirical(self.measure.background[:, [j]])

    def _lml(self, tables, theta):
        ov = np.exp(theta[self.d:-1])
        K = np.tensordot(ov, tables[: len(ov)], axes=1)
        try:
            L, _ = _factorize(K, math.exp(theta[-1]))
        except IllConditionedError:
            return -math.inf
        val = _lml_from_factor(L, self.y)
        return val if math.isfinite(val) else -math.inf

    def reset(self, theta):
        """Full evaluation at ``theta``; becomes the current state."""
        ls = np.exp(theta[: self.d])
        try:
            stack = np.stack([self._feature_gram(j, ls[j]) for j in range(self.d)])
        except Exception as exc:  # degenerate kernels count as failed candidates
            log.debug("candidate rejected: %s", exc)
            return -math.inf
        tables = np.asarray(esp_stable(stack, self.Q))
        val = self._lml(tables, theta)
        self.stack, self.tables, self.theta = stack, tables, np.array(theta)
        return val

    def coordinate(self, k):
        """Return f(t) evaluating the LML with coordinate ``k`` set to t."""
        if k < self.d:
            others = np.delete(self.stack, k, axis=0)
            base = np.asarray(esp_stable(others, self.Q))

            def f(t):
                theta = self.theta.copy()
                theta[k] = t
                try:
                    Kj = self._feature_gram(k, math.exp(t))
                except Exception:
                    return -math.inf, None
                tables = base.copy()
                tables[1:] += Kj[None] * base[:-1]
                return self._lml(tables, theta), (Kj, tables)

            return f

        def g(t):
            theta = self.theta.copy()
            theta[k] = t
            return self._lml(self.tables, theta), None

        return g

    def accept(self, k, t, payload):
        self.theta[k] = t
        if payload is not None:
            Kj, tables = payload
            self.stack[k] = Kj
            self.tables = tables


def _bounds(d, Q):
    lo = np.concatenate([
        np.full(d, LOG_LENGTHSCALE_BOUNDS[0]),
        np.full(Q + 1, LOG_ORDER_VARIANCE_BOUNDS[0]),
        [LOG_NOISE_BOUNDS[0]],
    ])
    hi = np.concatenate([
        np.full(d, LOG_LENGTHSCALE_BOUNDS[1]),
        np.full(Q + 1, LOG_ORDER_VARIANCE_BOUNDS[1]),
        [LOG_NOISE_BOUNDS[1]],
    ])
    return lo, hi


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_probes(f, lo, hi, probes):
    """Golden-section maximization; returns every (t, value, payload) tried."""
    seen = []
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    e = a + _GOLDEN * (b - a)
    fc = f(c)
    fe = f(e)
    seen += [(c, *fc), (e, *fe)]
    for _ in range(max(0, probes - 2)):
        if fc[0] >= fe[0]:
            b, e, fe = e, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
            seen.append((c, *fc))
        else:
            a, c, fc = c, e, fe
            e = a + _GOLDEN * (b - a)
            fe = f(e)
            seen.append((e, *fe))
    return seen


def optimize_hyperparameters(data, init, budget=5, seed=0, measure=None, standardize=False,
                             starts=3, probes=8, width=2.0, background_size=None):
    """Coordinate search on the log marginal likelihood.

    Returns ``(hyperparameters, trace)`` where ``trace`` lists the LML after
    every accepted step, starting with the best start point. Starts are
    ``init`` plus ``starts - 1`` seeded perturbations of it.
    """
    if budget < 1:
        raise InvalidInputError("budget must be >= 1")
    if not isinstance(data, Dataset):
        data = Dataset(*data)
    d, Q = data.d, init.max_order
    measure = _resolve_measure(measure, data.X, background_size, seed)
    y = TargetScaler.fit(data.y).transform(data.y) if standardize else data.y
    search = _LmlSearch(data.X, y, measure, Q)
    lo, hi = _bounds(d, Q)
    rng = np.random.default_rng(seed)

    theta0 = init.vector()
    candidates = [theta0]
    for _ in range(max(0, starts - 1)):
        candidates.append(np.clip(theta0 + rng.normal(0.0, 0.5, size=theta0.shape), lo, hi))
    scores = [search.reset(c) for c in candidates]
    best = int(np.argmax(scores))
    if not math.isfinite(scores[best]):
        raise OptimizationFailedError("every start point was ill-conditioned")
    current = search.reset(candidates[best])
    trace = [current]

    # per-coordinate half-widths: widen when the optimum lands near the
    # edge of the probed interval, shrink when nothing better was found
    halves = np.full(len(theta0), float(width))
    for sweep in range(budget):
        for k in range(len(theta0)):
            f = search.coordinate(k)
            t0, half = search.theta[k], halves[k]
            seen = _golden_probes(f, max(lo[k], t0 - half), min(hi[k], t0 + half), probes)
            t_best, v_best, payload = max(seen, key=lambda s: s[1])
            if v_best > current:
                search.accept(k, t_best, payload)
                current = v_best
                trace.append(current)
                halves[k] = min(2.0 * half, MAX_HALF_WIDTH) if abs(t_best - t0) > 0.75 * half else 0.7 * half
            else:
                halves[k] = 0.5 * half
        log.info("sweep %d: log marginal likelihood %.6f", sweep + 1, current)
    return Hyperparameters.from_vector(search.theta, d), trace


def fit_hyperparameters(data, init, budget=5, seed=0, measure=None, standardize=False, **kwargs):
    hp, _ = optimize_hyperparameters(data, init, budget, seed, measure, standardize, **kwargs)
    return hp


# -- model archive ---------------------------------------------------------

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _write_entry(zf, name, payload):
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def _array_bytes(arr):
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_model(path, model):
    """Write a self-describing zip archive; byte-identical for equal models."""
    meta = {
        "format": FORMAT_TAG,
        "dataset_sha256": model.dataset_digest,
        "feature_names": model.feature_names,
        "target_name": model.target_name,
        "measure": model.measure.kind,
        "max_order": model.max_order,
        "noise": model.noise,
        "jitter": model.jitter,
        "constant_mean": model.constant_mean,
        "scaler": {"mean": model.scaler.mean, "scale": model.scaler.scale},
    }
    arrays = {
        "X": model.X,
        "y": model.y,
        "alpha": model.alpha,
        "chol": model.chol,
        "lengthscales": model.lengthscales,
        "order_variances": model.order_variances,
    }
    if model.measure.kind == EMPIRICAL:
        arrays["background"] = model.measure.background
    with zipfile.ZipFile(path, "w") as zf:
        _write_entry(zf, "meta.json", json.dumps(meta, sort_keys=True, indent=1).encode())
        for name in sorted(arrays):
            _write_entry(zf, f"{name}.npy", _array_bytes(arrays[name]))


def load_model(path):
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("format") != FORMAT_TAG:
                raise ModelFormatError(f"unsupported model format {meta.get('format')!r}, expected {FORMAT_TAG!r}")
            arrays = {
                name[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
                for name in zf.namelist()
                if name.endswith(".npy")
            }
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, ValueError) as exc:
        raise ModelFormatError(f"cannot read model archive {path}: {exc}") from exc

    ordvars = arrays["order_variances"]
    hp = None
    if np.all(ordvars > 0):
        hp = Hyperparameters.from_values(arrays["lengthscales"], ordvars, meta["noise"])
    if meta["measure"] == EMPIRICAL:
        measure = FeatureMeasure.empirical(arrays["background"])
    else:
        measure = FeatureMeasure.standard_normal()
    X = arrays["X"]
    kernels = make_kernels(arrays["lengthscales"], measure, X)
    return FittedModel(
        X=X,
        y=arrays["y"],
        kernels=kernels,
        order_variances=ordvars,
        noise=meta["noise"],
        jitter=meta["jitter"],
        chol=arrays["chol"],
        alpha=arrays["alpha"],
        constant_mean=meta["constant_mean"],
        measure=measure,
        hyperparameters=hp,
        scaler=TargetScaler(**meta["scaler"]),
        feature_names=meta["feature_names"],
        target_name=meta["target_name"],
        dataset_digest=meta["dataset_sha256"],
    )
