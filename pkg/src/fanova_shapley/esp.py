"""Element-wise elementary symmetric polynomials.

Items ("carriers") are scalars, vectors or matrices of one common shape and
are multiplied element-wise. ``esp_stable`` expands the generating
polynomial prod_j (1 + z_j t) one item at a time and is the production
path; ``esp_newton`` uses the power-sum recursion and is kept for
cross-checking.

The leave-one-out helpers are the hot kernels behind the Shapley
recursions: for every item ``i`` they build the ESPs of the remaining
items and contract them with a weight vector.
"""

import numpy as np

from ._accel import njit, pick
from .exceptions import InvalidInputError

__all__ = [
    "EspTable",
    "esp_newton",
    "esp_stable",
    "loo_weighted_esp",
    "pair_loo_weighted_esp",
    "weighted_esp",
]


class EspTable:
    """ESP values e_0..e_r, each with the carrier shape."""

    def __init__(self, entries, shape):
        self.entries = entries
        self.shape = tuple(shape)

    @property
    def order(self):
        return self.entries.shape[0] - 1

    def __getitem__(self, q):
        return self.entries[q]

    def __len__(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def tolist(self):
        return self.entries.tolist()

    def __repr__(self):
        return f"EspTable(order={self.order}, shape={self.shape})"


def _as_items(items, r):
    if r < 0:
        raise InvalidInputError(f"ESP order must be >= 0, got {r}")
    if isinstance(items, np.ndarray):
        arr = np.asarray(items, dtype=np.float64)
        if arr.ndim == 0:
            raise InvalidInputError("items must be a sequence of carriers")
    else:
        items = list(items)
        shapes = {np.shape(z) for z in items}
        if len(shapes) > 1:
            raise InvalidInputError(f"carriers have mismatched shapes: {sorted(shapes)}")
        if not items:
            if r != 0:
                raise InvalidInputError("empty item set only admits r = 0")
            return np.zeros((0, 1)), ()
        arr = np.asarray(items, dtype=np.float64)
    shape = arr.shape[1:]
    if arr.shape[0] == 0 and r != 0:
        raise InvalidInputError("empty item set only admits r = 0")
    size = int(np.prod(shape, dtype=np.int64))
    return np.ascontiguousarray(arr.reshape(arr.shape[0], size)), shape


# -- generating-polynomial expansion --------------------------------------

def _esp_stable_loops(items, r):
    m, N = items.shape
    out = np.zeros((r + 1, N))
    for t in range(N):
        out[0, t] = 1.0
    for j in range(m):
        top = min(j + 1, r)
        for q in range(top, 0, -1):
            for t in range(N):
                out[q, t] += items[j, t] * out[q - 1, t]
    return out


def _esp_stable_numpy(items, r):
    m, N = items.shape
    out = np.zeros((r + 1, N))
    out[0] = 1.0
    for j in range(m):
        z = items[j]
        for q in range(min(j + 1, r), 0, -1):
            out[q] += z * out[q - 1]
    return out


_esp_stable_jit = njit(_esp_stable_loops)
_esp_stable_kernel = pick(_esp_stable_jit, _esp_stable_numpy)


def esp_stable(items, r, canonical=False):
    """ESPs e_0..e_r of ``items`` by in-place polynomial expansion.

    Items are folded in the given order, orders updated from high to low,
    so the result is deterministic. With ``canonical=True`` each entry's
    items are sorted first, which makes the output bit-identical under any
    permutation of the items.
    """
    flat, shape = _as_items(items, r)
    if canonical and flat.shape[0] > 1:
        flat = np.ascontiguousarray(np.sort(flat, axis=0))
    out = _esp_stable_kernel(flat, int(r))
    return EspTable(out.reshape((r + 1,) + shape), shape)


# -- Newton's identities ---------------------------------------------------

def esp_newton(items, r):
    """ESPs via e_q = (1/q) sum_{s=1..q} (-1)^(s-1) e_{q-s} p_s.

    Loses accuracy when items span many orders of magnitude; use
    :func:`esp_stable` outside of tests.
    """
    flat, shape = _as_items(items, r)
    N = flat.shape[1]
    power = np.ones_like(flat)
    p = np.zeros((r + 1, N))
    for s in range(1, r + 1):
        power = power * flat
        p[s] = power.sum(axis=0)
    e = np.zeros((r + 1, N))
    e[0] = 1.0
    for q in range(1, r + 1):
        acc = np.zeros(N)
        for s in range(1, q + 1):
            sign = 1.0 if s % 2 == 1 else -1.0
            acc += sign * e[q - s] * p[s]
        e[q] = acc / q
    return EspTable(e.reshape((r + 1,) + shape), shape)


# -- weighted sums ---------------------------------------------------------

def weighted_esp(Z, weights):
    """sum_q weights[q] * e_q(rows of Z) for a (m, N) stack; returns (N,)."""
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    r = min(len(weights) - 1, Z.shape[0])
    e = _esp_stable_kernel(Z, r)
    return weights[: r + 1] @ e


def _loo_loops(Z, w):
    d, N = Z.shape
    R = w.shape[0]
    out = np.zeros((d, N))
    e = np.empty((R, N))
    for i in range(d):
        for t in range(N):
            e[0, t] = 1.0
        for q in range(1, R):
            for t in range(N):
                e[q, t] = 0.0
        cnt = 0
        for j in range(d):
            if j == i:
                continue
            cnt += 1
            top = min(cnt, R - 1)
            for q in range(top, 0, -1):
                for t in range(N):
                    e[q, t] += Z[j, t] * e[q - 1, t]
        for q in range(R):
            wq = w[q]
            if wq == 0.0:
                continue
            for t in range(N):
                out[i, t] += wq * e[q, t]
    return out


def _loo_numpy(Z, w):
    d, N = Z.shape
    R = w.shape[0]
    out = np.zeros((d, N))
    for i in range(d):
        e = np.zeros((R, N))
        e[0] = 1.0
        cnt = 0
        for j in range(d):
            if j == i:
                continue
            cnt += 1
            z = Z[j]
            for q in range(min(cnt, R - 1), 0, -1):
                e[q] += z * e[q - 1]
        out[i] = w @ e
    return out


_loo_jit = njit(_loo_loops)
_loo_kernel = pick(_loo_jit, _loo_numpy)


def loo_weighted_esp(Z, weights):
    """Row ``i`` of the result is sum_q weights[q] * e_q({Z_j : j != i}).

    ``Z`` has shape (d, ...) with any trailing carrier shape; the result has
    the same shape. Cost is O(d^2 * len(weights) * carrier size).
    """
    Z = np.asarray(Z, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if weights.ndim != 1 or len(weights) == 0:
        raise InvalidInputError("weights must be a nonempty 1-D array")
    d = Z.shape[0]
    flat = np.ascontiguousarray(Z.reshape(d, -1))
    out = _loo_kernel(flat, weights)
    return out.reshape(Z.shape)


def _pair_loops(zbar, w):
    d = zbar.shape[0]
    R = w.shape[0]
    out = np.zeros((d, d))
    e = np.empty(R)
    for i in range(d):
        for j in range(i + 1, d):
            e[0] = 1.0
            for q in range(1, R):
                e[q] = 0.0
            cnt = 0
            for k in range(d):
                if k == i or k == j:
                    continue
                cnt += 1
                z = zbar[k]
                for q in range(min(cnt, R - 1), 0, -1):
                    e[q] += z * e[q - 1]
            acc = 0.0
            for q in range(R):
                acc += w[q] * e[q]
            out[i, j] = acc
            out[j, i] = acc
    return out


def _pair_numpy(zbar, w):
    d = zbar.shape[0]
    R = w.shape[0]
    # a zero item leaves every ESP unchanged, so excluded items are zeroed
    items = np.broadcast_to(zbar[:, None, None], (d, d, d)).copy()
    idx = np.arange(d)
    items[idx, idx, :] = 0.0
    items[idx, :, idx] = 0.0
    e = _esp_stable_numpy(items.reshape(d, d * d), R - 1)
    out = (w @ e).reshape(d, d)
    out[idx, idx] = 0.0
    return out


_pair_jit = njit(_pair_loops)
_pair_kernel = pick(_pair_jit, _pair_numpy)


def pair_loo_weighted_esp(zbar, weights):
    """Entry (i, j), i != j, is sum_q weights[q] * e_q({zbar_k : k not in {i, j}}).

    The diagonal is left at zero.
    """
    zbar = np.ascontiguousarray(zbar, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if len(weights) == 0:
        return np.zeros((len(zbar), len(zbar)))
    return _pair_kernel(zbar, weights)


BACKENDS = {
    "numba": {"esp_stable": _esp_stable_jit, "loo": _loo_jit, "pair": _pair_jit},
    "numpy": {"esp_stable": _esp_stable_numpy, "loo": _loo_numpy, "pair": _pair_numpy},
}
