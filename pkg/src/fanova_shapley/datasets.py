"""Synthetic benchmark data, CSV ingestion and rank-based evaluation."""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import IngestionError, InvalidInputError
from .gp import Dataset

log = logging.getLogger(__name__)

# 0-based indices of the features each generator actually uses
GROUND_TRUTH = {1: (0, 1), 2: (0, 1, 2, 3), 3: (0, 1, 2, 3), 4: (0, 1, 2)}
IDEAL_RANK = {k: (len(v) + 1) / 2 for k, v in GROUND_TRUTH.items()}


def _response(dataset_id, X):
    x1, x2 = X[:, 0], X[:, 1]
    if dataset_id == 1:
        return x1 ** 2 - 0.5 * x2 ** 2 + np.sin(2 * np.pi * x1)
    x3 = X[:, 2]
    if dataset_id == 2:
        x4 = X[:, 3]
        return (np.exp(x1) * np.tanh(x2 * x3)
                + np.exp(-np.abs(x4)) * np.tanh(x1 * x2)
                + np.exp(x1 * x2) * np.sin(x3 * x4))
    if dataset_id == 3:
        x4 = X[:, 3]
        return (np.sin(x1) * np.exp(x2)
                + np.cos(x3 * x4) * np.tanh(x1 * x2 * np.pi)
                + np.exp(-(x1 ** 2 + x2 ** 2)) * np.sin((x3 + x4) * np.pi))
    if dataset_id == 4:
        return np.exp(x1 ** 2 + x2 ** 2 + x3 ** 2 - 4.0)
    raise InvalidInputError(f"unknown synthetic dataset id {dataset_id}")


@dataclass(frozen=True)
class SyntheticSpec:
    id: int
    n: int = 1000
    d: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.id not in GROUND_TRUTH:
            raise InvalidInputError(f"synthetic id must be one of {sorted(GROUND_TRUTH)}")
        if self.d < len(GROUND_TRUTH[self.id]):
            raise InvalidInputError(f"dataset {self.id} needs d >= {len(GROUND_TRUTH[self.id])}")
        if self.n < 1:
            raise InvalidInputError("n must be >= 1")

    @property
    def truth(self):
        return GROUND_TRUTH[self.id]

    @property
    def ideal_rank(self):
        return IDEAL_RANK[self.id]


def synthetic_response(dataset_id, X):
    """Noise-free response of generator ``dataset_id`` at the rows of ``X``."""
    return _response(dataset_id, np.atleast_2d(np.asarray(X, dtype=np.float64)))


def generate_synthetic(spec):
    """Standard normal features and the generator's response."""
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.d))
    y = _response(spec.id, X)
    names = [f"x{j + 1}" for j in range(spec.d)]
    return Dataset(X, y, names, "y")


# -- ranking ---------------------------------------------------------------

def feature_ranks(attributions):
    """1-based rank of every feature by descending |attribution|.

    Ties go to the lower feature index.
    """
    a = np.abs(np.asarray(attributions, dtype=np.float64))
    order = np.lexsort((np.arange(len(a)), -a))
    ranks = np.empty(len(a), dtype=int)
    ranks[order] = np.arange(1, len(a) + 1)
    return ranks


def average_rank(attributions, truth):
    truth = sorted(set(int(t) for t in truth))
    d = len(np.atleast_1d(attributions))
    if not truth or len(truth) > d or truth[0] < 0 or truth[-1] >= d:
        raise InvalidInputError(f"truth set {truth} invalid for d = {d}")
    return float(np.mean(feature_ranks(attributions)[truth]))


@dataclass
class RankReport:
    ranks: list
    truth: tuple
    ideal: float
    mean: float = field(init=False)
    quartiles: list = field(init=False)

    def __post_init__(self):
        r = np.asarray(self.ranks, dtype=np.float64)
        self.mean = float(r.mean()) if r.size else math.nan
        self.quartiles = np.percentile(r, [25, 50, 75]).tolist() if r.size else [math.nan] * 3

    def to_dict(self):
        return {
            "truth": [int(t) + 1 for t in self.truth],
            "ideal": self.ideal,
            "mean": self.mean,
            "quartiles": self.quartiles,
            "ranks": [float(r) for r in self.ranks],
        }


# -- CSV -------------------------------------------------------------------

def _parse_cell(text, row, column):
    text = text.strip()
    if text == "":
        return math.nan
    try:
        val = float(text)
    except ValueError:
        raise IngestionError(f"cannot parse {text!r} as a number", row, column) from None
    if not math.isfinite(val):
        raise IngestionError(f"non-finite value {text!r}", row, column)
    return val


def _read_table(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{path} is not UTF-8") from exc
    if not rows:
        raise IngestionError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    values = np.empty((len(body), len(header)))
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise IngestionError(f"expected {len(header)} fields, found {len(r)}", i)
        for j, cell in enumerate(r):
            values[i - 2, j] = _parse_cell(cell, i, header[j])
    return header, values


def _impute(X, names):
    X = X.copy()
    for j in range(X.shape[1]):
        col = X[:, j]
        miss = np.isnan(col)
        if miss.all():
            raise IngestionError("column has no values to impute from", column=names[j])
        if miss.any():
            col[miss] = col[~miss].mean()
    return X


def read_csv(path, target=None):
    """Load a dataset; ``target`` defaults to the last column.

    Blank feature cells are replaced by the column mean of the present
    values. Rows with a blank target are dropped and counted in
    ``Dataset.dropped_rows``.
    """
    header, values = _read_table(path)
    if target is None:
        target = header[-1]
    if target not in header:
        raise IngestionError(f"target column {target!r} not found", column=target)
    t = header.index(target)
    names = [h for j, h in enumerate(header) if j != t]
    if not names:
        raise IngestionError("no feature columns besides the target")
    y = values[:, t]
    keep = ~np.isnan(y)
    dropped = int((~keep).sum())
    if dropped:
        log.warning("dropped %d row(s) with a missing target", dropped)
    X = np.delete(values, t, axis=1)[keep]
    y = y[keep]
    if len(y) < 2:
        raise IngestionError(f"need at least 2 rows with a target, found {len(y)}")
    X = _impute(X, names)
    return Dataset(X, y, names, target, dropped_rows=dropped)


def read_features_csv(path, feature_names, fill=None):
    """Query points: columns matched by name, extra columns ignored.

    Blanks are filled from ``fill`` (per-feature values) when given.
    """
    header, values = _read_table(path)
    missing = [f for f in feature_names if f not in header]
    if missing:
        raise IngestionError(f"query file lacks feature columns {missing}")
    X = values[:, [header.index(f) for f in feature_names]]
    if fill is not None:
        nan = np.isnan(X)
        X[nan] = np.broadcast_to(np.asarray(fill, dtype=np.float64), X.shape)[nan]
    elif np.isnan(X).any():
        X = _impute(X, list(feature_names))
    return X


def write_csv(path_or_file, data):
    """Write a dataset with 17 significant digits (round-trips float64)."""
    header = list(data.feature_names) + [data.target_name]
    rows = np.column_stack([data.X, data.y])

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            emit(fh)
