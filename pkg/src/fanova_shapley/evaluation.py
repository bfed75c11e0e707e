"""Rank-recovery evaluation on synthetic data and the fast-vs-naive timing benchmark."""

import logging
import time

import numpy as np

from .datasets import RankReport, SyntheticSpec, average_rank, generate_synthetic
from .explain_local import ssv_mean_all
from .gp import Dataset, Hyperparameters, fit, optimize_hyperparameters
from .kernels import FeatureMeasure
from .oracle import naive_ssv_mean

log = logging.getLogger(__name__)

NAIVE_CEILING = 16
# Long initial lengthscales make every constrained kernel nearly zero, so the
# search starts from "no feature matters" and switches features on one
# coordinate at a time. Starting at 1 tends to strand it in optima that
# interpolate through spurious features.
INIT_LENGTHSCALE = 30.0
SEARCH_BUDGET = 10


def train_synthetic(spec, budget=SEARCH_BUDGET, max_order=None, seed=0, starts=2,
                    init_lengthscale=INIT_LENGTHSCALE):
    """Fit a tuned model on a generated dataset (standardized targets)."""
    data = generate_synthetic(spec)
    init = Hyperparameters.default(data.d, max_order, lengthscale=init_lengthscale)
    hp, trace = optimize_hyperparameters(data, init, budget=budget, seed=seed,
                                         standardize=True, starts=starts)
    log.info("dataset %d: LML %.3f -> %.3f", spec.id, trace[0], trace[-1])
    return fit(data, hp, standardize=True), data


def rank_evaluation(spec, instances=100, budget=SEARCH_BUDGET, max_order=None, seed=0, starts=2,
                    init_lengthscale=INIT_LENGTHSCALE):
    """Average rank of the ground-truth features over explained training rows.

    ``instances`` rows are drawn without replacement (seeded) from the
    training sample and ranked by |SSV mean|.
    """
    model, data = train_synthetic(spec, budget, max_order, seed, starts, init_lengthscale)
    rng = np.random.default_rng(seed)
    k = min(instances, data.n)
    rows = np.sort(rng.choice(data.n, size=k, replace=False))
    ranks = []
    for count, r in enumerate(rows, start=1):
        phi = ssv_mean_all(model, data.X[r])
        ranks.append(average_rank(phi, spec.truth))
        if count % 25 == 0:
            log.info("explained %d/%d", count, k)
    return RankReport(ranks, spec.truth, spec.ideal_rank)


def benchmark_model(d, n, seed=0):
    """Random full-interaction model (Q = d) on standard normal inputs."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = np.sin(X).sum(axis=1) + 0.1 * rng.standard_normal(n)
    hp = Hyperparameters.default(d, max_order=d)
    return fit(Dataset(X, y), hp, measure=FeatureMeasure.standard_normal(), standardize=True)


def _best_time(func, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - t0)
    return best


def benchmark(dims, n=200, naive_max_d=NAIVE_CEILING, repeats=3, seed=0):
    """Seconds for the recursive SSV means vs brute-force subset enumeration.

    Each row is ``(d, fast_seconds, naive_seconds or None)``; the naive
    side is skipped above ``naive_max_d``. Times are the best of
    ``repeats`` runs (the naive path runs once when it exceeds a second).
    """
    rows = []
    for d in dims:
        model = benchmark_model(d, n, seed)
        x = model.X[0]
        ssv_mean_all(model, x)  # warm up compiled kernels
        fast = _best_time(lambda: ssv_mean_all(model, x), repeats)
        naive = None
        if d <= naive_max_d:
            t0 = time.perf_counter()
            naive_ssv_mean(model, x, limit=naive_max_d)
            naive = time.perf_counter() - t0
            if naive < 1.0 and repeats > 1:
                naive = min(naive, _best_time(lambda: naive_ssv_mean(model, x, limit=naive_max_d),
                                              repeats - 1))
        log.info("d=%d fast=%.3es naive=%s", d, fast, "skipped" if naive is None else f"{naive:.3e}s")
        rows.append((d, fast, naive))
    return rows
