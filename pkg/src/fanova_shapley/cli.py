"""fanova-shapley command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
"""

import argparse
import csv
import json
import logging
import sys


from . import __version__
from .datasets import SyntheticSpec, generate_synthetic, read_csv, read_features_csv, write_csv
from .evaluation import INIT_LENGTHSCALE, NAIVE_CEILING, SEARCH_BUDGET, benchmark, rank_evaluation
from .exceptions import DataError, FanovaError, InvalidInputError, NumericalError
from .explain_global import explain_global
from .explain_local import dominance_matrix, explain_local
from .gp import Hyperparameters, fit, load_model, optimize_hyperparameters, save_model
from .kernels import FeatureMeasure

log = logging.getLogger("fanova_shapley")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# -- subcommands -----------------------------------------------------------

def cmd_train(args):
    data = read_csv(args.data, args.target)
    if data.dropped_rows:
        print(f"dropped {data.dropped_rows} row(s) with a missing target", file=sys.stderr)
    measure = FeatureMeasure.standard_normal() if args.measure == "standard-normal" else None
    hp = Hyperparameters.default(data.d, args.max_order, noise=args.noise, lengthscale=args.lengthscale)
    if args.budget:
        hp, trace = optimize_hyperparameters(
            data, hp, budget=args.budget, seed=args.seed, measure=measure,
            standardize=True, starts=args.starts, background_size=args.background_size,
        )
        log.info("log marginal likelihood %.6f -> %.6f", trace[0], trace[-1])
    model = fit(data, hp, measure=measure, standardize=True,
                background_size=args.background_size, seed=args.seed)
    save_model(args.out, model)
    return EXIT_OK


def _query_points(model, args):
    if args.queries is not None:
        return read_features_csv(args.queries, model.feature_names)
    rows = args.rows if args.rows is not None else [0]
    bad = [r for r in rows if not 0 <= r < model.n]
    if bad:
        raise InvalidInputError(f"row indices {bad} outside [0, {model.n})")
    return model.X[rows]


def cmd_explain_local(args):
    model = load_model(args.model)
    out = []
    Xq = _query_points(model, args)
    for count, x in enumerate(Xq, start=1):
        expl = explain_local(model, x)
        dom = dominance_matrix(expl, args.dominance, args.seed) if args.dominance else None
        out.append(expl.to_dict(dom))
        if count % 50 == 0:
            log.info("explained %d/%d", count, len(Xq))
    _dump_json(out, args.out)
    return EXIT_OK


def cmd_explain_global(args):
    model = load_model(args.model)
    background = None
    if args.background is not None:
        background = read_features_csv(args.background, model.feature_names)
    expl = explain_global(model, background, mc_samples=args.mc_samples, seed=args.seed)
    _dump_json(expl.to_dict(), args.out)
    return EXIT_OK


def cmd_synth(args):
    data = generate_synthetic(SyntheticSpec(args.id, args.n, args.d, args.seed))
    if args.out in (None, "-"):
        write_csv(sys.stdout, data)
    else:
        write_csv(args.out, data)
    return EXIT_OK


def cmd_rank_eval(args):
    spec = SyntheticSpec(args.id, args.n, args.d, args.seed)
    report = rank_evaluation(spec, args.instances, budget=args.budget, max_order=args.max_order,
                             seed=args.seed, init_lengthscale=args.init_lengthscale)
    _dump_json(report.to_dict(), args.out)
    return EXIT_OK


def cmd_benchmark(args):
    rows = benchmark(args.dims, n=args.n, naive_max_d=args.naive_max_d,
                     repeats=args.repeats, seed=args.seed)
    fh = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "fast_seconds", "naive_seconds"])
        for d, fast, naive in rows:
            w.writerow([d, f"{fast:.6e}", "skipped" if naive is None else f"{naive:.6e}"])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="fanova-shapley", description="FANOVA GP regression with exact Shapley explanations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="fit a model to a CSV file")
    t.add_argument("--data", required=True, help="training CSV with a header row")
    t.add_argument("--target", help="label column (default: last column)")
    t.add_argument("--out", required=True, help="model archive to write")
    t.add_argument("--max-order", type=_positive_int, help="interaction order Q (default min(d, 5))")
    t.add_argument("--measure", choices=["empirical", "standard-normal"], default="empirical")
    t.add_argument("--background-size", type=_positive_int,
                   help="subsample this many training rows as the empirical background")
    t.add_argument("--noise", type=float, default=0.1, help="initial noise variance")
    t.add_argument("--lengthscale", type=float, default=1.0, help="initial lengthscale")
    t.add_argument("--budget", type=int, default=5, help="search sweeps; 0 keeps the initial values")
    t.add_argument("--starts", type=_positive_int, default=3)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("explain-local", help="stochastic Shapley values for query points")
    e.add_argument("--model", required=True)
    g = e.add_mutually_exclusive_group()
    g.add_argument("--rows", type=_int_list, help="comma-separated 0-based training row indices")
    g.add_argument("--queries", help="CSV of query points (columns matched by feature name)")
    e.add_argument("--dominance", type=_positive_int, metavar="N",
                   help="add P(|phi_i| >= |phi_j|) estimated from N samples")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="JSON output (default stdout)")
    e.set_defaults(func=cmd_explain_local)

    gl = sub.add_parser("explain-global", help="variance-based global Shapley values")
    gl.add_argument("--model", required=True)
    gl.add_argument("--background", help="CSV sample of the feature measure (default: model background)")
    gl.add_argument("--mc-samples", type=_positive_int, help="also report a Monte-Carlo total-variance check")
    gl.add_argument("--seed", type=int, default=0)
    gl.add_argument("--out", help="JSON output (default stdout)")
    gl.set_defaults(func=cmd_explain_global)

    s = sub.add_parser("synth", help="write a synthetic benchmark dataset")
    s.add_argument("--id", type=int, required=True, choices=[1, 2, 3, 4])
    s.add_argument("--n", type=_positive_int, default=1000)
    s.add_argument("--d", type=_positive_int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="CSV output (default stdout)")
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("rank-eval", help="average rank of ground-truth features on a synthetic set")
    r.add_argument("--id", type=int, required=True, choices=[1, 2, 3, 4])
    r.add_argument("--n", type=_positive_int, default=500)
    r.add_argument("--d", type=_positive_int, default=20)
    r.add_argument("--instances", type=_positive_int, default=500)
    r.add_argument("--budget", type=_positive_int, default=SEARCH_BUDGET, help="search sweeps")
    r.add_argument("--init-lengthscale", type=float, default=INIT_LENGTHSCALE)
    r.add_argument("--max-order", type=_positive_int)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help="JSON output (default stdout)")
    r.set_defaults(func=cmd_rank_eval)

    b = sub.add_parser("benchmark", help="time recursive vs brute-force SSV means")
    b.add_argument("--dims", type=_int_list, default=[4, 8, 12, 16])
    b.add_argument("--n", type=_positive_int, default=200)
    b.add_argument("--naive-max-d", type=_positive_int, default=NAIVE_CEILING)
    b.add_argument("--repeats", type=_positive_int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="CSV output (default stdout)")
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, InvalidInputError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FanovaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
