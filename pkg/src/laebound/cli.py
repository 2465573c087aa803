"""Command-line interface.

Exit codes: 0 success, 1 user error (arguments, config, input files),
2 numerical failure or a failed verification check.
"""

import argparse
import json
import sys

import numpy as np

from . import data, ease, experiment, lae_bound, metrics, mlr_bound, verify
from .errors import NumericalError, UserError

EXIT_OK, EXIT_USER, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write_json(path, payload):
    text = json.dumps(payload, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args):
    H = data.load_interactions(args.input, delimiter=args.delimiter, skip_header=args.skip_header,
                               user_col=args.user_col, item_col=args.item_col,
                               min_user_interactions=args.min_user,
                               min_item_interactions=args.min_item)
    data.write_coords(H, args.output)
    data.write_id_maps(H, args.output + ".ids.json")
    print(f"{H.n} items, {H.m} users, {H.nnz} interactions -> {args.output}")
    return EXIT_OK


def cmd_split(args):
    H = data.read_coords(args.input)
    train, test = data.strong_split(H, args.test_fraction, args.seed)
    data.write_coords(train, args.train_out)
    data.write_coords(test, args.test_out)
    print(f"train: {train.m} users, test: {test.m} users")
    return EXIT_OK


def cmd_train_ease(args):
    H = data.read_coords(args.input)
    model = ease.train_ease(H, args.gamma)
    ease.save_matrix(args.output, model.W, binary=args.binary)
    print(f"EASE gamma={args.gamma:g}, n={H.n} -> {args.output}")
    return EXIT_OK


def _sigma_hh(args, H_test):
    if args.sigma_hh:
        return ease.load_matrix(args.sigma_hh)
    if args.population:
        return data.population_correlation(data.read_coords(args.population))
    return data.population_correlation(H_test)


def cmd_bound(args):
    W = ease.load_matrix(args.model)
    H_test = data.read_coords(args.test)
    split = data.holdout_mask(H_test, args.p, args.mask_seed)
    report = lae_bound.compute_bound(_sigma_hh(args, H_test), args.p, split.X, split.Y, W,
                                     args.sigma, args.delta, args.lambdas,
                                     zero_diag=not args.unconstrained, jitter=args.jitter,
                                     workers=experiment.resolve_workers(1))
    print(report.to_text())
    if args.output:
        _write_json(args.output, report.to_dict())
    return EXIT_OK


def cmd_metrics(args):
    W = ease.load_matrix(args.model)
    H_test = data.read_coords(args.test)
    split = data.holdout_mask(H_test, args.p, args.mask_seed)
    result = metrics.evaluate(W, split.X, split.Y, ks=args.ks,
                              exclude_input=not args.include_input)
    payload = {
        "users_evaluated": result.users_evaluated,
        "recall": {str(k): v for k, v in result.recall_at_k.items()},
        "ndcg": {str(k): v for k, v in result.ndcg_at_k.items()},
    }
    _write_json(args.output, payload)
    return EXIT_OK


_RUN_OVERRIDES = ("dataset", "output_dir", "gammas", "lambdas", "sigma", "delta", "p",
                  "test_fraction", "split_seed", "mask_seed", "jitter", "ks",
                  "sigma_hh_source", "sigma_hh_file", "workers")


def cmd_run(args):
    config = experiment.ExperimentConfig.load(args.config) if args.config else None
    values = config.to_dict() if config else {}
    for key in _RUN_OVERRIDES:
        value = getattr(args, key)
        if value is not None:
            values[key] = value
    config = experiment.ExperimentConfig.from_dict(values)
    report, paths = experiment.cmd_run(config)
    sys.stdout.write(experiment.format_table(report).split("\n\n")[0] + "\n")
    print("reports: " + ", ".join(paths))
    failed = [r for r in report["rows"] if "error" in r]
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_verify(args):
    results = verify.run_checks(args.level)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<24} {r.detail}  (tol {r.tolerance}, {r.seconds:.1f}s)")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def cmd_mlr_demo(args):
    rng = np.random.default_rng(args.seed)
    model = verify.random_gaussian_model(rng, p=args.outputs, n=args.inputs)
    U0 = model.W_star + 0.1 * rng.standard_normal(model.W_star.shape)
    cond = mlr_bound.convergence_condition_gaussian(model, U0, args.sigma, args.lam)
    print(f"convergence condition: holds={cond.holds}, threshold={cond.threshold:.6g}"
          + ("" if cond.log_value is None else f", log value={cond.log_value:.6g}"))
    W = mlr_bound.gaussian_prior_samples(U0, args.sigma, args.prior_samples, seed=args.seed)
    print(f"{'m':>10} {'psi_exact':>14} {'psi_upper':>14}")
    for m in args.ms:
        print(f"{m:>10d} {mlr_bound.psi_exact(model, W, args.lam, m):>14.6g} "
              f"{mlr_bound.psi_upper(model, W, args.lam, m):>14.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="laebound", description="PAC-Bayes bounds for linear autoencoders.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="read a delimited interaction log into coordinate format")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--skip-header", action="store_true")
    p.add_argument("--user-col", type=int, default=0)
    p.add_argument("--item-col", type=int, default=1)
    p.add_argument("--min-user", type=int, default=0, help="minimum interactions per user")
    p.add_argument("--min-item", type=int, default=0, help="minimum interactions per item")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="strong-generalization user split")
    p.add_argument("input")
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-ease", help="closed-form EASE on a coordinate file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--binary", action="store_true", help="write the binary matrix format")
    p.set_defaults(func=cmd_train_ease)

    def holdout_args(q):
        q.add_argument("--model", required=True, help="matrix file of W")
        q.add_argument("--test", required=True, help="coordinate file of the test users")
        q.add_argument("--p", type=float, default=0.5, help="input keep rate")
        q.add_argument("--mask-seed", type=int, default=1)

    p = sub.add_parser("bound", help="bound a model on held-out test users")
    holdout_args(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--population", help="coordinate file whose H H^T/m' gives Sigma_hh")
    src.add_argument("--sigma-hh", help="matrix file with Sigma_hh")
    p.add_argument("--sigma", type=float, default=0.001)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--lambdas", type=_floats, default=[float(2**k) for k in range(10)])
    p.add_argument("--jitter", type=float, default=None)
    p.add_argument("--unconstrained", action="store_true", help="prior without the zero diagonal")
    p.add_argument("--output", help="write the JSON report here")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("metrics", help="Recall@K and NDCG@K on held-out test users")
    holdout_args(p)
    p.add_argument("--ks", type=_ints, default=[50, 100])
    p.add_argument("--include-input", action="store_true", help="keep input items in rankings")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("run", help="full experiment over the gamma list")
    p.add_argument("--config", help="JSON file with ExperimentConfig keys")
    p.add_argument("--dataset", help="interaction file, or 'toy' for the bundled sample")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--gammas", type=_floats)
    p.add_argument("--lambdas", type=_floats)
    p.add_argument("--sigma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--mask-seed", dest="mask_seed", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("--ks", type=_ints)
    p.add_argument("--sigma-hh-source", dest="sigma_hh_source",
                   choices=experiment.SIGMA_HH_SOURCES)
    p.add_argument("--sigma-hh-file", dest="sigma_hh_file")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run the oracle cross-checks")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("mlr-demo", help="Psi and convergence check for a random regression model")
    p.add_argument("--inputs", type=int, default=3)
    p.add_argument("--outputs", type=int, default=2)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--prior-samples", type=int, default=200)
    p.add_argument("--ms", type=_ints, default=[10, 100, 1000, 10_000, 1_000_000])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mlr_demo)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
