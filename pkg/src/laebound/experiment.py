"""End-to-end experiment: split, train EASE per gamma, bound, rank, report."""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

import numpy as np
from scipy.stats import spearmanr

from . import data, ease, lae_bound, metrics
from .errors import ArgumentError, NoFeasibleLambdaError

WORKERS_ENV = "LAEBOUND_WORKERS"
TOY_DATASET = "toy"
SIGMA_HH_SOURCES = ("whole", "train", "file")


@dataclass
class ExperimentConfig:
    dataset: str = TOY_DATASET
    delimiter: str = ","
    skip_header: bool = True
    user_col: int = 0
    item_col: int = 1
    min_user_interactions: int = 0
    min_item_interactions: int = 0
    test_fraction: float = 0.3
    p: float = 0.5
    gammas: list = field(default_factory=lambda: [50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0, 5000.0])
    sigma: float = 0.001
    delta: float = 0.01
    lambdas: list = field(default_factory=lambda: [float(2**k) for k in range(10)])
    split_seed: int = 0
    mask_seed: int = 1
    jitter: float = None
    ks: list = field(default_factory=lambda: [50, 100])
    sigma_hh_source: str = "whole"
    sigma_hh_file: str = None
    zero_diag: bool = True
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if self.sigma_hh_source not in SIGMA_HH_SOURCES:
            raise ArgumentError(f"sigma_hh_source must be one of {SIGMA_HH_SOURCES}")
        if self.sigma_hh_source == "file" and not self.sigma_hh_file:
            raise ArgumentError("sigma_hh_source 'file' needs sigma_hh_file")
        if not self.gammas:
            raise ArgumentError("gammas is empty")
        self.gammas = [float(g) for g in self.gammas]
        self.lambdas = [float(v) for v in self.lambdas]
        self.ks = [int(k) for k in self.ks]

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ArgumentError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                values = json.load(fh)
        except FileNotFoundError:
            raise ArgumentError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ArgumentError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(values)

    def to_dict(self):
        return asdict(self)


def resolve_workers(configured):
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ArgumentError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return max(1, int(configured))


def toy_dataset_path():
    return str(resources.files("laebound") / "resources" / "toy.csv")


def load_dataset(config):
    path = toy_dataset_path() if config.dataset == TOY_DATASET else config.dataset
    return data.load_interactions(
        path, delimiter=config.delimiter, skip_header=config.skip_header,
        user_col=config.user_col, item_col=config.item_col,
        min_user_interactions=config.min_user_interactions,
        min_item_interactions=config.min_item_interactions,
    )


def population_matrix(config, H_whole, H_train):
    if config.sigma_hh_source == "whole":
        return data.population_correlation(H_whole)
    if config.sigma_hh_source == "train":
        return data.population_correlation(H_train)
    return ease.load_matrix(config.sigma_hh_file)


def run_gamma(gamma, config, H_train, split, corr):
    W = ease.train_ease(H_train, gamma).W
    row = {"gamma": gamma}
    try:
        report = lae_bound.compute_bound(None, config.p, split.X, split.Y, W, config.sigma,
                                         config.delta, config.lambdas,
                                         zero_diag=config.zero_diag, corr=corr)
    except NoFeasibleLambdaError as exc:
        report = None
        row["error"] = str(exc)
    ranking = metrics.evaluate(W, split.X, split.Y, ks=config.ks)
    if report is not None:
        best = report.best
        row.update(lambda_best=best.lam, LH=best.LH, RH=best.RH,
                   rh_within_3x_lh=bool(best.RH <= 3 * best.LH))
    for K in sorted(ranking.recall_at_k):
        row[f"recall@{K}"] = ranking.recall_at_k[K]
    for K in sorted(ranking.ndcg_at_k):
        row[f"ndcg@{K}"] = ranking.ndcg_at_k[K]
    row["users_evaluated"] = ranking.users_evaluated
    if report is not None:
        row["components"] = report.to_dict()
    return row


def run_experiment(config):
    """Run every gamma and return the report dictionary (no files written)."""
    H_whole = load_dataset(config)
    H_train, H_test = data.strong_split(H_whole, config.test_fraction, config.split_seed)
    split = data.holdout_mask(H_test, config.p, config.mask_seed)
    Sigma_hh = population_matrix(config, H_whole, H_train)
    if Sigma_hh.shape != (H_whole.n, H_whole.n):
        raise ArgumentError(f"Sigma_hh is {Sigma_hh.shape}, expected {H_whole.n} x {H_whole.n}")
    corr = lae_bound.correlations_from_holdout(Sigma_hh, config.p, jitter=config.jitter)
    workers = resolve_workers(config.workers)

    def task(g):
        return run_gamma(g, config, H_train, split, corr)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(task, config.gammas))
    else:
        rows = [task(g) for g in config.gammas]

    resolved = config.to_dict()
    resolved.pop("workers")
    summary = {"n_items": H_whole.n, "n_users": H_whole.m, "n_train_users": H_train.m,
               "n_test_users": H_test.m, "sigma_hh_source": config.sigma_hh_source,
               "jitter_applied": corr.jitter}
    ok = [r for r in rows if "RH" in r]
    k_max = max(config.ks)
    if len(ok) >= 2:
        rho = spearmanr([r["RH"] for r in ok], [r[f"ndcg@{k_max}"] for r in ok]).statistic
        summary[f"spearman_rh_ndcg@{k_max}"] = None if np.isnan(rho) else float(rho)
    return {"config": resolved, "summary": summary, "rows": rows}


def format_table(report):
    ks = report["config"]["ks"]
    cols = ["gamma", "LH", "RH"] + [f"recall@{k}" for k in ks] + [f"ndcg@{k}" for k in ks]
    lines = ["# sigma_hh_source: " + report["summary"]["sigma_hh_source"],
             " ".join(f"{c:>12}" for c in cols)]
    for row in report["rows"]:
        cells = []
        for c in cols:
            v = row.get(c)
            cells.append(f"{'rejected':>12}" if v is None else f"{v:>12.4f}")
        lines.append(" ".join(cells))
    for key, value in report["summary"].items():
        if key.startswith("spearman"):
            lines.append(f"# {key}: {value}")
    lines.append("")
    lines.append("# per-gamma components at each lambda")
    for row in report["rows"]:
        if "components" not in row:
            lines.append(f"gamma={row['gamma']:g}: {row['error']}")
            continue
        lines.append(f"gamma={row['gamma']:g}")
        comp = row["components"]
        rebuilt = lae_bound.BoundReport(
            grid=[lae_bound.BoundRecord(**_record_args(r)) for r in comp["grid"]],
            best_index=comp["best_index"], delta=comp["delta"], sigma=comp["sigma"],
            p=comp["p"], L=comp["L"])
        lines.append(rebuilt.to_text())
    return "\n".join(lines) + "\n"


def _record_args(record):
    args = dict(record)
    args["lam"] = args.pop("lambda")
    return args


def write_report(report, output_dir):
    os.makedirs(output_dir, exist_ok=True)
    json_path = os.path.join(output_dir, "report.json")
    text_path = os.path.join(output_dir, "report.txt")
    with open(json_path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    with open(text_path, "w") as fh:
        fh.write(format_table(report))
    return json_path, text_path


def cmd_run(config):
    report = run_experiment(config)
    return report, write_report(report, config.output_dir)
