import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tabulate import tabulate

from calibration.ece import DEFAULT_BINS, ece, invalid_rows, reliability_table
from curvature.report import curvature_report
from errors import ConfigError, NumericalError, ValidationError
from geometry.connections import christoffel, riemann_tensor, volume_element
from geometry.families import FAMILIES, ParametricFamily, fisher_metric, kl_hessian_fd
from geometry.metrics import BUILTIN_METRICS, MetricField
from geometry.nn_manifold import nn_manifold_jacobian_rank
from infobounds.pac_bayes import PacBayesCase, grid_argmin_lambda, optimal_lambda, thiemann_bound
from numkit.rng import RngStream
from run_logger import ensure_dir, log_run, write_json, write_resolved_config
from settings import CURVLAB_OUT_DIR, get_log_level
from trainer.config import load_json, load_sweep_config, load_train_config
from trainer.datasets import make_dataset
from trainer.sweep import aggregate, run_sweep, write_table
from trainer.train import build_model, load_model, save_model, train_run, validation_oracle
from view_runs import view_run, view_simple

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

METRIC_IDS = ("euclidean", "sphere", "conformal-bump")
FAMILY_IDS = ("bernoulli", "gaussian", "categorical")
GEOMETRY_IDS = METRIC_IDS + FAMILY_IDS + ("nn-manifold",)

# query point used when --theta is absent or shorter than the chart dimension
DEFAULT_POINTS: Dict[str, Sequence[float]] = {
    "sphere": (1.0, 0.0),
    "conformal-bump": (0.5, 0.0),
    "bernoulli": (0.3,),
    "gaussian": (0.0, 1.0),
    "categorical": (0.0, 0.0),
}
NN_THETA0 = 0.1


@dataclass(frozen=True)
class CliConfig:
    subcommand: str
    config: Optional[str] = None
    out: str = CURVLAB_OUT_DIR
    seed: Optional[int] = None
    verbosity: str = "normal"  # quiet | normal | verbose

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        verbosity = "quiet" if args.quiet else "verbose" if args.verbose else "normal"
        return cls(args.command, args.config, args.out, args.seed, verbosity)

    def log_level(self) -> int:
        return get_log_level(quiet=self.verbosity == "quiet", verbose=self.verbosity == "verbose")

    def require_config(self) -> str:
        if not self.config:
            raise ConfigError("--config", f"the {self.subcommand} subcommand needs a JSON config")
        return self.config


def _print_summary(title: str, payload: Dict[str, Any]):
    rows = [[k, f"{v:.6g}" if isinstance(v, float) else v] for k, v in payload.items()]
    print(f"\n📊 {title}")
    print(tabulate(rows, headers=["Metric", "Value"], tablefmt="grid"))


# -------------------------------
# train / sweep
# -------------------------------
def cmd_train(cli: CliConfig) -> int:
    config = load_train_config(cli.require_config())
    if cli.seed is not None:
        config = config.with_seed(cli.seed)
    print(f"🚀 Training {config.loss.kind} / {config.optimizer.kind} for {config.epochs} epochs (seed {config.seed})")
    record = train_run(config)
    log_run(cli.out, record)
    save_model(record, os.path.join(cli.out, "model.joblib"))
    if record.diverged:
        print(f"⚠️ Run diverged after {record.summary['epochs_completed']} epochs; partial rows kept")
    _print_summary("Run summary", record.summary)
    print(f"✅ Wrote run.jsonl, summary.json, resolved_config.json, model.joblib to {cli.out}")
    return EXIT_OK


def cmd_sweep(cli: CliConfig) -> int:
    sweep = load_sweep_config(cli.require_config())
    if cli.seed is not None:
        logger.warning("⚠️ --seed is ignored by sweep; the config's seeds list is used")
    ensure_dir(cli.out)
    write_resolved_config(cli.out, sweep.to_dict())
    print(f"🚀 Sweeping {sweep.axis} over {list(sweep.values)} with seeds {list(sweep.seeds)}")
    table = run_sweep(sweep)
    agg = aggregate(table)
    write_table(table, os.path.join(cli.out, "sweep.csv"))
    write_table(agg, os.path.join(cli.out, "aggregate.csv"))
    print(tabulate(agg.values.tolist(), headers=list(agg.columns), tablefmt="grid", floatfmt=".4g"))
    diverged = int(table["diverged"].astype(bool).sum())
    if diverged:
        print(f"⚠️ {diverged} of {len(table)} runs diverged")
    print(f"✅ Wrote sweep.csv ({len(table)} rows) and aggregate.csv to {cli.out}")
    return EXIT_OK


# -------------------------------
# curvature
# -------------------------------
def cmd_curvature(cli: CliConfig, model_path: Optional[str]) -> int:
    if model_path:
        model, params, config = load_model(model_path)
        print(f"✅ Loaded {model_path} ({model.n_params} parameters)")
    else:
        config = load_train_config(cli.require_config())
        if cli.seed is not None:
            config = config.with_seed(cli.seed)
        print("⚠️ No --model given; training one first")
        record = train_run(config)
        model, params = build_model(config), record.params
    splits = make_dataset(config.dataset)
    oracle = validation_oracle(config, model, params, splits.val)
    seed = config.seed if cli.seed is None else cli.seed
    report = curvature_report(oracle, probes=config.curvature.probes, rng=RngStream(seed),
                              power_iters=config.curvature.power_iters, tol=config.curvature.tol)
    payload = report.to_dict()
    payload.update(spectral_radius=report.spectral_radius, converged=report.converged, tie=report.tie,
                   laplacian=report.trace, seed=seed)
    ensure_dir(cli.out)
    write_resolved_config(cli.out, {"model": model_path, "seed": seed, "train": config.to_dict()})
    write_json(os.path.join(cli.out, "curvature.json"), payload)
    if not report.converged:
        print("⚠️ Power iteration did not converge; residual reported")
    _print_summary("Curvature of the validation objective", payload)
    print(f"✅ Wrote curvature.json to {cli.out}")
    return EXIT_OK


# -------------------------------
# calibrate
# -------------------------------
def read_predictions(path: str):
    """Probability columns plus a ``label`` column."""
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as e:
        raise ConfigError("<file>", f"predictions not found: {path}") from e
    if "label" not in frame.columns:
        raise ValidationError(f"{path} has no 'label' column")
    prob_cols = [c for c in frame.columns if c != "label"]
    if not prob_cols:
        raise ValidationError(f"{path} has no probability columns")
    probs = frame[prob_cols].to_numpy(dtype=np.float64)
    bad = invalid_rows(probs)
    if bad.size:
        # numbered like the CSV body, header excluded
        raise ValidationError(f"{path}: data row {int(bad[0]) + 1} is not a probability distribution")
    return probs, frame["label"].to_numpy(dtype=np.int64)


def cmd_calibrate(cli: CliConfig, predictions: str, bins: int) -> int:
    probs, labels = read_predictions(predictions)
    report = ece(probs, labels, bins)
    ensure_dir(cli.out)
    write_resolved_config(cli.out, {"predictions": predictions, "bins": bins})
    report.to_frame().to_csv(os.path.join(cli.out, "bins.csv"), index=False, lineterminator="\n")
    write_json(os.path.join(cli.out, "summary.json"), report.summary())
    print("\n📊 Reliability table")
    print(reliability_table(report))
    print(f"🎯 ECE = {report.ece:.6f}, accuracy = {report.accuracy:.4f} over {report.n} predictions")
    print(f"✅ Wrote bins.csv and summary.json to {cli.out}")
    return EXIT_OK


# -------------------------------
# geometry
# -------------------------------
def _point(geometry_id: str, theta: Optional[List[float]], dim: int) -> np.ndarray:
    default = list(DEFAULT_POINTS.get(geometry_id, (0.0,) * dim))
    given = list(theta or [])
    if len(given) > dim:
        raise ValidationError(f"{geometry_id} has {dim} coordinate(s), got {len(given)} in --theta")
    return np.array(given + default[len(given):], dtype=np.float64)


def fisher_field(family: ParametricFamily) -> MetricField:
    """The family's closed-form Fisher information as a metric field on its parameters."""
    return MetricField(f"fisher-{family.name}", family.dim, family.fisher_closed_form)


def _tensor_reports(metric: MetricField, theta: np.ndarray, flags: Dict[str, bool]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    if flags["christoffel"]:
        out["christoffel"] = christoffel(metric, theta).to_dict()
    if flags["riemann"]:
        out["riemann"] = riemann_tensor(metric, theta).to_dict()
    if flags["volume"]:
        out["volume"] = volume_element(metric, theta)
    return out


def geometry_report(geometry_id: str, theta: Optional[List[float]] = None, d: int = 2, seed: int = 0,
                    christoffel_flag: bool = False, riemann_flag: bool = False, volume_flag: bool = False,
                    fisher_flag: bool = False) -> Dict[str, Any]:
    """Christoffel / Riemann / volume / Fisher / rank outputs for one built-in id; no flag means all of them."""
    if geometry_id not in GEOMETRY_IDS:
        raise ValidationError(f"unknown geometry id {geometry_id!r}; known ids: {', '.join(GEOMETRY_IDS)}")
    flags = {"christoffel": christoffel_flag, "riemann": riemann_flag, "volume": volume_flag, "fisher": fisher_flag}
    if not any(flags.values()):
        flags = {k: True for k in flags}
    report: Dict[str, Any] = {"id": geometry_id}

    if geometry_id == "nn-manifold":
        if d < 1:
            raise ValidationError(f"--d must be >= 1, got {d}")
        rng = RngStream(seed)
        weights = np.asarray(theta, dtype=np.float64) if theta else rng.child(0).normal(d)
        inputs = rng.child(1).normal((d + 3, d))
        rank = nn_manifold_jacobian_rank(d, weights, NN_THETA0, inputs)
        report.update(d=d, theta0=NN_THETA0, theta=weights.tolist(), inputs=int(inputs.shape[0]), rank=rank,
                      expected_rank=d + 1)
        return report

    if geometry_id in METRIC_IDS:
        metric = BUILTIN_METRICS[geometry_id](d) if geometry_id == "euclidean" else BUILTIN_METRICS[geometry_id]()
        point = metric.point(_point(geometry_id, theta, metric.dim))
        report.update(theta=point.tolist(), metric=metric(point).tolist())
        report.update(_tensor_reports(metric, point, flags))
        return report

    family = FAMILIES[geometry_id]
    point = family.check(_point(geometry_id, theta, family.dim))
    report.update(family=family.name, theta=point.tolist())
    if flags["fisher"]:
        report["fisher"] = fisher_metric(family, point).tolist()
        report["fisher_closed_form"] = family.fisher_closed_form(point).tolist()
        report["kl_hessian"] = kl_hessian_fd(family, point).tolist()
    report.update(_tensor_reports(fisher_field(family), point, flags))
    return report


def cmd_geometry(cli: CliConfig, args: argparse.Namespace) -> int:
    report = geometry_report(args.id, args.theta, args.d, 0 if cli.seed is None else cli.seed,
                             args.christoffel, args.riemann, args.volume, args.fisher)
    ensure_dir(cli.out)
    write_resolved_config(cli.out, {"id": args.id, "theta": report.get("theta"), "d": args.d,
                                    "christoffel": args.christoffel, "riemann": args.riemann,
                                    "volume": args.volume, "fisher": args.fisher})
    write_json(os.path.join(cli.out, "geometry.json"), report)
    print(f"\n🔍 Geometry of {args.id} at θ = {report.get('theta')}")
    for key in ("rank", "expected_rank", "volume"):
        if key in report:
            print(f"   {key}: {report[key]}")
    for key in ("christoffel", "riemann"):
        if key in report:
            coeffs = np.asarray(report[key]["coeffs"])
            print(f"   {key} [{report[key]['index_order']}]: max |component| = {np.max(np.abs(coeffs)):.6g}")
    if "fisher" in report:
        print(f"   Fisher: {report['fisher']}")
    print(f"✅ Wrote geometry.json to {cli.out}")
    return EXIT_OK


# -------------------------------
# bound
# -------------------------------
CASE_FIELDS = tuple(f.name for f in fields(PacBayesCase))


def parse_case(raw: Any) -> PacBayesCase:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object with PAC-Bayes case fields")
    unknown = sorted(set(raw) - set(CASE_FIELDS))
    if unknown:
        raise ConfigError(unknown[0], f"unknown key; allowed: {', '.join(CASE_FIELDS)}")
    missing = [k for k in CASE_FIELDS if k not in raw]
    if missing:
        raise ConfigError(missing[0], "missing required key")
    for key in CASE_FIELDS:
        value = raw[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        if key == "n" and not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
    return PacBayesCase(**{k: raw[k] for k in CASE_FIELDS})


def bound_report(case: PacBayesCase, grid_check: bool = False) -> Dict[str, Any]:
    """Bound at the given λ, the closed-form optimal λ and the bound there."""
    lam_star = optimal_lambda(case.n, case.kl, case.emp_risk, case.epsilon)
    report: Dict[str, Any] = {
        "case": case.to_dict(),
        "bound": thiemann_bound(case),
        "optimal_lambda": lam_star,
        "bound_at_optimal": thiemann_bound(replace(case, lam=lam_star)),
    }
    if grid_check:
        lam_grid, bound_grid = grid_argmin_lambda(case.n, case.kl, case.emp_risk, case.epsilon)
        report.update(grid_lambda=lam_grid, grid_bound=bound_grid,
                      grid_difference=abs(bound_grid - report["bound_at_optimal"]))
    return report


def cmd_bound(cli: CliConfig, grid_check: bool) -> int:
    case = parse_case(load_json(cli.require_config()))
    report = bound_report(case, grid_check)
    ensure_dir(cli.out)
    write_resolved_config(cli.out, {**case.to_dict(), "grid_check": grid_check})
    write_json(os.path.join(cli.out, "bound.json"), report)
    print(f"\n📊 PAC-Bayes-λ bound at λ = {case.lam}: {report['bound']:.6f}")
    print(f"💡 optimal λ = {report['optimal_lambda']:.6f} → bound {report['bound_at_optimal']:.6f}")
    if grid_check:
        print(f"🔍 grid argmin λ = {report['grid_lambda']:.6f} → bound {report['grid_bound']:.6f} "
              f"(difference {report['grid_difference']:.3e})")
    print(f"✅ Wrote bound.json to {cli.out}")
    return EXIT_OK


# -------------------------------
# CLI
# -------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Path to a JSON config")
    common.add_argument("--out", type=str, default=CURVLAB_OUT_DIR, help="Output directory")
    common.add_argument("--seed", type=int, default=None, help="Seed override")
    noise = common.add_mutually_exclusive_group()
    noise.add_argument("--quiet", action="store_true", help="Only warnings and errors")
    noise.add_argument("--verbose", action="store_true", help="Enable debug logging")

    parser = argparse.ArgumentParser(description="curvlab: focal loss, curvature and calibration toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="Train one run from a TrainConfig")
    sub.add_parser("sweep", parents=[common], help="Sweep one hyperparameter over seeds")

    curv = sub.add_parser("curvature", parents=[common], help="Curvature report of a trained model")
    curv.add_argument("--model", type=str, default=None, help="model.joblib written by train")

    cal = sub.add_parser("calibrate", parents=[common], help="ECE of a predictions CSV")
    cal.add_argument("predictions", type=str, help="CSV with probability columns and a label column")
    cal.add_argument("--bins", type=int, default=DEFAULT_BINS, help="Number of confidence bins")

    geo = sub.add_parser("geometry", parents=[common], help="Geometry of a built-in metric or family")
    geo.add_argument("id", type=str, help=f"One of: {', '.join(GEOMETRY_IDS)}")
    geo.add_argument("--theta", type=float, nargs="+", default=None, help="Query point coordinates")
    geo.add_argument("--d", type=int, default=2, help="Dimension (euclidean, nn-manifold)")
    geo.add_argument("--christoffel", action="store_true")
    geo.add_argument("--riemann", action="store_true")
    geo.add_argument("--volume", action="store_true")
    geo.add_argument("--fisher", action="store_true")

    bound = sub.add_parser("bound", parents=[common], help="PAC-Bayes-λ bound from a JSON case")
    bound.add_argument("--grid-check", action="store_true", help="Cross-check λ* against a dense grid")

    rep = sub.add_parser("report", parents=[common], help="Tabulated view of run.jsonl / sweep CSV / JSON")
    rep.add_argument("path", type=str)
    rep.add_argument("--simple", action="store_true", help="Only the last row")
    return parser


def dispatch(cli: CliConfig, args: argparse.Namespace) -> int:
    handlers: Dict[str, Callable[[], int]] = {
        "train": lambda: cmd_train(cli),
        "sweep": lambda: cmd_sweep(cli),
        "curvature": lambda: cmd_curvature(cli, args.model),
        "calibrate": lambda: cmd_calibrate(cli, args.predictions, args.bins),
        "geometry": lambda: cmd_geometry(cli, args),
        "bound": lambda: cmd_bound(cli, args.grid_check),
        "report": lambda: _report(args),
    }
    return handlers[cli.subcommand]()


def _report(args: argparse.Namespace) -> int:
    if not os.path.exists(args.path):
        raise ConfigError("path", f"no such file: {args.path}")
    if args.simple:
        view_simple(args.path)
    else:
        view_run(args.path)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    cli = CliConfig.from_args(args)
    logging.basicConfig(level=cli.log_level(), format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(cli.log_level())
    try:
        return dispatch(cli, args)
    except ValidationError as e:
        print(f"❌ {e}")
        return EXIT_INVALID
    except NumericalError as e:
        print(f"❌ numerical failure: {e}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
