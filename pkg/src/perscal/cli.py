"""Command-line harness: generate, sample, solve, audit, benchmark, verify.

Subcommands:
  gen     build an instance (named fixture or random spec) and write JSON
  sample  draw a dataset from an instance's sampling model and write CSV
  solve   run the constrained solver, then audit and write a full run report
  audit   audit a saved predictor without solving
  bench   brute-force and LP benchmark values for an instance + dataset
  report  recompute every number in a report from its artifacts and verify

Every number in a report is recomputable from the serialized artifacts; the
``report`` subcommand checks exactly that.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .audit import decision_calibration_error, regret_audit
from .bridge import obedient_signaling_upper_bound
from .generate import FIXTURES, InstanceSpec, generate_instance, sample_dataset
from .model import Dataset, Instance, RandomizedPredictor, ResponseRule, STRICT, expected_sender_utility
from .solver import GameConfig, brute_force_opt, equilibrium_gap, solve_persuasive
from .serialize import (
    load_dataset,
    load_instance,
    load_predictor,
    read_json,
    save_dataset,
    save_instance,
    save_predictor,
    save_trace,
    write_json,
)

RECOMPUTE_TOL = 1e-12


@dataclass
class ExperimentConfig:
    """Everything one solve-and-audit run depends on, seeds included."""

    instance_path: str | None = None
    fixture: str | None = None
    spec: InstanceSpec | None = None
    instance_seed: int = 0
    dataset_path: str | None = None
    n_samples: int | None = None
    dataset_seed: int = 0
    gamma: float = 0.0
    epsilon: float = 0.1
    eta: float | None = None
    t_max: int | None = None
    solver_seed: int = 0
    holdout_path: str | None = None
    brute_force: bool = False
    lp_bound: bool = False
    write_trace: bool = False
    out_dir: str = "."

    def rule(self) -> ResponseRule:
        return STRICT if self.eta is None else ResponseRule.quantal(self.eta)

    def game_config(self) -> GameConfig:
        return GameConfig(
            gamma=self.gamma,
            epsilon=self.epsilon,
            t_max=self.t_max,
            rule=self.rule(),
            rng_seed=self.solver_seed,
        )

    def echo(self) -> dict:
        return {
            "instance_path": self.instance_path,
            "fixture": self.fixture,
            "instance_seed": self.instance_seed,
            "dataset_path": self.dataset_path,
            "n_samples": self.n_samples,
            "dataset_seed": self.dataset_seed,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "eta": self.eta,
            "t_max": self.t_max,
            "solver_seed": self.solver_seed,
            "holdout_path": self.holdout_path,
            "brute_force": self.brute_force,
            "lp_bound": self.lp_bound,
        }


def _metrics(
    instance: Instance,
    dataset: Dataset,
    predictor: RandomizedPredictor,
    rule: ResponseRule,
    gamma: float,
    dual=None,
    holdout: Dataset | None = None,
    brute_force: bool = False,
    lp_bound: bool = False,
) -> dict:
    out = {
        "utility_train": expected_sender_utility(instance, dataset, predictor, rule),
        "calibration_train": decision_calibration_error(instance, dataset, predictor, rule).max_abs,
        "utility_holdout": None,
        "calibration_holdout": None,
        "equilibrium_gap": None,
        "regret": {},
        "brute_force_opt": None,
        "lp_upper_bound": None,
    }
    if holdout is not None:
        out["utility_holdout"] = expected_sender_utility(instance, holdout, predictor, rule)
        out["calibration_holdout"] = decision_calibration_error(
            instance, holdout, predictor, rule
        ).max_abs
    if dual is not None:
        out["equilibrium_gap"] = equilibrium_gap(instance, dataset, predictor, dual, gamma, rule)
    kinds = ["swap"] + (["type", "swap-type"] if instance.n_receivers >= 2 else [])
    for kind in kinds:
        out["regret"][kind] = regret_audit(instance, dataset, predictor, rule, kind).to_json_dict()
    if brute_force:
        value = brute_force_opt(instance, dataset, gamma, rule)
        out["brute_force_opt"] = {
            "feasible": value != float("-inf"),
            "value": None if value == float("-inf") else value,
        }
    if lp_bound:
        out["lp_upper_bound"] = obedient_signaling_upper_bound(instance, dataset)
    return out


def _materialize(cfg: ExperimentConfig, out_dir: Path):
    """Resolve the instance and dataset, saving generated artifacts beside the report."""
    if cfg.instance_path:
        instance = load_instance(cfg.instance_path)
        instance_art = cfg.instance_path
    else:
        spec = cfg.spec or InstanceSpec(fixture=cfg.fixture)
        instance = generate_instance(spec, cfg.instance_seed)
        instance_art = "instance.json"
        save_instance(instance, out_dir / instance_art)
    if cfg.dataset_path:
        dataset = load_dataset(cfg.dataset_path, instance)
        dataset_art = cfg.dataset_path
    else:
        if cfg.n_samples is None:
            raise ValueError("either a dataset path or a sample count is required")
        dataset = sample_dataset(instance, cfg.n_samples, cfg.dataset_seed)
        dataset_art = "dataset.csv"
        save_dataset(dataset, out_dir / dataset_art)
    holdout = load_dataset(cfg.holdout_path, instance) if cfg.holdout_path else None
    return instance, instance_art, dataset, dataset_art, holdout


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Solve, audit, and write the report plus the predictor weight file."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    instance, instance_art, dataset, dataset_art, holdout = _materialize(cfg, out_dir)

    predictor, dual, trace = solve_persuasive(instance, dataset, cfg.game_config())
    save_predictor(predictor, out_dir / "predictor.json", dual)
    trace_art = None
    if cfg.write_trace:
        trace_art = "trace.jsonl"
        save_trace(trace, out_dir / trace_art)

    metrics = _metrics(
        instance,
        dataset,
        predictor,
        cfg.rule(),
        cfg.gamma,
        dual=dual,
        holdout=holdout,
        brute_force=cfg.brute_force,
        lp_bound=cfg.lp_bound,
    )
    report = {
        "kind": "run_report",
        "version": __version__,
        "config": cfg.echo(),
        "solver": {
            "rounds": trace.rounds,
            "stop_reason": trace.stop_reason,
            "window_start": trace.window_start,
            "certified_gap": trace.certified_gap,
        },
        "metrics": metrics,
        "artifacts": {
            "instance": instance_art,
            "dataset": dataset_art,
            "predictor": "predictor.json",
            "trace": trace_art,
        },
        "wall_clock_seconds": time.perf_counter() - started,
    }
    write_json(report, out_dir / "report.json")
    return report


def audit_experiment(cfg: ExperimentConfig, predictor_path: str) -> dict:
    """Audit a saved predictor; the report carries no solver section."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    instance, instance_art, dataset, dataset_art, holdout = _materialize(cfg, out_dir)
    predictor, dual = load_predictor(predictor_path, instance)
    metrics = _metrics(
        instance,
        dataset,
        predictor,
        cfg.rule(),
        cfg.gamma,
        dual=dual,
        holdout=holdout,
        brute_force=cfg.brute_force,
        lp_bound=cfg.lp_bound,
    )
    report = {
        "kind": "run_report",
        "version": __version__,
        "config": cfg.echo(),
        "solver": None,
        "metrics": metrics,
        "artifacts": {
            "instance": instance_art,
            "dataset": dataset_art,
            "predictor": predictor_path,
            "trace": None,
        },
        "wall_clock_seconds": time.perf_counter() - started,
    }
    write_json(report, out_dir / "report.json")
    return report


def _flatten(prefix: str, obj, out: dict):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out[prefix] = obj


def verify_report(report_path) -> list[tuple[str, object, object]]:
    """Recompute every metric in a report from its artifacts.

    Returns the list of (field, stored, recomputed) mismatches beyond 1e-12;
    an empty list means the report is faithful to its artifacts.
    """
    report_path = Path(report_path)
    doc = read_json(report_path)
    base = report_path.parent
    arts = doc["artifacts"]

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    instance = load_instance(resolve(arts["instance"]))
    dataset = load_dataset(resolve(arts["dataset"]), instance)
    predictor, dual = load_predictor(resolve(arts["predictor"]), instance)
    cfg = doc["config"]
    rule = STRICT if cfg["eta"] is None else ResponseRule.quantal(cfg["eta"])
    holdout = (
        load_dataset(resolve(cfg["holdout_path"]), instance) if cfg["holdout_path"] else None
    )
    fresh = _metrics(
        instance,
        dataset,
        predictor,
        rule,
        cfg["gamma"],
        dual=dual,
        holdout=holdout,
        brute_force=cfg["brute_force"],
        lp_bound=cfg["lp_bound"],
    )
    stored_flat: dict = {}
    fresh_flat: dict = {}
    _flatten("", doc["metrics"], stored_flat)
    _flatten("", fresh, fresh_flat)
    mismatches = []
    keys = sorted(set(stored_flat) | set(fresh_flat))
    for key in keys:
        a, b = stored_flat.get(key), fresh_flat.get(key)
        if isinstance(a, float) and isinstance(b, float):
            if abs(a - b) > RECOMPUTE_TOL:
                mismatches.append((key, a, b))
        elif a != b:
            mismatches.append((key, a, b))
    return mismatches


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common_solver_args(p):
    p.add_argument("--gamma", type=float, default=0.0, help="calibration tolerance")
    p.add_argument("--epsilon", type=float, default=0.1, help="target accuracy")
    p.add_argument("--eta", type=float, default=None, help="quantal inverse temperature (absent = strict)")
    p.add_argument("--tmax", type=int, default=None, help="iteration cap override")
    p.add_argument("--holdout", default=None, help="holdout dataset CSV for out-of-sample audits")
    p.add_argument("--bruteforce", action="store_true", help="include the grid-search benchmark")
    p.add_argument("--lp-bound", action="store_true", help="include the signaling LP upper bound")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perscal", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an instance JSON")
    p.add_argument("--fixture", choices=FIXTURES, default=None)
    p.add_argument("--receivers", type=int, default=1)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--hypotheses", type=int, default=3)
    p.add_argument("--contexts", type=int, default=3)
    p.add_argument("--no-mean-hypothesis", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", help="draw a dataset CSV from an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("-n", "--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("solve", help="solve and write predictor + report")
    p.add_argument("--instance", required=True)
    p.add_argument("--dataset", required=True)
    _add_common_solver_args(p)
    p.add_argument("--seed", type=int, default=0, help="solver seed (config echo)")
    p.add_argument("--trace", action="store_true", help="write the per-round trace JSONL")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("audit", help="audit a saved predictor")
    p.add_argument("--instance", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictor", required=True)
    _add_common_solver_args(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("bench", help="benchmark values only")
    p.add_argument("--instance", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--bruteforce", action="store_true")
    p.add_argument("--lp-bound", action="store_true")
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("report", help="verify a report against its artifacts")
    p.add_argument("--path", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "gen":
        if args.fixture:
            spec = InstanceSpec(fixture=args.fixture)
        else:
            spec = InstanceSpec(
                n_receivers=args.receivers,
                n_actions=args.actions,
                d=args.dim,
                n_hypotheses=args.hypotheses,
                n_contexts=args.contexts,
                include_mean_hypothesis=not args.no_mean_hypothesis,
            )
        save_instance(generate_instance(spec, args.seed), args.out)
        print(f"wrote {args.out}")
        return 0

    if args.command == "sample":
        instance = load_instance(args.instance)
        save_dataset(sample_dataset(instance, args.samples, args.seed), args.out)
        print(f"wrote {args.out}")
        return 0

    if args.command == "solve":
        cfg = ExperimentConfig(
            instance_path=args.instance,
            dataset_path=args.dataset,
            gamma=args.gamma,
            epsilon=args.epsilon,
            eta=args.eta,
            t_max=args.tmax,
            solver_seed=args.seed,
            holdout_path=args.holdout,
            brute_force=args.bruteforce,
            lp_bound=args.lp_bound,
            write_trace=args.trace,
            out_dir=args.out,
        )
        report = run_experiment(cfg)
        s = report["solver"]
        m = report["metrics"]
        print(
            f"rounds={s['rounds']} gap={s['certified_gap']:.6g} "
            f"utility={m['utility_train']:.6g} calibration={m['calibration_train']:.6g}"
        )
        print(f"wrote {Path(args.out) / 'report.json'}")
        return 0

    if args.command == "audit":
        cfg = ExperimentConfig(
            instance_path=args.instance,
            dataset_path=args.dataset,
            gamma=args.gamma,
            epsilon=args.epsilon,
            eta=args.eta,
            holdout_path=args.holdout,
            brute_force=args.bruteforce,
            lp_bound=args.lp_bound,
            out_dir=args.out,
        )
        report = audit_experiment(cfg, args.predictor)
        m = report["metrics"]
        print(f"utility={m['utility_train']:.6g} calibration={m['calibration_train']:.6g}")
        print(f"wrote {Path(args.out) / 'report.json'}")
        return 0

    if args.command == "bench":
        instance = load_instance(args.instance)
        dataset = load_dataset(args.dataset, instance)
        rule = STRICT if args.eta is None else ResponseRule.quantal(args.eta)
        out = {"kind": "bench", "gamma": args.gamma, "eta": args.eta}
        if args.bruteforce:
            value = brute_force_opt(instance, dataset, args.gamma, rule)
            out["brute_force_opt"] = {
                "feasible": value != float("-inf"),
                "value": None if value == float("-inf") else value,
            }
        if args.lp_bound:
            out["lp_upper_bound"] = obedient_signaling_upper_bound(instance, dataset)
        write_json(out, args.out)
        print(f"wrote {args.out}")
        return 0

    if args.command == "report":
        mismatches = verify_report(args.path)
        if not mismatches:
            print("report verified: every metric matches its recomputation")
            return 0
        for field, stored, fresh in mismatches:
            print(f"MISMATCH {field}: stored={stored!r} recomputed={fresh!r}")
        return 1

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
