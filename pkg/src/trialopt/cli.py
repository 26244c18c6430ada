"""Command-line front end: parse a declarative problem config, run or resume
optimizations, run the fixed-design baseline, and emit machine-readable
reports.

A run directory contains: config.normalized (the effective config),
evals.log (append-only, one JSON record per evaluation), pareto.csv,
trajectory.csv, checkpoint.bin and report.txt.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import shutil
import sys
import time
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from . import engine
from .acquisition import PsoConfig
from .domain import (
    Constraint,
    DesignSpace,
    Dimension,
    EvaluationRecord,
    Hypothesis,
    ObjectiveSpec,
    Problem,
    clamped_rate,
)
from .engine import BudgetConfig, CheckpointError, RunAborted, RunState
from .gp import gp_predict_many
from .montecarlo import mc_estimate
from .simlib import Scenario, UnknownScenarioError, get_scenario

logger = logging.getLogger("trialopt.cli")

CONFIG_NAME = "config.normalized"
LOG_NAME = "evals.log"
PARETO_NAME = "pareto.csv"
TRAJECTORY_NAME = "trajectory.csv"
CHECKPOINT_NAME = "checkpoint.bin"
REPORT_NAME = "report.txt"
VERIFIED_NAME = "pareto_verified.csv"
LOCK_NAME = ".lock"


class ConfigError(Exception):
    """Config could not be used; carries every problem found, not just the first."""

    def __init__(self, problems: Sequence[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

_BUDGET_DEFAULTS = {"n_per_eval": 100, "iterations": 30, "max_total_samples": None}
_PSO_DEFAULTS = {"swarm_size": 40, "iterations": 200, "inertia": 0.729,
                 "cognitive": 1.49445, "social": 1.49445, "seed": 0}


def load_config(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be an object"])
    return raw


def normalize_config(raw: Mapping) -> dict:
    """Fill defaults and validate; raises ConfigError listing every problem."""
    problems: list[str] = []
    cfg: dict = {}

    scenario_name = raw.get("scenario")
    scenario = None
    if not isinstance(scenario_name, str):
        problems.append("'scenario' (string) is required")
    else:
        try:
            scenario = get_scenario(scenario_name)
        except UnknownScenarioError as exc:
            problems.append(str(exc))
    cfg["scenario"] = scenario_name

    dims = raw.get("design_space")
    cfg["design_space"] = []
    if not isinstance(dims, list) or not dims:
        problems.append("'design_space' must be a non-empty list")
    else:
        for i, d in enumerate(dims):
            if not isinstance(d, dict) or not {"name", "low", "up"} <= set(d):
                problems.append(f"design_space[{i}] needs name/low/up")
                continue
            cfg["design_space"].append({
                "name": d["name"], "low": float(d["low"]), "up": float(d["up"]),
                "kind": d.get("kind", "continuous"),
            })

    hyps = raw.get("hypotheses")
    cfg["hypotheses"] = []
    if not isinstance(hyps, list) or not hyps:
        problems.append("'hypotheses' must be a non-empty list")
    else:
        for i, h in enumerate(hyps):
            if not isinstance(h, dict) or "name" not in h or "params" not in h:
                problems.append(f"hypotheses[{i}] needs name and params")
                continue
            entry = {"name": h["name"],
                     "params": {k: float(v) for k, v in dict(h["params"]).items()},
                     "event": h.get("event", "reject")}
            cfg["hypotheses"].append(entry)
            if scenario is not None:
                missing = [p for p in scenario.hypothesis_params
                           if p not in entry["params"]]
                if missing:
                    problems.append(
                        f"hypothesis {entry['name']!r} missing scenario "
                        f"parameter(s): {', '.join(missing)}"
                    )

    cons = raw.get("constraints")
    cfg["constraints"] = []
    if not isinstance(cons, list) or not cons:
        problems.append("'constraints' must be a non-empty list")
    else:
        hyp_names = {h["name"] for h in cfg["hypotheses"]}
        for i, c in enumerate(cons):
            if not isinstance(c, dict) or not {"label", "hypothesis", "nominal"} <= set(c):
                problems.append(f"constraints[{i}] needs label/hypothesis/nominal")
                continue
            entry = {
                "label": c["label"], "hypothesis": c["hypothesis"],
                "nominal": float(c["nominal"]),
                "confidence": float(c.get("confidence", 0.9)),
            }
            cfg["constraints"].append(entry)
            if not 0.0 < entry["nominal"] < 1.0:
                problems.append(
                    f"constraint {entry['label']!r} nominal {entry['nominal']} "
                    "outside (0, 1)"
                )
            if not 0.5 < entry["confidence"] < 1.0:
                problems.append(
                    f"constraint {entry['label']!r} confidence "
                    f"{entry['confidence']} outside (0.5, 1)"
                )
            if entry["hypothesis"] not in hyp_names:
                problems.append(
                    f"constraint {entry['label']!r} references unknown "
                    f"hypothesis {entry['hypothesis']!r}"
                )

    obj = raw.get("objectives")
    if not isinstance(obj, dict):
        problems.append("'objectives' must be an object")
        cfg["objectives"] = {}
    elif "formula" in obj:
        cfg["objectives"] = {"formula": obj["formula"]}
        if scenario is not None and obj["formula"] not in scenario.objective_formulas:
            known = ", ".join(sorted(scenario.objective_formulas))
            problems.append(
                f"objective formula {obj['formula']!r} unknown to scenario "
                f"{scenario.name!r} (known: {known})"
            )
    elif "coefficients" in obj and "labels" in obj:
        coeffs = [[float(v) for v in row] for row in obj["coefficients"]]
        labels = list(obj["labels"])
        cfg["objectives"] = {"labels": labels, "coefficients": coeffs}
        if len(coeffs) != len(labels):
            problems.append("objectives: one coefficient row per label required")
        if cfg["design_space"] and any(
            len(row) != len(cfg["design_space"]) for row in coeffs
        ):
            problems.append("objectives: coefficient rows must match design dimensions")
    else:
        problems.append("'objectives' needs either a formula or labels+coefficients")
        cfg["objectives"] = {}

    ref = raw.get("reference_point")
    if not isinstance(ref, list) or not ref:
        problems.append("'reference_point' must be a non-empty list")
        cfg["reference_point"] = []
    else:
        cfg["reference_point"] = [float(v) for v in ref]

    budget = dict(_BUDGET_DEFAULTS)
    budget["initial_points"] = None
    budget.update(raw.get("budget", {}) or {})
    cfg["budget"] = {k: budget[k] for k in
                     ("initial_points", "n_per_eval", "iterations", "max_total_samples")}

    pso = dict(_PSO_DEFAULTS)
    pso.update(raw.get("pso", {}) or {})
    cfg["pso"] = {k: pso[k] for k in _PSO_DEFAULTS}

    cfg["seed"] = int(raw.get("seed", 0))

    if problems:
        raise ConfigError(problems)
    return cfg


def canonical_dumps(cfg: Mapping) -> str:
    return json.dumps(cfg, sort_keys=True, indent=2)


def config_hash(cfg: Mapping) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_problem(cfg: Mapping) -> tuple[Problem, dict, Scenario]:
    """Turn a normalized config into domain objects plus per-hypothesis sims.

    Raises ConfigError listing every structural problem found.
    """
    scenario = get_scenario(cfg["scenario"])
    space = DesignSpace(tuple(
        Dimension(d["name"], d["low"], d["up"], d["kind"])
        for d in cfg["design_space"]
    ))
    hypotheses = {
        h["name"]: Hypothesis(h["name"], h["params"], h.get("event", "reject"))
        for h in cfg["hypotheses"]
    }
    constraints = tuple(
        Constraint(c["label"], c["hypothesis"], c["nominal"], c["confidence"])
        for c in cfg["constraints"]
    )

    obj_cfg = cfg["objectives"]
    if "formula" in obj_cfg:
        labels, formula = scenario.objective_formulas[obj_cfg["formula"]]
        names = space.names

        def evaluate(coords: np.ndarray, _f=formula, _names=names) -> np.ndarray:
            return np.asarray(_f(dict(zip(_names, coords))), dtype=float)
    else:
        labels = tuple(obj_cfg["labels"])
        matrix = np.asarray(obj_cfg["coefficients"], dtype=float)

        def evaluate(coords: np.ndarray, _m=matrix) -> np.ndarray:
            return _m @ np.asarray(coords, dtype=float)

    objectives = ObjectiveSpec(tuple(labels), evaluate)
    problem = Problem(space, objectives, constraints, hypotheses,
                      tuple(cfg["reference_point"]))

    problems = list(problem.validate().problems)
    problems.extend(scenario.space_problems(space))
    if problems:
        raise ConfigError(problems)

    sim = scenario.simulator(space)
    simulators = {name: sim for name in problem.constrained_hypotheses}
    return problem, simulators, scenario


def budget_from_config(cfg: Mapping) -> BudgetConfig:
    b = cfg["budget"]
    return BudgetConfig(
        iterations=int(b["iterations"]),
        n_per_eval=int(b["n_per_eval"]),
        initial_points=None if b["initial_points"] is None else int(b["initial_points"]),
        max_total_samples=(None if b["max_total_samples"] is None
                           else int(b["max_total_samples"])),
    )


def pso_from_config(cfg: Mapping) -> PsoConfig:
    p = cfg["pso"]
    return PsoConfig(
        swarm_size=int(p["swarm_size"]), iterations=int(p["iterations"]),
        inertia=float(p["inertia"]), cognitive=float(p["cognitive"]),
        social=float(p["social"]), seed=int(p["seed"]),
    )


# ---------------------------------------------------------------------------
# run-directory plumbing
# ---------------------------------------------------------------------------

class RunLock:
    """One process owns one run directory; a lock file prevents concurrent writers."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / LOCK_NAME
        self._fd = None

    def __enter__(self):
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                [f"run directory is locked by another process ({self.path}); "
                 "remove the lock file if that process is gone"]
            ) from None
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc_info):
        if self._fd is not None:
            os.close(self._fd)
            self.path.unlink(missing_ok=True)
        return False


def record_writer(log_path: Path):
    """Append-only newline-delimited record log; flushed per record so a
    crashed run loses at most one evaluation."""
    handle = open(log_path, "a")

    def write(rec: EvaluationRecord):
        line = json.dumps({
            "iteration": rec.iteration,
            "hypothesis": rec.hypothesis,
            "point": list(rec.point.coords),
            "n_samples": rec.n_samples,
            "successes": rec.successes,
            "estimate": rec.estimate,
            "mc_variance": rec.mc_variance,
            "seed": rec.seed,
        })
        handle.write(line + "\n")
        handle.flush()

    return handle, write


def _pooled_estimates(state: RunState, point_coords: tuple[float, ...],
                      hyp_name: str) -> tuple[float, int]:
    """Pooled raw MC estimate and total N across records at one point."""
    total_n = 0
    total_s = 0
    for rec in state.records:
        if rec.point.coords == point_coords and rec.hypothesis == hyp_name:
            total_n += rec.n_samples
            total_s += rec.successes
    return (total_s / total_n if total_n else float("nan")), total_n


def write_pareto_csv(path: Path, problem: Problem, state: RunState) -> None:
    space = problem.space
    header = list(space.names) + list(problem.objectives.labels)
    for con in problem.constraints:
        header += [f"quantile[{con.label}]", f"estimate[{con.label}]",
                   f"n[{con.label}]"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for point, objs in state.approx_set.members:
            row = list(point.coords) + list(objs)
            unit = space.normalize(point.array).reshape(1, -1)
            for con in problem.constraints:
                mean, var = gp_predict_many(state.models[con.label], unit)
                q = float(mean[0]) + norm.ppf(con.confidence) * float(np.sqrt(var[0]))
                est, n = _pooled_estimates(state, point.coords, con.hypothesis)
                row += [q, est, n]
            writer.writerow(row)


def write_baseline_csv(path: Path, problem: Problem, aset, records) -> None:
    by_point = {}
    for rec in records:
        by_point.setdefault(rec.point.coords, {})[rec.hypothesis] = rec
    header = list(problem.space.names) + list(problem.objectives.labels)
    for con in problem.constraints:
        header += [f"estimate[{con.label}]", f"n[{con.label}]"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for point, objs in aset.members:
            row = list(point.coords) + list(objs)
            for con in problem.constraints:
                rec = by_point[point.coords][con.hypothesis]
                row += [rec.estimate, rec.n_samples]
            writer.writerow(row)


def write_trajectory_csv(path: Path, trajectory: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "hypervolume"])
        for i, h in enumerate(trajectory):
            writer.writerow([i, h])


def write_report(path: Path, problem: Problem, state: RunState,
                 elapsed: float, cfg_hash: str) -> None:
    lines = [
        "trialopt run report",
        f"config hash: {cfg_hash}",
        f"design space: {', '.join(problem.space.names)} "
        f"({problem.space.ndim} dimensions)",
        f"objectives: {', '.join(problem.objectives.labels)}",
        f"constraints: " + "; ".join(
            f"{c.label}: rate under {c.hypothesis} <= {c.nominal} "
            f"(confidence {c.confidence})" for c in problem.constraints
        ),
        f"iterations completed: {state.iteration}",
        f"total simulator samples: {state.total_samples}",
        f"final hypervolume: {state.trajectory[-1]!r}",
        f"approximation set size: {len(state.approx_set)}",
        f"elapsed seconds: {elapsed:.2f}",
        "",
        "approximation set (design values | objectives):",
    ]
    for point, objs in state.approx_set.members:
        lines.append(
            "  " + ", ".join(f"{n}={v:g}" for n, v in zip(problem.space.names, point.coords))
            + " | " + ", ".join(f"{l}={v:g}" for l, v in zip(problem.objectives.labels, objs))
        )
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _apply_overrides(cfg: dict, seed=None, iterations=None, n_per_eval=None) -> dict:
    if seed is not None:
        cfg["seed"] = int(seed)
    if iterations is not None:
        cfg["budget"]["iterations"] = int(iterations)
    if n_per_eval is not None:
        cfg["budget"]["n_per_eval"] = int(n_per_eval)
    return cfg


def cmd_run(config_path: str, out_dir: str, seed=None, iterations=None,
            n_per_eval=None, workers: int = 1) -> int:
    cfg = _apply_overrides(normalize_config(load_config(config_path)),
                           seed, iterations, n_per_eval)
    problem, simulators, _ = build_problem(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if (out / CHECKPOINT_NAME).exists():
        raise ConfigError(
            [f"{out / CHECKPOINT_NAME} already exists; use 'resume' or a fresh "
             "directory"]
        )
    cfg_hash = config_hash(cfg)
    with RunLock(out):
        (out / CONFIG_NAME).write_text(canonical_dumps(cfg) + "\n")
        handle, write = record_writer(out / LOG_NAME)
        t0 = time.perf_counter()
        try:
            state = engine.run(
                problem, simulators, budget_from_config(cfg),
                pso=pso_from_config(cfg), seed=cfg["seed"], workers=workers,
                record_callback=write,
                abort_checkpoint=out / CHECKPOINT_NAME,
            )
        except RunAborted as exc:
            print(f"error: {exc}", file=sys.stderr)
            if exc.checkpoint_path:
                print(f"resumable checkpoint: {exc.checkpoint_path}", file=sys.stderr)
            return 1
        finally:
            handle.close()
        elapsed = time.perf_counter() - t0
        engine.save_checkpoint(state, out / CHECKPOINT_NAME, config_hash=cfg_hash)
        write_pareto_csv(out / PARETO_NAME, problem, state)
        write_trajectory_csv(out / TRAJECTORY_NAME, state.trajectory)
        write_report(out / REPORT_NAME, problem, state, elapsed, cfg_hash)
    return 0


def _parse_nominals(pairs: Sequence[str]) -> dict[str, float]:
    out = {}
    problems = []
    for pair in pairs:
        if "=" not in pair:
            problems.append(f"--nominal needs LABEL=VALUE, got {pair!r}")
            continue
        label, _, value = pair.partition("=")
        try:
            out[label] = float(value)
        except ValueError:
            problems.append(f"--nominal {label}: {value!r} is not a number")
    if problems:
        raise ConfigError(problems)
    return out


def cmd_resume(checkpoint_path: str, iterations: int = 0,
               nominals: Mapping[str, float] | None = None,
               out_dir: str | None = None, workers: int = 1) -> int:
    ckpt_path = Path(checkpoint_path)
    run_dir = ckpt_path.parent
    cfg_path = run_dir / CONFIG_NAME
    if not cfg_path.exists():
        raise ConfigError([f"no {CONFIG_NAME} found next to {checkpoint_path}"])
    cfg = normalize_config(json.loads(cfg_path.read_text()))

    data = engine.load_checkpoint(ckpt_path)
    if data.config_hash is not None and data.config_hash != config_hash(cfg):
        raise ConfigError(
            ["checkpoint was produced by a different config "
             f"(hash {data.config_hash[:12]}... != {config_hash(cfg)[:12]}...)"]
        )

    nominals = dict(nominals or {})
    if nominals:
        labels = {c["label"] for c in cfg["constraints"]}
        unknown = sorted(set(nominals) - labels)
        if unknown:
            raise ConfigError(
                [f"--nominal references unknown constraint {u!r}" for u in unknown]
            )
        for c in cfg["constraints"]:
            if c["label"] in nominals:
                c["nominal"] = nominals[c["label"]]

    problem, simulators, _ = build_problem(cfg)

    out = Path(out_dir) if out_dir else run_dir
    out.mkdir(parents=True, exist_ok=True)
    if out != run_dir:
        # carry history over so the log stays complete in the new directory
        shutil.copyfile(run_dir / LOG_NAME, out / LOG_NAME)
    cfg_hash = config_hash(cfg)
    with RunLock(out):
        (out / CONFIG_NAME).write_text(canonical_dumps(cfg) + "\n")
        handle, write = record_writer(out / LOG_NAME)
        t0 = time.perf_counter()
        try:
            state = engine.resume_run(
                data, problem, simulators, budget_from_config(cfg),
                pso=pso_from_config(cfg), iterations=iterations,
                revised_constraints=problem.constraints if nominals else None,
                workers=workers, record_callback=write,
                abort_checkpoint=out / CHECKPOINT_NAME,
            )
        except RunAborted as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        finally:
            handle.close()
        elapsed = time.perf_counter() - t0
        engine.save_checkpoint(state, out / CHECKPOINT_NAME, config_hash=cfg_hash)
        write_pareto_csv(out / PARETO_NAME, problem, state)
        write_trajectory_csv(out / TRAJECTORY_NAME, state.trajectory)
        write_report(out / REPORT_NAME, problem, state, elapsed, cfg_hash)
    return 0


def cmd_baseline(config_path: str, out_dir: str, seed=None, count: int = 50,
                 n_per_eval=None, confidence: float = 0.975,
                 workers: int = 1) -> int:
    cfg = _apply_overrides(normalize_config(load_config(config_path)),
                           seed, None, n_per_eval)
    problem, simulators, _ = build_problem(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_hash = config_hash(cfg)
    with RunLock(out):
        (out / CONFIG_NAME).write_text(canonical_dumps(cfg) + "\n")
        handle, write = record_writer(out / LOG_NAME)
        try:
            aset, records = engine.fixed_design_search(
                problem, simulators, count=count,
                n_samples=int(cfg["budget"]["n_per_eval"]),
                confidence=confidence, seed=cfg["seed"], workers=workers,
                record_callback=write,
            )
        finally:
            handle.close()
        from .pareto import hypervolume
        hv = hypervolume(aset)
        write_baseline_csv(out / PARETO_NAME, problem, aset, records)
        lines = [
            "trialopt baseline report",
            f"config hash: {cfg_hash}",
            f"points evaluated: {count}",
            f"samples per evaluation: {cfg['budget']['n_per_eval']}",
            f"confidence bound level: {confidence}",
            f"surviving nondominated solutions: {len(aset)}",
            f"hypervolume: {hv!r}",
        ]
        (out / REPORT_NAME).write_text("\n".join(lines) + "\n")
    return 0


def cmd_verify(run_dir: str, n_verify: int = 100000, workers: int = 1) -> int:
    run = Path(run_dir)
    cfg_path = run / CONFIG_NAME
    if not cfg_path.exists():
        raise ConfigError([f"no {CONFIG_NAME} in {run_dir}"])
    cfg = normalize_config(json.loads(cfg_path.read_text()))
    problem, simulators, _ = build_problem(cfg)
    data = engine.load_checkpoint(run / CHECKPOINT_NAME)
    state = engine.resume_run(data, problem, simulators,
                              budget_from_config(cfg), pso=pso_from_config(cfg),
                              iterations=0)

    wrapped = engine._normalize_simulators(problem, simulators)
    header = list(problem.space.names) + list(problem.objectives.labels)
    for con in problem.constraints:
        header += [f"verified[{con.label}]", f"ci_low[{con.label}]",
                   f"ci_high[{con.label}]"]
    rows = []
    index = 0
    for point, objs in state.approx_set.members:
        row = list(point.coords) + list(objs)
        for con in problem.constraints:
            est = mc_estimate(
                wrapped[con.hypothesis], point,
                problem.hypotheses[con.hypothesis], n_verify,
                seed=engine.verify_seed(data.master_seed, index),
                workers=workers,
            )
            index += 1
            half = 1.96 * np.sqrt(est.variance)
            row += [est.mean, est.mean - half, est.mean + half]
        rows.append(row)
    with open(run / VERIFIED_NAME, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trialopt",
        description="Surrogate-assisted optimization of simulation-based "
                    "trial designs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an optimization from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--iterations", type=int)
    p_run.add_argument("--n-per-eval", type=int)
    p_run.add_argument("--workers", type=int, default=1)

    p_res = sub.add_parser("resume", help="continue from a checkpoint")
    p_res.add_argument("checkpoint")
    p_res.add_argument("--iterations", type=int, default=0,
                       help="additional iterations to run")
    p_res.add_argument("--nominal", action="append", default=[],
                       metavar="LABEL=VALUE", help="revise a constraint bound")
    p_res.add_argument("--out", help="write outputs to a different directory")
    p_res.add_argument("--workers", type=int, default=1)

    p_base = sub.add_parser("baseline", help="fixed-design comparator search")
    p_base.add_argument("config")
    p_base.add_argument("--out", required=True)
    p_base.add_argument("--seed", type=int)
    p_base.add_argument("--count", type=int, default=50,
                        help="number of Sobol points to evaluate")
    p_base.add_argument("--n-per-eval", type=int)
    p_base.add_argument("--confidence", type=float, default=0.975,
                        help="one-sided level of the discard bound")
    p_base.add_argument("--workers", type=int, default=1)

    p_ver = sub.add_parser("verify", help="re-estimate the approximation set "
                                          "with a large sample budget")
    p_ver.add_argument("run_dir")
    p_ver.add_argument("--n-verify", type=int, default=100000)
    p_ver.add_argument("--workers", type=int, default=1)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, seed=args.seed,
                           iterations=args.iterations,
                           n_per_eval=args.n_per_eval, workers=args.workers)
        if args.command == "resume":
            return cmd_resume(args.checkpoint, iterations=args.iterations,
                              nominals=_parse_nominals(args.nominal),
                              out_dir=args.out, workers=args.workers)
        if args.command == "baseline":
            return cmd_baseline(args.config, args.out, seed=args.seed,
                                count=args.count, n_per_eval=args.n_per_eval,
                                confidence=args.confidence, workers=args.workers)
        if args.command == "verify":
            return cmd_verify(args.run_dir, n_verify=args.n_verify,
                              workers=args.workers)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except (CheckpointError, UnknownScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
