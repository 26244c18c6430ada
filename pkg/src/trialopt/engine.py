"""Outer optimization loop: Sobol initial design, the iterative
fit / acquire / evaluate / update cycle, approximation-set and hypervolume
tracking, checkpoint/resume, and the fixed-design baseline comparator."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .acquisition import PsoConfig, expected_improvement_batch, pso_maximize
from .domain import (
    EVENT_ACCEPT,
    Constraint,
    DesignPoint,
    EvaluationRecord,
    Hypothesis,
    Problem,
)
from .gp import (
    GpConditioningError,
    GpModel,
    KernelParams,
    build_model,
    fit_hyperparameters,
    gp_predict_many,
)
from .montecarlo import (
    SimulationError,
    TrialSimulator,
    derive_replicate_seed,
    mc_estimate,
)
from .pareto import ApproximationSet, hypervolume, pareto_filter
from .sobol import sobol_points  # re-exported: the initial design generator

__all__ = [
    "BudgetConfig", "RunState", "RunAborted", "CheckpointError",
    "sobol_points", "run", "resume_run", "recompute_feasible_set",
    "fixed_design_search", "save_checkpoint", "load_checkpoint",
]

logger = logging.getLogger("trialopt.engine")

RecordCallback = Callable[[EvaluationRecord], None]

CHECKPOINT_FORMAT = "trialopt-checkpoint"
CHECKPOINT_VERSION = 1

# disjoint derived-seed index ranges hanging off the master seed
_PSO_INDEX_BASE = 1 << 31
_VERIFY_INDEX_BASE = 3 << 30

# flag a |z| above this between predicted and realized constraint values
_DIAGNOSTIC_Z = 4.0


class RunAborted(RuntimeError):
    """A run stopped early; state was checkpointed if a path was configured."""

    def __init__(self, message: str, checkpoint_path: str | None = None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class CheckpointError(RuntimeError):
    """Checkpoint file missing, corrupt, or of an unsupported version."""


@dataclass(frozen=True)
class BudgetConfig:
    """Evaluation budget: initial design size, samples per evaluation,
    iteration count and an optional cap on total simulator calls."""

    iterations: int = 30
    n_per_eval: int = 100
    initial_points: int | None = None  # default: 10 per dimension
    max_total_samples: int | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.n_per_eval < 1:
            raise ValueError("n_per_eval must be >= 1")
        if self.initial_points is not None and self.initial_points < 2:
            raise ValueError("initial_points must be >= 2")
        if self.max_total_samples is not None and self.max_total_samples < 1:
            raise ValueError("max_total_samples must be >= 1")

    def resolve_initial_points(self, ndim: int) -> int:
        return self.initial_points if self.initial_points is not None else 10 * ndim


@dataclass
class RunState:
    """Everything the loop knows: records, fitted models, the current
    approximation set and the hypervolume trajectory."""

    problem: Problem
    budget: BudgetConfig
    pso: PsoConfig
    master_seed: int
    records: list[EvaluationRecord] = field(default_factory=list)
    params: dict[str, KernelParams] = field(default_factory=dict)
    models: dict[str, GpModel] = field(default_factory=dict)
    approx_set: ApproximationSet | None = None
    trajectory: list[float] = field(default_factory=list)
    iteration: int = 0
    eval_counter: int = 0
    total_samples: int = 0
    fit_fallbacks: int = 0


def _normalize_simulators(
    problem: Problem,
    simulators: TrialSimulator | Mapping[str, TrialSimulator],
) -> dict[str, TrialSimulator]:
    """One simulator per constrained hypothesis, with the hypothesis' tallied
    event applied (an "accept" hypothesis counts non-rejections)."""
    if callable(simulators):
        base = {name: simulators for name in problem.constrained_hypotheses}
    else:
        base = dict(simulators)
    out: dict[str, TrialSimulator] = {}
    for name in problem.constrained_hypotheses:
        if name not in base:
            raise ValueError(f"no simulator supplied for hypothesis {name!r}")
        sim = base[name]
        if problem.hypotheses[name].event == EVENT_ACCEPT:
            def flipped(point, hyp, rng, _sim=sim):
                return not _sim(point, hyp, rng)
            out[name] = flipped
        else:
            out[name] = sim
    return out


def initial_design(problem: Problem, count: int) -> list[DesignPoint]:
    """Sobol points mapped to the design space, integer dims snapped."""
    unit = sobol_points(problem.space.ndim, count)
    points = []
    for u in unit:
        coords = problem.space.snap(problem.space.denormalize(u))
        points.append(DesignPoint(tuple(coords)))
    return points


def _evaluate(
    state: RunState,
    sims: Mapping[str, TrialSimulator],
    point: DesignPoint,
    hyp_name: str,
    iteration: int,
    workers: int,
    callback: RecordCallback | None,
) -> EvaluationRecord:
    eval_seed = derive_replicate_seed(state.master_seed, state.eval_counter, 0)
    est = mc_estimate(
        sims[hyp_name], point, state.problem.hypotheses[hyp_name],
        state.budget.n_per_eval, seed=eval_seed, workers=workers,
    )
    record = EvaluationRecord(
        point=point, hypothesis=hyp_name, n_samples=est.n_samples,
        successes=est.successes, seed=eval_seed, iteration=iteration,
    )
    state.records.append(record)
    state.eval_counter += 1
    state.total_samples += est.n_samples
    if callback is not None:
        callback(record)
    return record


def _constraint_data(state: RunState, constraint: Constraint):
    """GP training data for one constraint: unit-cube inputs, g-scale targets,
    Monte Carlo noise variances."""
    rows = [r for r in state.records if r.hypothesis == constraint.hypothesis]
    coords = np.array([r.point.coords for r in rows], dtype=float)
    inputs = state.problem.space.normalize(coords)
    targets = np.array([r.estimate - constraint.nominal for r in rows])
    noise = np.array([r.mc_variance for r in rows])
    return inputs, targets, noise


def _update_models(state: RunState, refit: bool) -> None:
    """(Re)fit one GP per constraint, then refresh the feasible set."""
    for con in state.problem.constraints:
        inputs, targets, noise = _constraint_data(state, con)
        params = state.params.get(con.label)
        if refit:
            warm = [params] if params is not None else []
            try:
                params = fit_hyperparameters(inputs, targets, noise, extra_starts=warm)
            except GpConditioningError:
                if params is None:
                    raise
                state.fit_fallbacks += 1
                logger.warning(
                    "hyperparameter fit failed for %r; keeping previous values",
                    con.label,
                )
        if params is None:
            raise GpConditioningError(
                f"no hyperparameters available for constraint {con.label!r}"
            )
        state.params[con.label] = params
        state.models[con.label] = build_model(inputs, targets, noise, params)
    state.approx_set = recompute_feasible_set(state)


def recompute_feasible_set(state: RunState) -> ApproximationSet:
    """Feasibility decided by current GP quantiles at every evaluated point
    (never raw Monte Carlo values), then Pareto-filtered."""
    problem = state.problem
    unique: dict[tuple[float, ...], DesignPoint] = {}
    for rec in state.records:
        unique.setdefault(rec.point.coords, rec.point)
    points = list(unique.values())
    if not points:
        return ApproximationSet((), problem.reference_point)
    unit = problem.space.normalize(np.array([p.coords for p in points]))
    feasible = np.ones(len(points), dtype=bool)
    for con in problem.constraints:
        mean, var = gp_predict_many(state.models[con.label], unit)
        quantile = mean + norm.ppf(con.confidence) * np.sqrt(var)
        feasible &= quantile <= 0.0
    members = [
        (p, tuple(problem.objectives(p.array)))
        for p, ok in zip(points, feasible) if ok
    ]
    return ApproximationSet(tuple(pareto_filter(members)), problem.reference_point)


def _diagnose(state: RunState, point: DesignPoint,
              predictions: Mapping[str, tuple[float, float]]) -> None:
    """Compare predicted and realized constraint values at the chosen point."""
    for con in state.problem.constraints:
        rec = next(
            r for r in reversed(state.records)
            if r.hypothesis == con.hypothesis and r.point.coords == point.coords
        )
        mean, var = predictions[con.label]
        scale = math.sqrt(var + rec.mc_variance)
        if scale <= 0.0:
            continue
        z = (rec.estimate - con.nominal - mean) / scale
        if abs(z) > _DIAGNOSTIC_Z:
            logger.warning(
                "iteration %d: realized %r value %.4f is %.1f sd from GP "
                "prediction %.4f", state.iteration, con.label,
                rec.estimate - con.nominal, z, mean,
            )


def _iterate(
    state: RunState,
    sims: Mapping[str, TrialSimulator],
    iterations: int,
    workers: int,
    callback: RecordCallback | None,
) -> None:
    problem = state.problem
    hyp_names = problem.constrained_hypotheses
    cost_per_iteration = state.budget.n_per_eval * len(hyp_names)
    for _ in range(iterations):
        if (state.budget.max_total_samples is not None
                and state.total_samples + cost_per_iteration
                > state.budget.max_total_samples):
            logger.info("sample cap reached after %d samples", state.total_samples)
            break
        it = state.iteration + 1

        def ei(coords: np.ndarray) -> np.ndarray:
            return expected_improvement_batch(
                coords, state.models, problem.constraints, state.approx_set,
                problem.objectives, state.budget.n_per_eval, problem.space,
            )

        pso_seed = derive_replicate_seed(state.master_seed, _PSO_INDEX_BASE + it, 0)
        best, _ = pso_maximize(ei, problem.space, state.pso, seed=pso_seed)
        point = DesignPoint(tuple(problem.space.snap(best)))

        unit = problem.space.normalize(point.array).reshape(1, -1)
        predictions = {}
        for con in problem.constraints:
            mean, var = gp_predict_many(state.models[con.label], unit)
            predictions[con.label] = (float(mean[0]), float(var[0]))

        for name in hyp_names:
            _evaluate(state, sims, point, name, it, workers, callback)
        state.iteration = it
        _diagnose(state, point, predictions)
        _update_models(state, refit=True)
        state.trajectory.append(hypervolume(state.approx_set))


def run(
    problem: Problem,
    simulators: TrialSimulator | Mapping[str, TrialSimulator],
    budget: BudgetConfig,
    pso: PsoConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    record_callback: RecordCallback | None = None,
    abort_checkpoint: str | Path | None = None,
) -> RunState:
    """Execute the full loop: initial design, then fit/acquire/evaluate cycles.

    Deterministic given the seed regardless of worker count. On a GP
    conditioning failure or simulator error the state is checkpointed to
    ``abort_checkpoint`` (when given) and RunAborted is raised.
    """
    report = problem.validate()
    if not report.ok:
        raise ValueError("invalid problem: " + "; ".join(report.problems))
    if not problem.constraints:
        raise ValueError("at least one constraint is required")
    sims = _normalize_simulators(problem, simulators)
    state = RunState(
        problem=problem, budget=budget, pso=pso or PsoConfig(), master_seed=seed,
    )
    try:
        count = budget.resolve_initial_points(problem.space.ndim)
        for point in initial_design(problem, count):
            for name in problem.constrained_hypotheses:
                _evaluate(state, sims, point, name, 0, workers, record_callback)
        _update_models(state, refit=True)
        state.trajectory.append(hypervolume(state.approx_set))
        _iterate(state, sims, budget.iterations, workers, record_callback)
    except (GpConditioningError, SimulationError) as exc:
        path = _abort(state, exc, abort_checkpoint)
        raise RunAborted(f"run aborted: {exc}", checkpoint_path=path) from exc
    return state


def _abort(state: RunState, exc: Exception, path: str | Path | None) -> str | None:
    if path is None:
        return None
    try:
        save_checkpoint(state, path)
        logger.error("run aborted (%s); checkpoint written to %s", exc, path)
        return str(path)
    except OSError:
        logger.exception("failed to write abort checkpoint")
        return None


def resume_run(
    checkpoint: "CheckpointData | str | Path",
    problem: Problem,
    simulators: TrialSimulator | Mapping[str, TrialSimulator],
    budget: BudgetConfig,
    pso: PsoConfig | None = None,
    iterations: int = 0,
    revised_constraints: Sequence[Constraint] | None = None,
    workers: int = 1,
    record_callback: RecordCallback | None = None,
    abort_checkpoint: str | Path | None = None,
) -> RunState:
    """Rebuild state from a checkpoint and continue for ``iterations`` more.

    With ``revised_constraints`` the GPs are rebuilt against the new g-scale
    (stored hyperparameters, new targets) and the feasible set is recomputed
    from existing records before any further simulation.
    """
    data = checkpoint if isinstance(checkpoint, CheckpointData) else load_checkpoint(checkpoint)
    if revised_constraints is not None:
        labels = {c.label for c in problem.constraints}
        revised = tuple(revised_constraints)
        if {c.label for c in revised} != labels:
            raise ValueError("revised constraints must keep the same labels")
        problem = replace(problem, constraints=revised)
    state = RunState(
        problem=problem, budget=budget, pso=pso or PsoConfig(),
        master_seed=data.master_seed,
        records=list(data.records),
        params=dict(data.params),
        iteration=data.iteration,
        eval_counter=data.eval_counter,
        total_samples=data.total_samples,
        trajectory=list(data.trajectory),
    )
    try:
        _update_models(state, refit=False)
        sims = _normalize_simulators(problem, simulators)
        _iterate(state, sims, iterations, workers, record_callback)
    except (GpConditioningError, SimulationError) as exc:
        path = _abort(state, exc, abort_checkpoint)
        raise RunAborted(f"resume aborted: {exc}", checkpoint_path=path) from exc
    return state


def fixed_design_search(
    problem: Problem,
    simulators: TrialSimulator | Mapping[str, TrialSimulator],
    count: int,
    n_samples: int,
    confidence: float = 0.975,
    seed: int = 0,
    workers: int = 1,
    record_callback: RecordCallback | None = None,
) -> tuple[ApproximationSet, list[EvaluationRecord]]:
    """One-shot comparator: evaluate a Sobol design once per point and keep
    points whose one-sided upper confidence bound clears every constraint.

    ``confidence`` is the one-sided level of the bound ``estimate +
    z(confidence) * mc_se``; 0.975 reproduces a two-sided 95% interval check,
    0.5 collapses the bound onto the raw estimate.
    """
    report = problem.validate()
    if not report.ok:
        raise ValueError("invalid problem: " + "; ".join(report.problems))
    sims = _normalize_simulators(problem, simulators)
    budget = BudgetConfig(iterations=0, n_per_eval=n_samples)
    state = RunState(problem=problem, budget=budget, pso=PsoConfig(), master_seed=seed)
    for point in initial_design(problem, count):
        for name in problem.constrained_hypotheses:
            _evaluate(state, sims, point, name, 0, workers, record_callback)

    z = norm.ppf(confidence)
    by_point: dict[tuple[float, ...], dict[str, EvaluationRecord]] = {}
    order: list[DesignPoint] = []
    for rec in state.records:
        if rec.point.coords not in by_point:
            by_point[rec.point.coords] = {}
            order.append(rec.point)
        by_point[rec.point.coords][rec.hypothesis] = rec
    survivors = []
    for point in order:
        recs = by_point[point.coords]
        ok = True
        for con in problem.constraints:
            rec = recs[con.hypothesis]
            upper = rec.estimate + z * math.sqrt(rec.mc_variance)
            if not upper < con.nominal:
                ok = False
                break
        if ok:
            survivors.append((point, tuple(problem.objectives(point.array))))
    aset = ApproximationSet(tuple(pareto_filter(survivors)), problem.reference_point)
    return aset, state.records


def verify_seed(master_seed: int, index: int) -> int:
    """Seed for the i-th verification evaluation, disjoint from run streams."""
    return derive_replicate_seed(master_seed, _VERIFY_INDEX_BASE + index, 0)


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckpointData:
    """Deserialized checkpoint contents."""

    master_seed: int
    iteration: int
    eval_counter: int
    total_samples: int
    records: tuple[EvaluationRecord, ...]
    params: Mapping[str, KernelParams]
    trajectory: tuple[float, ...]
    config_hash: str | None = None


def save_checkpoint(state: RunState, path: str | Path,
                    config_hash: str | None = None) -> None:
    """Serialize the run state; floats survive the JSON round trip bit-exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "master_seed": state.master_seed,
        "iteration": state.iteration,
        "eval_counter": state.eval_counter,
        "total_samples": state.total_samples,
        "config_hash": config_hash,
        "trajectory": list(state.trajectory),
        "constraints": [
            {"label": c.label, "hypothesis": c.hypothesis,
             "nominal": c.nominal, "confidence": c.confidence}
            for c in state.problem.constraints
        ],
        "gp_params": {
            label: {"sigma": p.sigma, "lengthscales": list(p.lengthscales)}
            for label, p in state.params.items()
        },
        "records": [
            {"point": list(r.point.coords), "hypothesis": r.hypothesis,
             "n_samples": r.n_samples, "successes": r.successes,
             "seed": r.seed, "iteration": r.iteration}
            for r in state.records
        ],
    }
    Path(path).write_bytes(json.dumps(doc).encode("utf-8"))


def load_checkpoint(path: str | Path) -> CheckpointData:
    try:
        doc = json.loads(Path(path).read_bytes())
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a trialopt checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {doc.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    try:
        records = tuple(
            EvaluationRecord(
                point=DesignPoint(tuple(r["point"])),
                hypothesis=r["hypothesis"],
                n_samples=r["n_samples"],
                successes=r["successes"],
                seed=r["seed"],
                iteration=r["iteration"],
            )
            for r in doc["records"]
        )
        params = {
            label: KernelParams(p["sigma"], tuple(p["lengthscales"]))
            for label, p in doc["gp_params"].items()
        }
        return CheckpointData(
            master_seed=doc["master_seed"],
            iteration=doc["iteration"],
            eval_counter=doc["eval_counter"],
            total_samples=doc["total_samples"],
            records=records,
            params=params,
            trajectory=tuple(doc["trajectory"]),
            config_hash=doc.get("config_hash"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
