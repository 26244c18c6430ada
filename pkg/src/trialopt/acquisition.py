"""Acquisition machinery: feasibility quantiles, the noisy-evaluation
predictive update, constrained hypervolume expected improvement, and the
particle-swarm inner maximizer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .domain import Constraint, DesignSpace, ObjectiveSpec
from .gp import GpModel, gp_predict_many
from .pareto import ApproximationSet, HviCalculator


def feasibility_quantile(m: float, s2: float, p: float) -> float:
    """Upper 100*p% quantile of N(m, s2): m + Phi^-1(p) * s."""
    return m + norm.ppf(p) * np.sqrt(s2)


def quantile_update(m, s2, omega2_plan, p):
    """Predictive distribution of the post-evaluation feasibility quantile.

    For a planned evaluation with Monte Carlo variance ``omega2_plan`` the
    revised quantile is normal with
    ``m+ = m + Phi^-1(p) * sqrt(omega2 * s2 / (omega2 + s2))`` and
    ``s+^2 = s2^2 / (omega2 + s2)``. Accepts scalars or arrays.
    """
    m = np.asarray(m, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    omega2 = np.asarray(omega2_plan, dtype=float)
    denom = omega2 + s2
    safe = np.where(denom > 0, denom, 1.0)
    s2_plus = np.where(denom > 0, s2 * s2 / safe, 0.0)
    m_plus = m + norm.ppf(p) * np.sqrt(np.where(denom > 0, omega2 * s2 / safe, 0.0))
    if m_plus.ndim == 0:
        return float(m_plus), float(s2_plus)
    return m_plus, s2_plus


def prob_feasible_after(m_plus, s2_plus):
    """Phi(-m+ / s+); degenerates to an indicator when s+^2 = 0."""
    m_plus = np.asarray(m_plus, dtype=float)
    s2_plus = np.asarray(s2_plus, dtype=float)
    s = np.sqrt(s2_plus)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s > 0, norm.cdf(-m_plus / np.where(s > 0, s, 1.0)),
                       (m_plus <= 0).astype(float))
    return float(out) if out.ndim == 0 else out


def expected_improvement_batch(
    coords: np.ndarray,
    models: Mapping[str, GpModel],
    constraints: Sequence[Constraint],
    current: ApproximationSet,
    objectives: ObjectiveSpec,
    planned_n: int,
    space: DesignSpace,
) -> np.ndarray:
    """EI for each row of ``coords`` (raw design coordinates).

    EI(x) = [H(A*) - H(A)] * prod_j Phi(-m_{j,+} / s_{j,+}), where the
    per-constraint planned-evaluation variance uses the GP mean mapped back
    to the rate scale and clamped away from {0, 1}.
    """
    X = np.atleast_2d(np.asarray(coords, dtype=float))
    unit = space.normalize(X)
    prob = np.ones(X.shape[0])
    for con in constraints:
        mean, var = gp_predict_many(models[con.label], unit)
        rate = np.clip(
            mean + con.nominal,
            1.0 / (2.0 * planned_n),
            1.0 - 1.0 / (2.0 * planned_n),
        )
        omega2 = rate * (1.0 - rate) / planned_n
        m_plus, s2_plus = quantile_update(mean, var, omega2, con.confidence)
        prob *= prob_feasible_after(m_plus, s2_plus)
    hvi = HviCalculator(current)
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        if prob[i] <= 0.0:
            out[i] = 0.0
            continue
        out[i] = hvi(objectives(X[i])) * prob[i]
    return out


def expected_improvement(
    candidate: Sequence[float],
    models: Mapping[str, GpModel],
    constraints: Sequence[Constraint],
    current: ApproximationSet,
    objectives: ObjectiveSpec,
    planned_n: int,
    space: DesignSpace,
) -> float:
    """Constrained hypervolume expected improvement at a single point."""
    return float(
        expected_improvement_batch(
            np.asarray(candidate, dtype=float).reshape(1, -1),
            models, constraints, current, objectives, planned_n, space,
        )[0]
    )


@dataclass(frozen=True)
class PsoConfig:
    """Global-best particle swarm settings (constriction-style defaults)."""

    swarm_size: int = 40
    iterations: int = 200
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 < self.inertia < 1.0:
            raise ValueError("inertia must be in (0, 1)")
        if self.cognitive <= 0 or self.social <= 0:
            raise ValueError("cognitive and social weights must be positive")


# velocities are clamped to this fraction of each dimension's range
_VELOCITY_CLAMP = 0.5


def pso_maximize(
    f: Callable[[np.ndarray], np.ndarray],
    bounds: DesignSpace,
    config: PsoConfig | None = None,
    seed: int | None = None,
) -> tuple[np.ndarray, float]:
    """Maximize ``f`` over the box with synchronous global-best PSO.

    ``f`` takes an (m, D) array of positions and returns m values. Integer
    dimensions are treated as continuous; positions are clipped to bounds.
    Deterministic given the seed; returns the best position visited and its
    value.
    """
    cfg = config or PsoConfig()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    lower, upper = bounds.lower, bounds.upper
    span = upper - lower
    vmax = _VELOCITY_CLAMP * span
    m, d = cfg.swarm_size, bounds.ndim

    pos = lower + rng.random((m, d)) * span
    vel = (rng.random((m, d)) * 2.0 - 1.0) * vmax
    val = np.asarray(f(pos), dtype=float)
    pbest = pos.copy()
    pbest_val = val.copy()
    g = int(np.argmax(val))
    gbest = pos[g].copy()
    gbest_val = float(val[g])

    for _ in range(cfg.iterations):
        r1 = rng.random((m, d))
        r2 = rng.random((m, d))
        vel = (cfg.inertia * vel
               + cfg.cognitive * r1 * (pbest - pos)
               + cfg.social * r2 * (gbest - pos))
        vel = np.clip(vel, -vmax, vmax)
        pos = np.clip(pos + vel, lower, upper)
        val = np.asarray(f(pos), dtype=float)
        improved = val > pbest_val
        pbest[improved] = pos[improved]
        pbest_val[improved] = val[improved]
        g = int(np.argmax(pbest_val))
        if pbest_val[g] > gbest_val:
            gbest_val = float(pbest_val[g])
            gbest = pbest[g].copy()

    return gbest, gbest_val
