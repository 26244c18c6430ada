"""Monte Carlo estimation of trial operating characteristics.

Replicate seeds are derived from a counter, not drawn from a shared stream,
so estimates are bitwise reproducible regardless of how replicates are
scheduled across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domain import DesignPoint, Hypothesis, mc_variance_of

# A trial simulator: pure given the rng stream, returns True when the trial
# outcome of interest occurred (conventionally: null hypothesis rejected).
TrialSimulator = Callable[[DesignPoint, Hypothesis, np.random.Generator], bool]

_MASK64 = (1 << 64) - 1


class SimulationError(RuntimeError):
    """A simulator raised; carries the replicate index and seed to reproduce."""

    def __init__(self, message: str, replicate_index: int, seed: int):
        super().__init__(message)
        self.replicate_index = replicate_index
        self.seed = seed


def _splitmix64(x: int) -> int:
    """One step of the SplitMix64 mix; a bijection on 64-bit integers."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_replicate_seed(master_seed: int, eval_index: int, replicate_index: int) -> int:
    """Counter-based 64-bit seed for one replicate of one evaluation.

    Injective over (eval_index, replicate_index) pairs with both indices
    below 2**32: the pair is packed into a 64-bit counter and passed through
    a bijective mixer keyed on the master seed.
    """
    if eval_index < 0 or replicate_index < 0:
        raise ValueError("indices must be non-negative")
    counter = ((eval_index & 0xFFFFFFFF) << 32) | (replicate_index & 0xFFFFFFFF)
    return _splitmix64(counter ^ _splitmix64(master_seed & _MASK64))


@dataclass(frozen=True)
class McEstimate:
    """A Monte Carlo rate estimate with its (clamped) sampling variance."""

    mean: float
    variance: float
    n_samples: int
    successes: int


def mc_estimate(
    sim: TrialSimulator,
    point: DesignPoint,
    hypothesis: Hypothesis,
    n_samples: int,
    seed: int,
    eval_index: int = 0,
    workers: int = 1,
) -> McEstimate:
    """Estimate the probability that ``sim`` reports True.

    Runs ``n_samples`` independent replicates, each with its own derived rng,
    and returns the success fraction with the clamped binomial variance. The
    result is identical for any worker count because replicate seeds are
    derived from (eval_index, replicate index), never consumed sequentially.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")

    def run_chunk(lo: int, hi: int) -> int:
        count = 0
        for i in range(lo, hi):
            rep_seed = derive_replicate_seed(seed, eval_index, i)
            rng = np.random.default_rng(rep_seed)
            try:
                outcome = sim(point, hypothesis, rng)
            except SimulationError:
                raise
            except Exception as exc:
                raise SimulationError(
                    f"simulator failed at replicate {i} (seed {rep_seed}): {exc}",
                    replicate_index=i,
                    seed=rep_seed,
                ) from exc
            count += bool(outcome)
        return count

    if workers <= 1:
        successes = run_chunk(0, n_samples)
    else:
        bounds = np.linspace(0, n_samples, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run_chunk, int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:])
            ]
            counts: list[int] = []
            errors: list[SimulationError] = []
            for fut in futures:
                try:
                    counts.append(fut.result())
                except SimulationError as exc:
                    errors.append(exc)
            if errors:
                # deterministic: surface the earliest failing replicate
                raise min(errors, key=lambda e: e.replicate_index)
        successes = sum(counts)

    return McEstimate(
        mean=successes / n_samples,
        variance=mc_variance_of(successes, n_samples),
        n_samples=n_samples,
        successes=successes,
    )
