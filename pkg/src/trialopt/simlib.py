"""Built-in trial scenarios with independent power oracles.

Each scenario pairs a simulator (one replicate of data generation plus
analysis, returning the rejection indicator) with an oracle computing the
true rejection probability in closed form or by numeric integration, so
optimizer output can be verified against ground truth.

The clustered scenarios use a balanced continuous-outcome layout: therapists
are the intervention-arm clusters, doctors the control-arm clusters, with
half the doctors serving each arm. Caseloads are balanced and treated as
fractional (cluster residual means are simulated at variance sigma_W^2 per
caseload), which keeps every integer design point in a search box valid and
the oracles exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import owens_t
from scipy.stats import binom, chi2, norm
from scipy.stats import t as student_t

from .domain import DesignPoint, DesignSpace, Hypothesis
from .montecarlo import TrialSimulator

Params = Mapping[str, float]


class UnknownScenarioError(ValueError):
    """Requested scenario name is not registered."""


# ---------------------------------------------------------------------------
# probability helpers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _z_crit_two_sided(alpha: float) -> float:
    return float(norm.ppf(1.0 - alpha / 2.0))


@lru_cache(maxsize=256)
def _t_crit_two_sided(alpha: float, df: int) -> float:
    return float(student_t.ppf(1.0 - alpha / 2.0, df))


@lru_cache(maxsize=8)
def _gl_unit_nodes(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def bvn_cdf(h: float, k: float, rho: float) -> float:
    """P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.

    Uses Owen's T function, accurate to ~1e-14. Exact zeros in h or k are
    nudged by 1e-13 to stay off the removable discontinuity in the formula.
    """
    if rho >= 1.0:
        return float(norm.cdf(min(h, k)))
    if rho <= -1.0:
        return float(max(0.0, norm.cdf(h) + norm.cdf(k) - 1.0))
    if rho == 0.0:
        return float(norm.cdf(h) * norm.cdf(k))
    if h == 0.0:
        h = 1e-13
    if k == 0.0:
        k = 1e-13
    r = math.sqrt(1.0 - rho * rho)
    delta = 0.5 if h * k < 0.0 else 0.0
    return float(
        0.5 * (norm.cdf(h) + norm.cdf(k))
        - owens_t(h, (k - rho * h) / (h * r))
        - owens_t(k, (h - rho * k) / (k * r))
        - delta
    )


def bvn_both_two_sided(crit: float, mu1: float, mu2: float, rho: float) -> float:
    """P(|Z1| > crit and |Z2| > crit) for (Z1, Z2) ~ BVN((mu1, mu2), 1, rho)."""
    def F(a, b):
        return bvn_cdf(a - mu1, b - mu2, rho)

    p1_in = norm.cdf(crit - mu1) - norm.cdf(-crit - mu1)
    p2_in = norm.cdf(crit - mu2) - norm.cdf(-crit - mu2)
    both_in = F(crit, crit) - F(-crit, crit) - F(crit, -crit) + F(-crit, -crit)
    return float(max(0.0, 1.0 - p1_in - p2_in + both_in))


def bvn_either_one_sided(crit: float, mu1: float, mu2: float, rho: float) -> float:
    """P(Z1 > crit or Z2 > crit) for (Z1, Z2) ~ BVN((mu1, mu2), 1, rho)."""
    return float(min(1.0, max(0.0, 1.0 - bvn_cdf(crit - mu1, crit - mu2, rho))))


def pooled_t_power(
    effect: float,
    var1: float,
    count1: int,
    var2: float,
    count2: int,
    alpha: float,
    nodes: int = 96,
) -> float:
    """Rejection probability of the pooled two-sample t-test on cluster means.

    Group g supplies ``count_g`` independent N(mean_g, var_g) values; the
    pooled statistic is compared with t_{1-alpha/2, count1+count2-2}. The
    power is computed exactly by integrating the conditional normal
    probability over the two within-group chi-square sums (Gauss-Legendre on
    the quantile scale). Coincides with the noncentral-t power when
    var1 == var2.
    """
    df = count1 + count2 - 2
    if df < 1:
        raise ValueError("need at least 3 cluster means in total")
    tcrit = _t_crit_two_sided(alpha, df)
    sd_num = math.sqrt(var1 / count1 + var2 / count2)
    scale = (1.0 / count1 + 1.0 / count2) / df
    u, w = _gl_unit_nodes(nodes)
    w1 = chi2.ppf(u, count1 - 1) if count1 > 1 else np.zeros_like(u)
    w2 = chi2.ppf(u, count2 - 1) if count2 > 1 else np.zeros_like(u)
    W1, W2 = np.meshgrid(w1, w2, indexing="ij")
    G = np.sqrt((var1 * W1 + var2 * W2) * scale)
    p = norm.cdf((-tcrit * G - effect) / sd_num) + norm.sf((tcrit * G - effect) / sd_num)
    return float(w @ p @ w)


def _bivariate(rng: np.random.Generator, count: int, var: float, rho: float) -> np.ndarray:
    """(count, 2) draws with marginal variance ``var`` and correlation ``rho``."""
    z = rng.standard_normal((count, 2))
    out = np.empty_like(z)
    out[:, 0] = z[:, 0]
    out[:, 1] = rho * z[:, 0] + math.sqrt(max(0.0, 1.0 - rho * rho)) * z[:, 1]
    return out * math.sqrt(var)


# ---------------------------------------------------------------------------
# scenario plumbing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """A named simulator with its independent rejection-probability oracle.

    ``simulate`` and ``rejection_rate`` receive design parameters and
    hypothesis parameters as name->value mappings. ``objective_formulas``
    maps formula ids to (labels, fn) pairs usable from configs.
    """

    name: str
    design_params: tuple[str, ...]
    optional_params: tuple[str, ...]
    hypothesis_params: tuple[str, ...]
    simulate: Callable[[Params, Params, np.random.Generator], bool]
    rejection_rate: Callable[[Params, Params], float]
    objective_formulas: Mapping[str, tuple[tuple[str, ...], Callable[[Params], Sequence[float]]]] = field(
        default_factory=dict
    )

    def simulator(self, space: DesignSpace) -> TrialSimulator:
        """Adapt this scenario to the TrialSimulator contract for a space."""
        names = space.names

        def sim(point: DesignPoint, hypothesis: Hypothesis, rng: np.random.Generator) -> bool:
            return self.simulate(dict(zip(names, point.coords)), hypothesis.params, rng)

        return sim

    def oracle(self, space: DesignSpace, point: DesignPoint, hypothesis: Hypothesis) -> float:
        """True rejection probability at a design point under a hypothesis."""
        return self.rejection_rate(dict(zip(space.names, point.coords)), hypothesis.params)

    def space_problems(self, space: DesignSpace) -> list[str]:
        """Mismatches between a design space and this scenario's schema."""
        names = set(space.names)
        problems = []
        for p in self.design_params:
            if p not in names:
                problems.append(f"scenario {self.name!r} needs design parameter {p!r}")
        allowed = set(self.design_params) | set(self.optional_params)
        for name in names - allowed:
            problems.append(f"design parameter {name!r} unknown to scenario {self.name!r}")
        return problems


# ---------------------------------------------------------------------------
# two-arm z-test on continuous outcomes
# ---------------------------------------------------------------------------

def _two_arm_normal_sim(x: Params, hp: Params, rng: np.random.Generator) -> bool:
    n = int(round(x["n"]))
    if n < 2:
        raise ValueError("per-arm n must be >= 2")
    delta = float(hp["delta"])
    sigma = float(hp["sigma"])
    control = rng.normal(0.0, sigma, n)
    treated = rng.normal(delta, sigma, n)
    z = (treated.mean() - control.mean()) / (sigma * math.sqrt(2.0 / n))
    return bool(abs(z) > _z_crit_two_sided(float(hp["alpha"])))


def _two_arm_normal_oracle(x: Params, hp: Params) -> float:
    n = int(round(x["n"]))
    zc = _z_crit_two_sided(float(hp["alpha"]))
    ncp = float(hp["delta"]) * math.sqrt(n / 2.0) / float(hp["sigma"])
    return float(norm.cdf(ncp - zc) + norm.cdf(-ncp - zc))


# ---------------------------------------------------------------------------
# two-arm test of proportions
# ---------------------------------------------------------------------------

_BINARY_EXACT_LIMIT = 200


def _two_arm_binary_sim(x: Params, hp: Params, rng: np.random.Generator) -> bool:
    n = int(round(x["n"]))
    if n < 10:
        raise ValueError("per-arm n must be >= 10")
    x0 = rng.binomial(n, float(hp["p0"]))
    x1 = rng.binomial(n, float(hp["p1"]))
    pooled = (x0 + x1) / (2.0 * n)
    se = math.sqrt(2.0 * pooled * (1.0 - pooled) / n)
    if se == 0.0:
        return False
    z = (x1 - x0) / n / se
    return bool(abs(z) > _z_crit_two_sided(float(hp["alpha"])))


def _two_arm_binary_oracle(x: Params, hp: Params) -> float:
    n = int(round(x["n"]))
    p0, p1 = float(hp["p0"]), float(hp["p1"])
    zc = _z_crit_two_sided(float(hp["alpha"]))
    if n <= _BINARY_EXACT_LIMIT:
        counts = np.arange(n + 1)
        pmf0 = binom.pmf(counts, n, p0)
        pmf1 = binom.pmf(counts, n, p1)
        X0, X1 = np.meshgrid(counts, counts, indexing="ij")
        pooled = (X0 + X1) / (2.0 * n)
        se = np.sqrt(2.0 * pooled * (1.0 - pooled) / n)
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = np.where(se > 0, np.abs((X1 - X0) / n) / np.where(se > 0, se, 1.0), 0.0)
        reject = stat > zc
        return float(pmf0 @ reject @ pmf1)
    # normal approximation: pooled-variance critical region, alternative spread
    diff = p1 - p0
    pbar = 0.5 * (p0 + p1)
    se0 = math.sqrt(2.0 * pbar * (1.0 - pbar) / n)
    se1 = math.sqrt((p0 * (1.0 - p0) + p1 * (1.0 - p1)) / n)
    return float(norm.cdf((-zc * se0 - diff) / se1) + norm.sf((zc * se0 - diff) / se1))


# ---------------------------------------------------------------------------
# cluster randomized trial, single continuous endpoint
# ---------------------------------------------------------------------------

def _cluster_layout(x: Params) -> tuple[int, int, float, float, float]:
    """Validated (k, control clusters, doctors per therapist, caseloads)."""
    n = float(x["n"])
    k = int(round(x["k"]))
    j = int(round(x.get("j", 2 * k)))
    if k < 2:
        raise ValueError("need at least 2 therapist clusters")
    if n < 2 * k:
        raise ValueError("need at least 2 participants per therapist cluster")
    if j % 2 != 0 or j < 4:
        raise ValueError("doctor count j must be an even integer >= 4")
    n_control_clusters = j // 2
    doctors_per_therapist = (j / 2.0) / k
    if doctors_per_therapist < 1.0:
        raise ValueError("layout requires at least one doctor per therapist (j >= 2k)")
    m_intervention = n / k
    m_control = n / n_control_clusters
    return k, n_control_clusters, doctors_per_therapist, m_intervention, m_control


def _cluster_variances(x: Params, hp: Params) -> tuple[int, int, float, float]:
    k, n2, c, m_i, m_c = _cluster_layout(x)
    st2 = float(hp["sigma_t2"])
    sd2 = float(hp["sigma_d2"])
    sw2 = float(hp["sigma_w2"])
    v1 = st2 + sd2 / c + sw2 / m_i
    v2 = sd2 + sw2 / m_c
    return k, n2, v1, v2


def _cluster_rct_sim(x: Params, hp: Params, rng: np.random.Generator) -> bool:
    k, n2, c, m_i, m_c = _cluster_layout(x)
    beta0 = float(hp.get("beta0", 0.0))
    beta1 = float(hp["beta1"])
    st2 = float(hp["sigma_t2"])
    sd2 = float(hp["sigma_d2"])
    sw2 = float(hp["sigma_w2"])
    # intervention therapist-cluster means: therapist effect + own doctors + residual mean
    a = (beta0 + beta1
         + rng.normal(0.0, math.sqrt(st2), k)
         + rng.normal(0.0, math.sqrt(sd2 / c), k)
         + rng.normal(0.0, math.sqrt(sw2 / m_i), k))
    # control doctor-cluster means
    b = (beta0
         + rng.normal(0.0, math.sqrt(sd2), n2)
         + rng.normal(0.0, math.sqrt(sw2 / m_c), n2))
    df = k + n2 - 2
    sp2 = ((k - 1) * a.var(ddof=1) + (n2 - 1) * b.var(ddof=1)) / df
    if sp2 <= 0.0:
        return False
    t = (a.mean() - b.mean()) / math.sqrt(sp2 * (1.0 / k + 1.0 / n2))
    return bool(abs(t) > _t_crit_two_sided(float(hp["alpha"]), df))


def _cluster_rct_oracle(x: Params, hp: Params) -> float:
    k, n2, v1, v2 = _cluster_variances(x, hp)
    return pooled_t_power(float(hp["beta1"]), v1, k, v2, n2, float(hp["alpha"]))


# ---------------------------------------------------------------------------
# correlated co-primary endpoints (both must reject)
# ---------------------------------------------------------------------------

def _arm_level_layout(x: Params) -> tuple[float, int, float, float]:
    """(n per arm or n1, therapists k, doctors per arm, control n)."""
    if "n1" in x:
        n1 = float(x["n1"])
        n0 = float(x["r"]) * n1
    else:
        n1 = float(x["n"])
        n0 = n1
    k = int(round(x["k"]))
    j = float(x.get("j", 2 * k))
    if k < 2:
        raise ValueError("need at least 2 therapist clusters")
    if j < 2:
        raise ValueError("need at least 2 doctors")
    if n1 < 2 * k:
        raise ValueError("need at least 2 participants per therapist cluster")
    if n0 < 2:
        raise ValueError("control arm needs at least 2 participants")
    return n1, k, j / 2.0, n0


def _endpoint_pair_moments(x: Params, hp: Params) -> tuple[float, float]:
    """(variance, covariance) of the two endpoint arm-mean differences."""
    n1, k, d_arm, n0 = _arm_level_layout(x)
    st2 = float(hp["sigma_t2"])
    sd2 = float(hp["sigma_d2"])
    sw2 = float(hp["sigma_w2"])
    var = st2 / k + 2.0 * sd2 / d_arm + sw2 * (1.0 / n1 + 1.0 / n0)
    cov = (float(hp["rho_t"]) * st2 / k
           + 2.0 * float(hp["rho_d"]) * sd2 / d_arm
           + float(hp["rho_w"]) * sw2 * (1.0 / n1 + 1.0 / n0))
    return var, cov


def _simulate_endpoint_pair_diff(x: Params, hp: Params, rng: np.random.Generator) -> np.ndarray:
    """One draw of the two endpoints' arm-mean differences (without effects)."""
    n1, k, d_arm, n0 = _arm_level_layout(x)
    st2 = float(hp["sigma_t2"])
    sd2 = float(hp["sigma_d2"])
    sw2 = float(hp["sigma_w2"])
    rho_t = float(hp["rho_t"])
    rho_d = float(hp["rho_d"])
    rho_w = float(hp["rho_w"])
    m_i = n1 / k
    u = _bivariate(rng, k, st2, rho_t)                   # therapist effects
    e_i = _bivariate(rng, k, sw2 / m_i, rho_w)           # cluster residual means
    w_arm = _bivariate(rng, 1, sd2 / d_arm, rho_d)[0]    # intervention doctors
    v_arm = _bivariate(rng, 1, sd2 / d_arm, rho_d)[0]    # control doctors
    e_c = _bivariate(rng, 1, sw2 / n0, rho_w)[0]         # control residual mean
    return u.mean(axis=0) + e_i.mean(axis=0) + w_arm - v_arm - e_c


def _co_primary_sim(x: Params, hp: Params, rng: np.random.Generator) -> bool:
    effects = np.array([float(hp["beta1_f"]), float(hp["beta1_d"])])
    var, _ = _endpoint_pair_moments(x, hp)
    diff = effects + _simulate_endpoint_pair_diff(x, hp, rng)
    z = diff / math.sqrt(var)
    zc = _z_crit_two_sided(float(hp["alpha"]))
    return bool(abs(z[0]) > zc and abs(z[1]) > zc)


def _co_primary_oracle(x: Params, hp: Params) -> float:
    var, cov = _endpoint_pair_moments(x, hp)
    se = math.sqrt(var)
    rho = min(1.0, max(-1.0, cov / var))
    zc = _z_crit_two_sided(float(hp["alpha"]))
    return bvn_both_two_sided(zc, float(hp["beta1_f"]) / se, float(hp["beta1_d"]) / se, rho)


# ---------------------------------------------------------------------------
# small pilot: either endpoint, one-sided, nominal test size as design variable
# ---------------------------------------------------------------------------

def _pilot_either_sim(x: Params, hp: Params, rng: np.random.Generator) -> bool:
    a = float(x["a"])
    if not 0.0 < a < 0.5:
        raise ValueError("nominal test size a must be in (0, 0.5)")
    effects = np.array([float(hp["beta1_f"]), float(hp["beta1_d"])])
    var, _ = _endpoint_pair_moments(x, hp)
    diff = effects + _simulate_endpoint_pair_diff(x, hp, rng)
    z = diff / math.sqrt(var)
    zc = float(norm.ppf(1.0 - a))
    return bool(z[0] > zc or z[1] > zc)


def _pilot_either_oracle(x: Params, hp: Params) -> float:
    a = float(x["a"])
    var, cov = _endpoint_pair_moments(x, hp)
    se = math.sqrt(var)
    rho = min(1.0, max(-1.0, cov / var))
    zc = float(norm.ppf(1.0 - a))
    return bvn_either_one_sided(zc, float(hp["beta1_f"]) / se, float(hp["beta1_d"]) / se, rho)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def _providers(x: Params) -> float:
    return float(x["k"]) + float(x.get("j", 2 * x["k"]))


_CLUSTER_OBJECTIVES = {
    "participants_providers": (
        ("participants", "providers"),
        lambda x: (2.0 * float(x["n"]), _providers(x)),
    ),
}

SCENARIOS: dict[str, Scenario] = {}


def register_scenario(scenario: Scenario) -> None:
    """Add a scenario to the registry (extension point for custom trials)."""
    SCENARIOS[scenario.name] = scenario


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        known = ", ".join(sorted(SCENARIOS))
        raise UnknownScenarioError(f"unknown scenario {name!r} (known: {known})") from None


register_scenario(Scenario(
    name="two_arm_normal",
    design_params=("n",),
    optional_params=(),
    hypothesis_params=("delta", "sigma", "alpha"),
    simulate=_two_arm_normal_sim,
    rejection_rate=_two_arm_normal_oracle,
    objective_formulas={
        "per_arm_n": (("per_arm_n",), lambda x: (float(x["n"]),)),
        "total_n": (("total_n",), lambda x: (2.0 * float(x["n"]),)),
    },
))

register_scenario(Scenario(
    name="two_arm_binary",
    design_params=("n",),
    optional_params=(),
    hypothesis_params=("p0", "p1", "alpha"),
    simulate=_two_arm_binary_sim,
    rejection_rate=_two_arm_binary_oracle,
    objective_formulas={
        "per_arm_n": (("per_arm_n",), lambda x: (float(x["n"]),)),
        "total_n": (("total_n",), lambda x: (2.0 * float(x["n"]),)),
    },
))

register_scenario(Scenario(
    name="cluster_rct",
    design_params=("n", "k"),
    optional_params=("j",),
    hypothesis_params=("beta1", "sigma_t2", "sigma_d2", "sigma_w2", "alpha"),
    simulate=_cluster_rct_sim,
    rejection_rate=_cluster_rct_oracle,
    objective_formulas=_CLUSTER_OBJECTIVES,
))

register_scenario(Scenario(
    name="co_primary",
    design_params=("n", "k"),
    optional_params=("j",),
    hypothesis_params=("beta1_f", "beta1_d", "rho_w", "rho_t", "rho_d",
                       "sigma_t2", "sigma_d2", "sigma_w2", "alpha"),
    simulate=_co_primary_sim,
    rejection_rate=_co_primary_oracle,
    objective_formulas=_CLUSTER_OBJECTIVES,
))

register_scenario(Scenario(
    name="pilot_either",
    design_params=("n1", "k", "r", "j", "a"),
    optional_params=(),
    hypothesis_params=("beta1_f", "beta1_d", "rho_w", "rho_t", "rho_d",
                       "sigma_t2", "sigma_d2", "sigma_w2"),
    simulate=_pilot_either_sim,
    rejection_rate=_pilot_either_oracle,
    objective_formulas={
        "pilot_objectives": (
            ("participants", "therapists", "doctors"),
            lambda x: (float(x["n1"]) * (1.0 + float(x["r"])),
                       float(x["k"]), float(x["j"])),
        ),
    },
))
