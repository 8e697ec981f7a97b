"""Simulation-study generators and shard splitting."""

from dataclasses import dataclass

import numpy as np

from .graphs import topological_order
from .model import get_family, sample_gldag, zero_params

MECHANISMS = ("logistic-gldag", "threshold-gaussian")


@dataclass(frozen=True)
class GenSpec:
    """Recipe for one synthetic dataset: graph size, signal range, mechanism."""

    p: int
    s0: int
    n: int
    coef_low: float = 0.8
    coef_high: float = 1.5
    mechanism: str = "logistic-gldag"
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be positive")
        if not 0 <= self.s0 <= self.p * (self.p - 1) // 2:
            raise ValueError(f"s0={self.s0} infeasible for p={self.p}")
        if not 0 < self.coef_low <= self.coef_high:
            raise ValueError("need 0 < coef_low <= coef_high")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}")
        if self.n < 1:
            raise ValueError("n must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "GenSpec":
        return cls(**raw)


def random_dag(p: int, s0: int, rng: np.random.Generator,
               coef_low: float = 0.8, coef_high: float = 1.5):
    """Random DAG with s0 edges plus signed coefficients; intercepts zero.

    Draws a uniform permutation, picks s0 distinct forward pairs without
    replacement, and fills each with a coefficient of magnitude
    Uniform[coef_low, coef_high] and random sign.

    Returns (support, beta) with support p x p bool and beta (p+1) x p.
    """
    max_edges = p * (p - 1) // 2
    if not 0 <= s0 <= max_edges:
        raise ValueError(f"s0={s0} infeasible for p={p}")
    order = rng.permutation(p)
    pairs = [(int(order[a]), int(order[b]))
             for a in range(p) for b in range(a + 1, p)]
    chosen = rng.choice(max_edges, size=s0, replace=False) if s0 else []
    support = np.zeros((p, p), dtype=bool)
    beta = zero_params(p)
    for idx in chosen:
        i, j = pairs[int(idx)]
        support[i, j] = True
        magnitude = rng.uniform(coef_low, coef_high)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        beta[1 + i, j] = sign * magnitude
    return support, beta


def gen_threshold_gaussian(coef, n: int, rng: np.random.Generator) -> np.ndarray:
    """Binary data from a linear Gaussian system thresholded at column means.

    Non-root nodes follow Y_j = sum_i coef[i, j] Y_i + N(0, 1); root nodes
    draw from the balanced mixture of N(1, 1) and N(-1, 1).  The binary
    output is X_j = 1{Y_j > mean(Y_j)} with the mean taken over the
    generated sample, so thresholds move with n.
    """
    coef = np.asarray(coef, dtype=np.float64)
    p = coef.shape[0]
    if coef.shape != (p, p):
        raise ValueError("coef must be a p x p matrix")
    order = topological_order(coef != 0)
    if order is None:
        raise ValueError("coefficient pattern is cyclic")
    latent = np.zeros((n, p), dtype=np.float64)
    roots = ~(coef != 0).any(axis=0)
    for j in order:
        if roots[j]:
            centers = np.where(rng.random(n) < 0.5, 1.0, -1.0)
            latent[:, j] = centers + rng.standard_normal(n)
        else:
            latent[:, j] = latent @ coef[:, j] + rng.standard_normal(n)
    return (latent > latent.mean(axis=0)).astype(np.float64)


def generate(spec: GenSpec):
    """Materialize one dataset; returns (data, support, beta)."""
    rng = np.random.default_rng(spec.seed)
    support, beta = random_dag(spec.p, spec.s0, rng, spec.coef_low, spec.coef_high)
    if spec.mechanism == "logistic-gldag":
        data = sample_gldag(beta, get_family("logistic"), spec.n, rng)
    else:
        data = gen_threshold_gaussian(beta[1:, :], spec.n, rng)
    return data, support, beta


def shard_split(data, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform random partition into k shards whose sizes differ by at most one."""
    data = np.asarray(data)
    n = data.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, n], got k={k}, n={n}")
    order = rng.permutation(n)
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[:n % k] += 1
    shards = []
    start = 0
    for size in sizes:
        shards.append(data[order[start:start + size]].copy())
        start += size
    return shards
