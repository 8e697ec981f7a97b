"""End-to-end learner: BIC penalty selection, simulated annealing over
topological sorts, and magnitude-based structure refinement."""

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import WorkerFailure, WorkerPool, permutation_score
from .graphs import propose_flip, refine_threshold, support_edges
from .model import penalty
from .prox import ProxConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LearnConfig:
    """Every constant of the learner, with the defaults used in our runs."""

    family: str = "logistic"
    lambda_grid: tuple = tuple(np.geomspace(0.01, 0.1, 20))
    t_init: float = 5e-2
    t_final: float = 5e-5
    n_steps: int = 1000
    tau: int | None = None  # None means min(p, 4), resolved at run time
    dane_rounds: int = 5
    prox: ProxConfig = field(default_factory=ProxConfig)
    alpha: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if len(self.lambda_grid) == 0 or min(self.lambda_grid) <= 0:
            raise ValueError("lambda_grid must be non-empty and positive")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.t_init <= 0 or self.t_final <= 0 or self.t_final > self.t_init:
            raise ValueError("need 0 < t_final <= t_init")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "lambda_grid": [float(v) for v in self.lambda_grid],
            "t_init": self.t_init,
            "t_final": self.t_final,
            "n_steps": self.n_steps,
            "tau": self.tau,
            "dane_rounds": self.dane_rounds,
            "prox": {"s0": self.prox.s0, "kappa": self.prox.kappa,
                     "tol": self.prox.tol, "max_iter": self.prox.max_iter},
            "alpha": self.alpha,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "LearnConfig":
        raw = dict(raw)
        prox_raw = raw.pop("prox", None)
        kwargs = {}
        for key in ("family", "t_init", "t_final", "n_steps", "tau",
                    "dane_rounds", "alpha", "seed"):
            if key in raw:
                kwargs[key] = raw.pop(key)
        if "lambda_grid" in raw:
            kwargs["lambda_grid"] = tuple(raw.pop("lambda_grid"))
        if raw:
            raise ValueError(f"unknown config keys: {sorted(raw)}")
        cfg = cls(**kwargs)
        if prox_raw is not None:
            cfg = replace(cfg, prox=ProxConfig(**prox_raw))
        return cfg


@dataclass
class LearnResult:
    permutation: tuple
    beta: np.ndarray
    objective: float
    support: np.ndarray
    trace: list
    lambda_selected: float
    config: LearnConfig
    n: int
    workers: int


class LearnAborted(Exception):
    """A round failed mid-anneal; carries the trace built so far."""

    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


def geometric_schedule(t_init: float, t_final: float, n_steps: int) -> np.ndarray:
    """Temperatures t_init .. t_final, geometric, one per step plus the endpoint."""
    return np.geomspace(t_init, t_final, n_steps + 1)


def accept(f_new: float, f_old: float, temperature: float, rng: np.random.Generator) -> bool:
    """Metropolis rule: downhill always, uphill with prob exp(-delta/T)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if f_new <= f_old:
        return True
    return rng.random() < math.exp(-(f_new - f_old) / temperature)


def bic_score(pool: WorkerPool, objective: float, beta, lam: float) -> float:
    """BIC of a scored fit: 2n * loss + log(n) * (#nonzero coefs + p intercepts)."""
    loss = objective - penalty(beta, lam)
    n_params = int(np.count_nonzero(beta[1:, :])) + pool.p
    return 2.0 * pool.n * loss + math.log(pool.n) * n_params


def select_lambda_bic(pool: WorkerPool, perm, grid, cfg: LearnConfig) -> float:
    """Pick the penalty level minimizing BIC at the initial permutation.

    The grid is swept from its largest value down (sparse to dense) with
    warm starts along the path; ties resolve to the smallest penalty.
    """
    grid = sorted(float(v) for v in grid)
    best_lam, best_bic = None, math.inf
    warm = None
    for lam in reversed(grid):
        scored = permutation_score(pool, perm, lam, warm=warm,
                                   rounds=cfg.dane_rounds, prox_cfg=cfg.prox)
        warm = scored.beta
        bic = bic_score(pool, scored.objective, scored.beta, lam)
        log.debug("bic(lambda=%.5f) = %.3f", lam, bic)
        if bic <= best_bic:
            best_lam, best_bic = lam, bic
    return best_lam


def _record(iteration, temperature, proposal, objective, accepted, incumbent, best):
    return {
        "iteration": int(iteration),
        "temperature": float(temperature),
        "proposal": [int(v) for v in proposal],
        "objective": float(objective),
        "accepted": bool(accepted),
        "incumbent": float(incumbent),
        "best": float(best),
    }


def darls(pool: WorkerPool, cfg: LearnConfig, memoize: bool = True) -> LearnResult:
    """Run the full annealed search and return the best accepted state.

    The chain moves from the last accepted state (the incumbent); the
    reported permutation/coefficients/objective belong to the best state
    accepted anywhere along the run.  The trace holds one record per
    proposal plus the initial score.

    ``memoize`` caches scored proposals between acceptances.  Scoring is a
    pure function of (shards, warm start, permutation, penalty), and the
    warm start only changes when a proposal is accepted, so cache hits are
    bit-identical to recomputation; the flag exists for tests.
    """
    rng = np.random.default_rng(cfg.seed)
    p = pool.p
    tau = cfg.tau if cfg.tau is not None else min(p, 4)
    temps = geometric_schedule(cfg.t_init, cfg.t_final, cfg.n_steps)
    perm0 = rng.permutation(p)
    lam = select_lambda_bic(pool, perm0, cfg.lambda_grid, cfg)
    log.info("selected lambda=%.5f at initial permutation", lam)

    incumbent = permutation_score(pool, perm0, lam, warm=None,
                                  rounds=cfg.dane_rounds, prox_cfg=cfg.prox)
    best = incumbent
    trace = [_record(0, temps[0], incumbent.perm, incumbent.objective, True,
                     incumbent.objective, best.objective)]
    scored_from_incumbent: dict[tuple, object] = {}
    try:
        for i in range(cfg.n_steps):
            temperature = float(temps[i])
            proposal = propose_flip(incumbent.perm, tau, rng)
            key = tuple(int(v) for v in proposal)
            scored = scored_from_incumbent.get(key)
            if scored is None:
                scored = permutation_score(pool, proposal, lam, warm=incumbent.beta,
                                           rounds=cfg.dane_rounds, prox_cfg=cfg.prox)
                if memoize:
                    scored_from_incumbent[key] = scored
            accepted = accept(scored.objective, incumbent.objective, temperature, rng)
            if accepted:
                incumbent = scored
                scored_from_incumbent.clear()
                if scored.objective < best.objective:
                    best = scored
            trace.append(_record(i + 1, temperature, scored.perm, scored.objective,
                                 accepted, incumbent.objective, best.objective))
    except WorkerFailure as exc:
        raise LearnAborted(f"anneal aborted: {exc}", trace) from exc

    support = refine_threshold(best.beta, cfg.alpha)
    return LearnResult(permutation=best.perm, beta=best.beta,
                       objective=best.objective, support=support, trace=trace,
                       lambda_selected=lam, config=cfg, n=pool.n,
                       workers=len(pool.workers))


def result_to_dict(result: LearnResult) -> dict:
    weights = np.abs(result.beta[1:, :])
    edges = [[i, j, float(weights[i, j])] for i, j in support_edges(result.support)]
    return {
        "p": int(result.beta.shape[1]),
        "n": int(result.n),
        "workers": int(result.workers),
        "lambda": float(result.lambda_selected),
        "objective": float(result.objective),
        "permutation": [int(v) for v in result.permutation],
        "beta": [[float(v) for v in row] for row in result.beta],
        "edges": edges,
        "config": result.config.to_dict(),
        "trace": result.trace,
    }


def save_result(path, result: LearnResult) -> None:
    with open(path, "w") as fh:
        json.dump(result_to_dict(result), fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_trace_csv(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "temperature", "objective",
                         "accepted", "incumbent", "best"])
        for rec in trace:
            writer.writerow([rec["iteration"], repr(rec["temperature"]),
                             repr(rec["objective"]), int(rec["accepted"]),
                             repr(rec["incumbent"]), repr(rec["best"])])
