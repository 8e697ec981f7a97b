"""Multi-round distributed optimization of the permutation score.

The coordinator repeatedly (1) gathers per-shard gradients and averages
them with weights n_k/n, (2) asks every worker to minimize its shifted
local objective warm-started at the current global iterate, and (3)
averages the local solutions.  After the rounds, workers report their
penalized losses and the weighted mean is the permutation score.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .channels import ChannelError, InProcessChannel
from .graphs import support_from_permutation
from .model import zero_params
from .prox import ProxConfig, project_to_support
from .wire import REPLY_FOR, WireMessage

log = logging.getLogger(__name__)


class WorkerFailure(Exception):
    """A worker failed or replied with an Error; aborts the current step."""

    def __init__(self, worker_id: int, message: str):
        super().__init__(f"worker {worker_id}: {message}")
        self.worker_id = worker_id


@dataclass
class WorkerHandle:
    wid: int
    n: int
    channel: object


@dataclass
class RoundState:
    """Coordinator state between rounds: iterate, its global gradient, index."""

    beta: np.ndarray
    global_grad: np.ndarray
    round: int


@dataclass
class ScoredPermutation:
    perm: tuple
    beta: np.ndarray
    objective: float


class WorkerPool:
    """Fixed set of workers with a Hello/SetConfig handshake done upfront."""

    def __init__(self, channels, family_name: str):
        if not channels:
            raise ValueError("need at least one worker channel")
        self.workers: list[WorkerHandle] = []
        p = None
        for wid, channel in enumerate(channels):
            ack = self._ask(wid, channel, WireMessage("Hello"))
            if p is None:
                p = ack["p"]
            elif ack["p"] != p:
                raise WorkerFailure(wid, f"shard has p={ack['p']}, expected {p}")
            self._ask(wid, channel, WireMessage("SetConfig", {"family": family_name}))
            self.workers.append(WorkerHandle(wid, ack["n"], channel))
        self.p = p
        self.n = sum(w.n for w in self.workers)
        assert sum(Fraction(w.n, self.n) for w in self.workers) == 1
        self.weights = [w.n / self.n for w in self.workers]
        # Concurrent fan-out pays off only when requests leave the process.
        remote = [c for c in channels if not isinstance(c, InProcessChannel)]
        self._executor = ThreadPoolExecutor(max_workers=len(channels)) if remote else None

    def _ask(self, wid: int, channel, msg: WireMessage) -> WireMessage:
        try:
            reply = channel.request(msg)
        except ChannelError as exc:
            raise WorkerFailure(wid, str(exc)) from exc
        if reply.kind == "Error":
            raise WorkerFailure(wid, f"[code {reply['code']}] {reply['message']}")
        if reply.kind != REPLY_FOR[msg.kind]:
            raise WorkerFailure(wid, f"expected {REPLY_FOR[msg.kind]}, got {reply.kind}")
        return reply

    def broadcast(self, msg: WireMessage) -> list[WireMessage]:
        """Send one request to every worker, barrier-wait, return replies by index."""
        if self._executor is None:
            return [self._ask(w.wid, w.channel, msg) for w in self.workers]
        futures = [self._executor.submit(self._ask, w.wid, w.channel, msg)
                   for w in self.workers]
        return [f.result() for f in futures]

    def close(self, shutdown: bool = True) -> None:
        for w in self.workers:
            if shutdown:
                try:
                    w.channel.request(WireMessage("Shutdown"))
                except ChannelError:
                    pass
            w.channel.close()
        if self._executor is not None:
            self._executor.shutdown(wait=False)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def global_gradient(pool: WorkerPool, beta) -> np.ndarray:
    """Pooled gradient: the n_k/n-weighted worker gradients, summed in index order."""
    replies = pool.broadcast(WireMessage("GradRequest", {"beta": beta}))
    acc = np.zeros_like(np.asarray(beta, dtype=np.float64))
    for handle, weight, reply in zip(pool.workers, pool.weights, replies):
        if reply["n"] != handle.n:
            raise WorkerFailure(handle.wid, f"reported n={reply['n']}, expected {handle.n}")
        acc += weight * reply["grad"]
    return acc


def dane_round(pool: WorkerPool, state: RoundState, support, lam: float,
               prox_cfg: ProxConfig) -> RoundState:
    """One communication round: local shifted solves, then weighted averaging."""
    replies = pool.broadcast(WireMessage("SolveRequest", {
        "beta": state.beta, "global_grad": state.global_grad,
        "support": support, "lam": lam, "cfg": prox_cfg}))
    beta_next = np.zeros_like(state.beta)
    for handle, weight, reply in zip(pool.workers, pool.weights, replies):
        local = reply["beta"]
        if not np.isfinite(local).all():
            raise WorkerFailure(handle.wid,
                                f"non-finite solution in round {state.round}")
        beta_next += weight * local
    return RoundState(beta=beta_next,
                      global_grad=global_gradient(pool, beta_next),
                      round=state.round + 1)


def intercept_warm_start(pool: WorkerPool, prox_cfg: ProxConfig) -> np.ndarray:
    """Cold-start iterate: zero coefficients, intercepts from one
    intercept-only distributed round (keeps raw data on the workers)."""
    p = pool.p
    beta0 = zero_params(p)
    empty = np.zeros((p, p), dtype=bool)
    state = RoundState(beta0, global_gradient(pool, beta0), 0)
    return dane_round(pool, state, empty, 0.0, prox_cfg).beta


def permutation_score(pool: WorkerPool, perm, lam: float, warm=None,
                      rounds: int = 5, prox_cfg: ProxConfig = ProxConfig()) -> ScoredPermutation:
    """Estimate the best DAG compatible with ``perm`` and score it.

    Runs up to ``rounds`` communication rounds, stopping early once the
    relative iterate change drops to ``prox_cfg.tol``; the score is the
    weighted mean of the workers' penalized losses at the final iterate.
    ``warm`` (when given) is projected onto the support of ``perm``.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    support = support_from_permutation(perm)
    if warm is None:
        beta0 = intercept_warm_start(pool, prox_cfg)
    else:
        beta0 = project_to_support(warm, support)
    state = RoundState(beta0, global_gradient(pool, beta0), 0)
    for _ in range(rounds):
        prev = state.beta
        state = dane_round(pool, state, support, lam, prox_cfg)
        change = float(np.linalg.norm(state.beta - prev)) / max(1.0, float(np.linalg.norm(prev)))
        if change <= prox_cfg.tol:
            break
    replies = pool.broadcast(WireMessage("ScoreRequest", {"beta": state.beta, "lam": lam}))
    total = 0.0
    for reply in replies:
        total += reply["value"]
    objective = total / pool.n
    return ScoredPermutation(perm=tuple(int(v) for v in np.asarray(perm)),
                             beta=state.beta, objective=objective)
