"""Distributed annealing over topological sorts for sparse causal DAG
learning with GLM node models."""

from .channels import InProcessChannel, TcpChannel, connect_workers, local_channels
from .datagen import GenSpec, gen_threshold_gaussian, generate, random_dag, shard_split
from .driver import (LearnAborted, LearnConfig, LearnResult, accept, darls,
                     geometric_schedule, select_lambda_bic)
from .engine import (RoundState, ScoredPermutation, WorkerFailure, WorkerPool,
                     dane_round, global_gradient, permutation_score)
from .graphs import (StructureMetrics, propose_flip, refine_threshold,
                     structure_metrics, support_from_permutation)
from .model import (FAMILIES, get_family, sample_gldag, shard_gradient,
                    shard_loss, zero_params)
from .prox import ProxConfig, local_solve, prox_group_lasso
from .worker import WorkerCore, serve_worker

__version__ = "0.1.0"

__all__ = [
    "FAMILIES", "GenSpec", "InProcessChannel", "LearnAborted", "LearnConfig",
    "LearnResult", "ProxConfig", "RoundState", "ScoredPermutation",
    "StructureMetrics", "TcpChannel", "WorkerCore", "WorkerFailure",
    "WorkerPool", "accept", "connect_workers", "dane_round", "darls",
    "gen_threshold_gaussian", "generate", "geometric_schedule", "get_family",
    "global_gradient", "local_channels", "local_solve", "permutation_score",
    "propose_flip", "prox_group_lasso", "random_dag", "refine_threshold",
    "sample_gldag", "select_lambda_bic", "serve_worker", "shard_gradient",
    "shard_loss", "shard_split", "structure_metrics",
    "support_from_permutation", "zero_params",
]
