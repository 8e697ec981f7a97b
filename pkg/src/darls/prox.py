"""Proximal gradient solver for the shifted, group-lasso-penalized local loss.

Solves, over coefficient matrices restricted to a DAG support,

    minimize_xi  loss_k(xi) - <shift, xi> + lam * sum_ij |xi_ij|

with backtracking line search and block soft-thresholding.  Intercepts
(row 0) are always free and never penalized.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import Family, design_matrix

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is an optional accelerator
    njit = None

log = logging.getLogger(__name__)

# Below this step size the line search gives up and accepts the prox step.
STEP_FLOOR = 1e-16


def _prox_step_numpy(x, grad, s, threshold, support):
    """prox of the gradient step: soft-threshold supported coefficients of
    x - s*grad, zero the rest, pass the intercept row through."""
    out = np.empty_like(x)
    moved = x - s * grad
    out[0, :] = moved[0, :]
    coef = moved[1:, :]
    shrunk = np.sign(coef) * np.maximum(np.abs(coef) - threshold, 0.0)
    out[1:, :] = np.where(support, shrunk, 0.0)
    return out


if njit is not None:
    @njit(cache=True)
    def _prox_step_jit(x, grad, s, threshold, support):  # pragma: no cover - thin kernel
        out = np.empty_like(x)
        p = x.shape[1]
        for j in range(p):
            out[0, j] = x[0, j] - s * grad[0, j]
        for i in range(1, x.shape[0]):
            for j in range(p):
                if support[i - 1, j]:
                    v = x[i, j] - s * grad[i, j]
                    a = abs(v) - threshold
                    if a > 0.0:
                        out[i, j] = a if v > 0.0 else -a
                    else:
                        out[i, j] = 0.0
                else:
                    out[i, j] = 0.0
        return out

    _prox_step = _prox_step_jit
else:
    _prox_step = _prox_step_numpy


@dataclass(frozen=True)
class ProxConfig:
    """Knobs of the local proximal gradient solver."""

    s0: float = 1.0
    kappa: float = 0.5
    tol: float = 1e-6
    max_iter: int = 200

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def prox_group_lasso(x, threshold: float, support) -> np.ndarray:
    """Soft-threshold supported coefficients of x; intercepts pass through.

    Supported entries map to ``(1 - threshold/|x_ij|)_+ x_ij``, entries
    outside the support are zeroed, and row 0 is returned unchanged.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    support = np.asarray(support, dtype=bool)
    out = np.zeros_like(x)
    out[0, :] = x[0, :]
    coef = x[1:, :]
    shrunk = np.sign(coef) * np.maximum(np.abs(coef) - threshold, 0.0)
    out[1:, :] = np.where(support, shrunk, 0.0)
    return out


def project_to_support(beta, support) -> np.ndarray:
    """Zero the coefficient entries of beta that fall outside the support."""
    beta = np.asarray(beta, dtype=np.float64)
    out = beta.copy()
    out[1:, :][~np.asarray(support, dtype=bool)] = 0.0
    return out


def local_solve(data, family: Family, support, warm, shift, lam: float,
                cfg: ProxConfig = ProxConfig(), design=None, callback=None) -> np.ndarray:
    """Minimize the shifted penalized shard loss over the support.

    Args:
        data: n x p shard.
        family: GLM family shared by all nodes.
        support: p x p boolean feasibility mask for coefficients.
        warm: (p+1) x p starting point (projected onto the support).
        shift: (p+1) x p linear tilt, the gradient of the local-minus-global
            loss gap at the reference iterate; pass zeros for a plain fit.
        lam: penalty level, >= 0.
        cfg: solver configuration.
        design: optional precomputed design matrix for ``data``.
        callback: optional ``callback(iteration, xi)`` invoked on every
            accepted iterate, starting with the projected warm start.

    Returns the final iterate, whose coefficient nonzeros lie inside the
    support.  Raises ValueError if the loss turns non-finite at an iterate.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    data = np.asarray(data, dtype=np.float64)
    support = np.asarray(support, dtype=bool)
    shift = np.asarray(shift, dtype=np.float64)
    if not np.isfinite(shift).all():
        raise ValueError("shift contains non-finite values")
    if design is None:
        design = design_matrix(data)
    n = design.shape[0]
    off_support = ~support
    xi = project_to_support(warm, support)
    if xi.shape != shift.shape or xi.shape != (design.shape[1], data.shape[1]):
        raise ValueError(f"beta shape {xi.shape} does not match shard with p={data.shape[1]}")

    # The natural parameters of the accepted iterate are cached: the loss of
    # a candidate and the gradient after acceptance share one matmul.
    def smooth_loss(beta, theta):
        total = float(np.sum(family.b(theta))) - float(np.vdot(theta, data))
        return total / n - float(np.vdot(shift, beta))

    theta = design @ xi
    f_xi = smooth_loss(xi, theta)
    if not np.isfinite(f_xi):
        raise ValueError("non-finite loss at iteration 0")
    if callback is not None:
        callback(0, xi)
    for it in range(cfg.max_iter):
        grad = design.T @ (family.b_prime(theta) - data)
        grad /= n
        grad -= shift
        grad[1:, :][off_support] = 0.0
        gnorm = math.sqrt(float(np.vdot(grad, grad)))
        if gnorm == 0.0:
            break
        s = cfg.s0 / gnorm
        while True:
            xi_new = _prox_step(xi, grad, s, s * lam, support)
            step = xi_new - xi
            theta_new = design @ xi_new
            f_new = smooth_loss(xi_new, theta_new)
            step_sq = float(np.vdot(step, step))
            quad = f_xi + float(np.vdot(grad, step)) + step_sq / (2.0 * s)
            if np.isfinite(f_new) and f_new <= quad:
                break
            s *= cfg.kappa
            if s < STEP_FLOOR:
                log.warning("line search hit step floor at iteration %d; accepting prox step", it)
                break
        if not np.isfinite(f_new):
            raise ValueError(f"non-finite loss at iteration {it}")
        err = math.sqrt(step_sq) / max(1.0, math.sqrt(float(np.vdot(xi, xi))))
        xi, theta, f_xi = xi_new, theta_new, f_new
        if callback is not None:
            callback(it + 1, xi)
        if err <= cfg.tol:
            break
    return xi
