"""Independent oracles shared by the test modules.

Everything here recomputes expected values from first principles
(finite differences, subgradient conditions, normal equations) so the
tests never trust the code paths they are checking.
"""

import numpy as np

from darls.channels import local_channels
from darls.engine import WorkerPool
from darls.model import shard_loss
from darls.prox import ProxConfig, local_solve


def finite_difference_gradient(data, beta, family, step=1e-5):
    """Central-difference gradient of the shard loss, entry by entry."""
    beta = np.asarray(beta, dtype=np.float64)
    grad = np.zeros_like(beta)
    for idx in np.ndindex(beta.shape):
        plus = beta.copy()
        minus = beta.copy()
        plus[idx] += step
        minus[idx] -= step
        grad[idx] = (shard_loss(data, plus, family) - shard_loss(data, minus, family)) / (2 * step)
    return grad


def kkt_residual(data, family, support, beta, shift, lam):
    """Worst subgradient-optimality violation of a lasso solution.

    For supported nonzero coefficients the (shifted) gradient must equal
    -lam * sign; for supported zeros it must lie in [-lam, lam]; intercept
    gradients must vanish.  Returns the max violation over all entries.
    """
    from darls.model import shard_gradient

    grad = shard_gradient(data, beta, family) - shift
    support = np.asarray(support, dtype=bool)
    worst = np.abs(grad[0, :]).max()
    coef = beta[1:, :]
    g = grad[1:, :]
    nonzero = support & (coef != 0)
    zero = support & (coef == 0)
    if nonzero.any():
        worst = max(worst, np.abs(g[nonzero] + lam * np.sign(coef[nonzero])).max())
    if zero.any():
        worst = max(worst, np.maximum(np.abs(g[zero]) - lam, 0.0).max())
    return float(worst)


def least_squares_fit(x_parent, x_child):
    """Closed-form intercept/slope of a one-parent gaussian node."""
    design = np.column_stack([np.ones_like(x_parent), x_parent])
    coef, *_ = np.linalg.lstsq(design, x_child, rcond=None)
    return coef  # (intercept, slope)


TIGHT = ProxConfig(tol=1e-12, max_iter=20000)


def pooled_solution(data, family, support, lam, warm=None, cfg=TIGHT):
    """Tightly-converged penalized fit on pooled data (the K=1 reference)."""
    from darls.model import zero_params

    if warm is None:
        warm = zero_params(np.asarray(data).shape[1])
    shift = np.zeros_like(warm)
    return local_solve(data, family, support, warm, shift, lam, cfg)


def make_pool(shards, family_name):
    """In-process worker pool over a list of shard arrays."""
    return WorkerPool(local_channels(shards, family_name), family_name)


def split_rows(data, k, rng):
    """Random near-even partition of rows (local copy to keep tests self-contained)."""
    n = data.shape[0]
    order = rng.permutation(n)
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    out, start = [], 0
    for size in sizes:
        out.append(data[order[start:start + size]].copy())
        start += size
    return out
