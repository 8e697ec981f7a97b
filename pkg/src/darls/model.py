"""GLM families, the DAG negative log-likelihood, its gradient, and sampling.

A coefficient matrix ``beta`` has shape (p+1) x p: column j parameterizes
the conditional of node j given its parents, ``beta[0, j]`` is the
intercept and ``beta[1 + i, j]`` the effect of node i on node j.  The
natural parameter for observation row x is ``theta_j = beta[0, j] +
sum_i beta[1 + i, j] * x[i]``.
"""

import numpy as np
from scipy.special import expit

from .graphs import topological_order

# Natural parameters above this are linearly extended for the poisson
# cumulant so exp() cannot overflow; see PoissonFamily.
POISSON_THETA_MAX = 30.0


class Family:
    """One GLM family: cumulant b, mean function b', sampler, data checks."""

    name = ""

    def b(self, theta):
        raise NotImplementedError

    def b_prime(self, theta):
        raise NotImplementedError

    def sample(self, theta, rng):
        raise NotImplementedError

    def validate(self, data) -> None:
        """Raise ValueError if shard values are outside the family's domain."""
        if not np.isfinite(data).all():
            raise ValueError("shard contains non-finite values")

    def __repr__(self):
        return f"Family({self.name})"


class GaussianFamily(Family):
    name = "gaussian"

    def b(self, theta):
        return 0.5 * theta * theta

    def b_prime(self, theta):
        return theta

    def sample(self, theta, rng):
        return theta + rng.standard_normal(np.shape(theta))


class LogisticFamily(Family):
    name = "logistic"

    def b(self, theta):
        # softplus via max(theta, 0) + log1p(exp(-|theta|)): overflow-safe
        # and much cheaper than logaddexp in the solver's line search.
        theta = np.asarray(theta, dtype=np.float64)
        out = np.abs(theta)
        np.negative(out, out)
        np.exp(out, out)
        np.log1p(out, out)
        out += np.maximum(theta, 0.0)
        return out

    def b_prime(self, theta):
        return expit(theta)

    def sample(self, theta, rng):
        return (rng.random(np.shape(theta)) < expit(theta)).astype(np.float64)

    def validate(self, data) -> None:
        super().validate(data)
        if not np.isin(data, (0.0, 1.0)).all():
            raise ValueError("logistic shards must contain only 0/1 values")


class PoissonFamily(Family):
    name = "poisson"

    def b(self, theta):
        # C^1 linear extension beyond THETA_MAX keeps b convex and its
        # derivative consistent with b_prime, so finite differences agree.
        capped = np.minimum(theta, POISSON_THETA_MAX)
        excess = np.maximum(theta - POISSON_THETA_MAX, 0.0)
        return np.exp(capped) + np.exp(POISSON_THETA_MAX) * excess

    def b_prime(self, theta):
        return np.exp(np.minimum(theta, POISSON_THETA_MAX))

    def sample(self, theta, rng):
        return rng.poisson(np.exp(np.minimum(theta, POISSON_THETA_MAX))).astype(np.float64)

    def validate(self, data) -> None:
        super().validate(data)
        if (data < 0).any() or not np.equal(np.mod(data, 1), 0).all():
            raise ValueError("poisson shards must contain nonnegative integers")


FAMILIES = {f.name: f for f in (GaussianFamily(), LogisticFamily(), PoissonFamily())}


def get_family(name: str) -> Family:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


def zero_params(p: int) -> np.ndarray:
    return np.zeros((p + 1, p), dtype=np.float64)


def design_matrix(data) -> np.ndarray:
    """Prepend the intercept column of ones to an n x p shard."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("shard must be a 2-d array")
    n = data.shape[0]
    return np.hstack([np.ones((n, 1)), data])


def _check_dims(design, beta):
    if beta.ndim != 2 or beta.shape != (design.shape[1], design.shape[1] - 1):
        raise ValueError(
            f"beta shape {beta.shape} does not match shard with p={design.shape[1] - 1}")


def loss_given_design(design, data, beta, family: Family) -> float:
    """Normalized negative log-likelihood with a precomputed design matrix."""
    beta = np.asarray(beta, dtype=np.float64)
    _check_dims(design, beta)
    if not np.isfinite(beta).all():
        raise ValueError("beta contains non-finite values")
    theta = design @ beta
    # np.sum reduces pairwise, which keeps shard/pooled accumulation
    # differences at the rounding level.
    total = np.sum(family.b(theta) - theta * data)
    return float(total) / design.shape[0]


def gradient_given_design(design, data, beta, family: Family) -> np.ndarray:
    """Gradient of ``loss_given_design`` w.r.t. beta, shape (p+1) x p."""
    beta = np.asarray(beta, dtype=np.float64)
    _check_dims(design, beta)
    if not np.isfinite(beta).all():
        raise ValueError("beta contains non-finite values")
    theta = design @ beta
    return design.T @ (family.b_prime(theta) - data) / design.shape[0]


def shard_loss(data, beta, family: Family) -> float:
    """Normalized negative log-likelihood of one shard at ``beta``."""
    data = np.asarray(data, dtype=np.float64)
    return loss_given_design(design_matrix(data), data, beta, family)


def shard_gradient(data, beta, family: Family) -> np.ndarray:
    """Gradient of the shard loss; row 0 is the intercept block."""
    data = np.asarray(data, dtype=np.float64)
    return gradient_given_design(design_matrix(data), data, beta, family)


def penalty(beta, lam: float) -> float:
    """Group-lasso penalty over coefficient entries (intercepts free)."""
    beta = np.asarray(beta, dtype=np.float64)
    return lam * float(np.abs(beta[1:, :]).sum())


def shard_objective(data, beta, family: Family, lam: float) -> float:
    """Penalized shard loss: loss + lam * sum |beta_ij|."""
    return shard_loss(data, beta, family) + penalty(beta, lam)


def sample_gldag(beta, family: Family, n: int, rng: np.random.Generator) -> np.ndarray:
    """Ancestral sampling of n observations from a GLDAG parameterized by beta.

    Nodes are visited in a topological order of the nonzero coefficient
    pattern; each column is drawn from the family distribution at its
    natural parameter.
    """
    beta = np.asarray(beta, dtype=np.float64)
    p = beta.shape[1]
    if beta.shape != (p + 1, p):
        raise ValueError(f"beta must be (p+1) x p, got {beta.shape}")
    order = topological_order(beta[1:, :] != 0)
    if order is None:
        raise ValueError("coefficient pattern is cyclic")
    data = np.zeros((n, p), dtype=np.float64)
    for j in order:
        theta = beta[0, j] + data @ beta[1:, j]
        data[:, j] = family.sample(theta, rng)
    return data


def load_shard_csv(path) -> np.ndarray:
    """Read a shard CSV (no header, one observation per row)."""
    data = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return data


def save_shard_csv(path, data) -> None:
    np.savetxt(path, np.asarray(data, dtype=np.float64), delimiter=",", fmt="%.17g")
