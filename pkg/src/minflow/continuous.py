"""Flow objective for continuous states, and its small-step score-matching limit.

For continuous models the bit-flip neighborhood is replaced by a handful of
sampled neighbor states per observation: add Gaussian noise and (optionally)
rescale back to the observation's Euclidean norm,

    x_tilde = (x + n) * ||x|| / ||x + n||,   n ~ N(0, noise_scale^2 I).

Neighbor draws are derived from counter-style per-observation RNG streams
(global seed + data index), so a fixed seed yields the same neighbors no
matter how the evaluation is partitioned, and repeated calls are
bit-identical.  With ``symmetric=True`` the draws come in antithetic pairs
(+n, -n), which cancels the odd-order sampling noise and is what makes the
small-noise limit converge cleanly to score matching.

The proposal-density correction factor ``sqrt(g_ji / g_ij)`` is exposed via
``hastings_correction`` but is the identity for the shipped proposal: both
states of a pair share a norm, and the norm-preserving Gaussian proposal
density between equal-norm states depends only on their normalized inner
product, hence is symmetric.  Supply ``proposal_log_density(src, dst)`` to
study asymmetric schemes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import as_dataset
from .discrete import ObjectiveReport
from .errors import DimensionMismatchError, NumericError, UnsupportedModelError
from .models import EnergyModel
from .reduction import block_slices, tree_combine


@dataclass(frozen=True)
class NeighborConfig:
    """Sampled-neighbor connectivity for continuous states."""

    n_neighbors: int = 2
    noise_scale: float = 0.1
    rescale_to_input_norm: bool = True
    hastings_correction: bool = False
    symmetric: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        if not self.noise_scale > 0:
            raise ValueError("noise_scale must be positive")
        if self.symmetric and self.n_neighbors % 2:
            raise ValueError("symmetric sampling requires an even n_neighbors")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def _draw_noise(cfg: NeighborConfig, d: int, rng: np.random.Generator) -> np.ndarray:
    if cfg.symmetric:
        half = rng.standard_normal((cfg.n_neighbors // 2, d))
        return np.concatenate([half, -half], axis=0)
    return rng.standard_normal((cfg.n_neighbors, d))


def sample_neighbors(x, cfg: NeighborConfig, data_index: int = 0) -> np.ndarray:
    """Draw ``cfg.n_neighbors`` neighbor states of ``x``.

    Deterministic given (cfg.seed, data_index); with rescaling on, every
    output has the input's Euclidean norm to machine precision.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("expected a single state vector")
    noise = _draw_noise(cfg, x.size, _stream(cfg.seed, data_index))
    shifted = x[None, :] + cfg.noise_scale * noise
    if not cfg.rescale_to_input_norm:
        return shifted
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise ValueError("cannot rescale neighbors of a zero-norm state")
    return shifted * (norm / np.linalg.norm(shifted, axis=1))[:, None]


def _neighbor_tensor(X: np.ndarray, cfg: NeighborConfig) -> np.ndarray:
    n, d = X.shape
    out = np.empty((n, cfg.n_neighbors, d))
    for i in range(n):
        out[i] = sample_neighbors(X[i], cfg, data_index=i)
    return out


def mpf_objective_continuous(
    model: EnergyModel,
    data,
    theta=None,
    cfg: NeighborConfig | None = None,
    eps: float = 1.0,
    clamp_cap: float = 30.0,
    n_workers: int = 1,
    proposal_log_density=None,
    neighbors: np.ndarray | None = None,
) -> ObjectiveReport:
    """Sampled-neighbor flow objective with the neighbors held fixed.

    The gradient is exact for the evaluated sum (neighbors frozen at their
    seeded draws), so it agrees with finite differences of the value at the
    same seed.  Pass a precomputed ``neighbors`` tensor (n, n_neighbors, d)
    to reuse one frozen draw across many evaluations of the same fit.
    """
    cfg = cfg or NeighborConfig()
    dataset = as_dataset(data, binary=False)
    if dataset.binary:
        raise DimensionMismatchError("continuous objective requires a continuous dataset")
    if dataset.d != model.d:
        raise DimensionMismatchError(
            f"dataset dimension {dataset.d} does not match model dimension {model.d}"
        )
    if not eps > 0:
        raise ValueError("eps must be positive")
    theta = model.resolve_params(theta)

    X = dataset.states
    n, d = X.shape
    if neighbors is None:
        neighbors = _neighbor_tensor(X, cfg)
    elif neighbors.shape != (n, cfg.n_neighbors, d):
        raise DimensionMismatchError(
            f"neighbor tensor has shape {neighbors.shape}, expected {(n, cfg.n_neighbors, d)}"
        )
    e_data = model.energies(X, theta)
    e_nbr = model.energies(neighbors.reshape(-1, d), theta).reshape(n, cfg.n_neighbors)
    arg = 0.5 * (e_data[:, None] - e_nbr)
    if cfg.hastings_correction and proposal_log_density is not None:
        fwd = proposal_log_density(X[:, None, :], neighbors)
        rev = proposal_log_density(neighbors, X[:, None, :])
        arg = arg + 0.5 * (rev - fwd)
    bad = ~np.isfinite(arg)
    if bad.any():
        r = int(np.argwhere(bad)[0, 0])
        raise NumericError(
            "non-finite energy during continuous objective evaluation",
            state=X[r].copy(),
        )
    weights = np.exp(np.minimum(arg, clamp_cap))

    def part(sl):
        w = weights[sl]
        grad = model.weighted_param_gradient(X[sl], w.sum(axis=1), theta)
        grad = grad - model.weighted_param_gradient(
            neighbors[sl].reshape(-1, d), w.ravel(), theta
        )
        return float(w.sum()), grad

    parts = [part(sl) for sl in block_slices(n, n_workers)]
    total, grad_total = tree_combine(parts, lambda a, b: (a[0] + b[0], a[1] + b[1]))

    value = eps * (total / n)
    gradient = (0.5 * eps / n) * grad_total
    return ObjectiveReport(
        value, gradient, n * cfg.n_neighbors, "sampled-neighbor", seed=cfg.seed
    )


@dataclass
class SmReport:
    """Score-matching objective value and parameter gradient."""

    value: float
    gradient: np.ndarray


def score_matching_objective(model: EnergyModel, data, theta=None) -> SmReport:
    """``sum_x [ 0.5 ||dE/dx||^2 - laplacian E(x) ]`` with analytic gradient.

    Requires a model with analytic state derivatives; raises
    :class:`UnsupportedModelError` otherwise.
    """
    dataset = as_dataset(data, binary=False)
    if dataset.binary:
        raise DimensionMismatchError("score matching requires a continuous dataset")
    if dataset.d != model.d:
        raise DimensionMismatchError(
            f"dataset dimension {dataset.d} does not match model dimension {model.d}"
        )
    theta = model.resolve_params(theta)
    X = dataset.states
    grads = model.state_gradients(X, theta)
    laps = model.state_laplacians(X, theta)
    value = float(0.5 * (grads * grads).sum() - laps.sum())
    return SmReport(value, model.sm_param_gradient(X, theta))


def state_gradient_of_energy(model: EnergyModel, x, theta=None) -> np.ndarray:
    """Analytic ``dE/dx`` at a single state."""
    if model.discrete:
        raise UnsupportedModelError("state derivatives are undefined for binary models")
    return model.state_gradient(x, theta)


def state_laplacian_of_energy(model: EnergyModel, x, theta=None) -> float:
    """Analytic trace of the state Hessian of E at a single state."""
    if model.discrete:
        raise UnsupportedModelError("state derivatives are undefined for binary models")
    return model.state_laplacian(x, theta)
