"""Dense, exponential-cost reference implementations of the full dynamics.

Everything here enumerates the complete state space, so it only runs for a
dozen bits or so -- which is the point: these routines validate every sparse
fast path on small systems, formula by formula.

State indexing convention (fixed so fixtures are portable): a binary state
maps to the integer whose k-th *least significant* bit is bit k of the
state.

The flow matrix stores, at entry (i, j), the rate at which probability
flows from state j into state i:

    flow[i, j] = g_ij * exp((E_j - E_i) / 2)      for i != j,
    flow[j, j] = -sum_{i != j} flow[i, j]         (columns sum to zero),

with g the symmetric 0/1 connectivity pattern.  Together with the Boltzmann
form of the stationary distribution this satisfies detailed balance by
construction, so ``exp(flow * t) p`` relaxes any distribution onto the
model's equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import logsumexp

from .data import as_dataset
from .discrete import FitConfig, mpf_objective
from .errors import CapacityError, DimensionMismatchError
from .models import EnergyModel

MAX_DENSE_BITS = 12
MAX_ENUM_BITS = 20

CONNECTIVITIES = ("bitflip", "all-pairs")


def all_states(d: int) -> np.ndarray:
    """Every binary state of dimension d, ordered by state index."""
    if d > MAX_ENUM_BITS:
        raise CapacityError(f"enumeration of 2^{d} states refused (limit {MAX_ENUM_BITS})")
    idx = np.arange(2**d, dtype=np.uint32)
    return ((idx[:, None] >> np.arange(d)[None, :]) & 1).astype(np.uint8)


def state_index(x) -> int:
    x = np.asarray(x).astype(np.uint64)
    return int((x << np.arange(x.size, dtype=np.uint64)).sum())


def _connectivity_matrix(d: int, connectivity: str) -> np.ndarray:
    if connectivity not in CONNECTIVITIES:
        raise ValueError(f"connectivity must be one of {CONNECTIVITIES}")
    size = 2**d
    if connectivity == "all-pairs":
        return np.ones((size, size)) - np.eye(size)
    g = np.zeros((size, size))
    idx = np.arange(size)
    for k in range(d):
        g[idx ^ (1 << k), idx] = 1.0
    return g


@dataclass(frozen=True)
class TransitionMatrix:
    """Dense flow matrix over the full state space."""

    d: int
    entries: np.ndarray
    connectivity: str = "bitflip"

    def column_sum_error(self) -> float:
        return float(np.abs(self.entries.sum(axis=0)).max())


@dataclass(frozen=True)
class DistributionVector:
    """Probability vector over all 2^d states."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 1:
            raise DimensionMismatchError("distribution must be a vector")
        if p.min() < -1e-12:
            raise ValueError(f"distribution has a negative entry ({p.min():g})")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"distribution sums to {p.sum():.15g}, expected 1")
        np.clip(p, 0.0, None, out=p)
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def d(self) -> int:
        return int(round(np.log2(self.probs.size)))


def build_transition_matrix(
    model: EnergyModel, theta=None, connectivity: str = "bitflip"
) -> TransitionMatrix:
    """Materialize the full flow matrix for a binary model."""
    d = model.d
    if d > MAX_DENSE_BITS:
        raise CapacityError(
            f"dense flow matrix for d={d} refused (limit {MAX_DENSE_BITS} bits)"
        )
    energies = model.energies(all_states(d), theta)
    g = _connectivity_matrix(d, connectivity)
    flow = g * np.exp(0.5 * (energies[None, :] - energies[:, None]))
    np.fill_diagonal(flow, 0.0)
    np.fill_diagonal(flow, -flow.sum(axis=0))
    return TransitionMatrix(d, flow, connectivity)


def empirical_distribution(data, d: int | None = None) -> DistributionVector:
    """Histogram of observed states over the full state space."""
    dataset = as_dataset(data, binary=True)
    d = dataset.d if d is None else d
    counts = np.zeros(2**d)
    idx = (
        dataset.states.astype(np.uint64)
        << np.arange(dataset.d, dtype=np.uint64)[None, :]
    ).sum(axis=1)
    np.add.at(counts, idx.astype(np.intp), 1.0)
    return DistributionVector(counts / dataset.n)


def evolve(p0: DistributionVector, tm: TransitionMatrix, t: float) -> DistributionVector:
    """Run the master-equation dynamics for time t: ``exp(flow * t) p0``."""
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    p0 = np.asarray(p0.probs if isinstance(p0, DistributionVector) else p0)
    if p0.size != tm.entries.shape[0]:
        raise DimensionMismatchError("distribution/matrix size mismatch")
    if t == 0:
        return DistributionVector(p0)
    return DistributionVector(expm(tm.entries * t) @ p0)


def check_detailed_balance(tm: TransitionMatrix, p_inf: DistributionVector) -> float:
    """Max over pairs of |flow[j,i] p_i - flow[i,j] p_j|."""
    p = np.asarray(p_inf.probs if isinstance(p_inf, DistributionVector) else p_inf)
    F = tm.entries * p[None, :]  # F[i, j] = flow j -> i at equilibrium
    off = F - F.T
    np.fill_diagonal(off, 0.0)
    return float(np.abs(off).max())


def exact_log_partition(model: EnergyModel, theta=None) -> float:
    d = model.d
    if d > MAX_ENUM_BITS:
        raise CapacityError(f"partition enumeration refused for d={d}")
    return float(logsumexp(-model.energies(all_states(d), theta)))


def exact_partition(model: EnergyModel, theta=None) -> float:
    return float(np.exp(exact_log_partition(model, theta)))


def exact_model_distribution(model: EnergyModel, theta=None) -> DistributionVector:
    energies = model.energies(all_states(model.d), theta)
    log_z = logsumexp(-energies)
    return DistributionVector(np.exp(-energies - log_z))


def exact_kl(p, q) -> float:
    """``sum_{i: p_i > 0} p_i log(p_i / q_i)``; requires q > 0 on p's support."""
    p = np.asarray(p.probs if isinstance(p, DistributionVector) else p, dtype=np.float64)
    q = np.asarray(q.probs if isinstance(q, DistributionVector) else q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionMismatchError("distributions must have equal length")
    support = p > 0
    if np.any(q[support] <= 0):
        raise ValueError("q vanishes on the support of p; KL divergence is infinite")
    return float((p[support] * (np.log(p[support]) - np.log(q[support]))).sum())


def brute_force_objective(
    model: EnergyModel,
    data,
    theta=None,
    eps: float = 1.0,
    mode: str = "strict",
    connectivity: str = "bitflip",
) -> float:
    """Objective value assembled from the dense flow matrix.

    Strict mode sums flow from data states into non-data states only
    (weighted by empirical frequencies); full-neighbor mode keeps flow into
    data states too.  This is the equivalence oracle for the sparse path.
    """
    if mode not in ("strict", "full-neighbor"):
        raise ValueError(f"unknown mode {mode!r}")
    dataset = as_dataset(data, binary=True)
    tm = build_transition_matrix(model, theta, connectivity)
    p0 = empirical_distribution(dataset).probs
    flow = tm.entries.copy()
    np.fill_diagonal(flow, 0.0)
    if mode == "strict":
        flow = flow[p0 == 0.0, :]
    return float(eps * (flow @ p0).sum())


def kl_growth_rate(
    model: EnergyModel, data, theta=None, times=(1e-3, 1e-4, 1e-5)
) -> dict:
    """Finite-time KL growth rates and their extrapolation to t = 0.

    Computes ``KL(p0 || exp(flow t) p0) / t`` on the given time grid, fits a
    line in t, and reports the intercept -- which should match the
    strict-mode objective value at unit flow time.
    """
    dataset = as_dataset(data, binary=True)
    tm = build_transition_matrix(model, theta)
    p0 = empirical_distribution(dataset)
    times = np.asarray(sorted(times, reverse=True), dtype=np.float64)
    rates = np.array(
        [exact_kl(p0, evolve(p0, tm, t)) / t for t in times]
    )
    intercept = float(np.polyfit(times, rates, 1)[1])
    strict = mpf_objective(model, dataset, theta, FitConfig(mode="strict")).value
    return {
        "times": times.tolist(),
        "rates": rates.tolist(),
        "extrapolated_rate": intercept,
        "strict_objective": strict,
    }


def numerical_hessian(
    model: EnergyModel,
    data,
    theta=None,
    h: float = 1e-5,
    cfg: FitConfig | None = None,
) -> np.ndarray:
    """Central-difference Hessian of the discrete objective (symmetrized)."""
    cfg = cfg or FitConfig()
    theta = model.resolve_params(theta)
    p = theta.size
    H = np.empty((p, p))
    for m in range(p):
        step = np.zeros(p)
        step[m] = h
        g_plus = mpf_objective(model, data, theta + step, cfg).gradient
        g_minus = mpf_objective(model, data, theta - step, cfg).gradient
        H[:, m] = (g_plus - g_minus) / (2.0 * h)
    return 0.5 * (H + H.T)


def min_hessian_eigenvalue(
    model: EnergyModel, data, theta=None, h: float = 1e-5, cfg: FitConfig | None = None
) -> float:
    return float(np.linalg.eigvalsh(numerical_hessian(model, data, theta, h, cfg)).min())


def exact_nll(model: EnergyModel, data, theta=None):
    """Average negative log likelihood and gradient, by full enumeration.

    ``nll = mean E(x) + log Z``; the gradient is the data expectation of
    ``dE/dtheta`` minus the model expectation.  This is the exact
    maximum-likelihood objective used as the recovery oracle.
    """
    dataset = as_dataset(data, binary=True)
    theta = model.resolve_params(theta)
    states = all_states(model.d)
    energies = model.energies(states, theta)
    log_z = float(logsumexp(-energies))
    probs = np.exp(-energies - log_z)

    uniq, counts = dataset.compressed()
    w = counts / dataset.n
    value = float(model.energies(uniq, theta) @ w + log_z)
    grad = model.weighted_param_gradient(uniq, w, theta)
    grad = grad - model.weighted_param_gradient(states, probs, theta)
    return value, grad
