"""Recovery metrics: moment/correlation matrices and coupling errors.

For binary states the "correlation matrix" is the second-moment matrix
``C_ij = <x_i x_j>``; because the exact definition used for figure-style
comparisons is ambiguous (with/without diagonal, moments vs covariances),
evaluation reports every variant, labeled.
"""

from __future__ import annotations

import numpy as np

from .data import as_dataset
from .errors import CapacityError
from .models import EnergyModel, IsingModel
from .oracle import all_states, exact_model_distribution
from .sampler import SamplerConfig, gibbs_sample_ising

EXACT_MOMENT_LIMIT = 16


def exact_state_moments(model: EnergyModel, theta=None) -> np.ndarray:
    """``<x_i x_j>`` under the model, by full enumeration (d <= 16)."""
    if model.d > EXACT_MOMENT_LIMIT:
        raise CapacityError(
            f"exact moments refused for d={model.d} (limit {EXACT_MOMENT_LIMIT})"
        )
    states = all_states(model.d).astype(np.float64)
    probs = exact_model_distribution(model, theta).probs
    return (states * probs[:, None]).T @ states


def empirical_state_moments(data) -> np.ndarray:
    dataset = as_dataset(data)
    X = dataset.states.astype(np.float64)
    return (X.T @ X) / dataset.n


def sampled_state_moments(model: IsingModel, n_samples: int, seed: int = 0):
    """Monte-Carlo moment estimate with a worst-case standard error.

    Used for models too large to enumerate; returns (moments, max standard
    error of any entry).
    """
    data = gibbs_sample_ising(model, SamplerConfig(n_samples=n_samples, seed=seed))
    X = data.states.astype(np.float64)
    moments = (X.T @ X) / n_samples
    se = np.sqrt(np.maximum(moments * (1.0 - moments), 0.0) / n_samples)
    return moments, float(se.max())


def covariance_from_moments(moments: np.ndarray) -> np.ndarray:
    # for 0/1 states the mean is the moment diagonal
    mu = np.diag(moments)
    return moments - np.outer(mu, mu)


def matrix_mae(a: np.ndarray, b: np.ndarray, include_diagonal: bool = False) -> float:
    diff = np.abs(np.asarray(a) - np.asarray(b))
    if include_diagonal:
        return float(diff.mean())
    d = diff.shape[0]
    if d < 2:
        return 0.0
    off = ~np.eye(d, dtype=bool)
    return float(diff[off].mean())


def symmetrize_coupling(J: np.ndarray) -> np.ndarray:
    """(J + J^T) / 2 -- the combination the energy actually depends on."""
    return 0.5 * (np.asarray(J) + np.asarray(J).T)


def ising_recovery_metrics(
    fitted: IsingModel,
    truth: IsingModel | None = None,
    data=None,
    sample_n: int = 100_000,
    seed: int = 0,
) -> dict:
    """All labeled moment/covariance/coupling error variants.

    With a truth model and d <= 16 the reference moments come from exact
    enumeration; for larger d they are Gibbs estimates with a reported
    Monte-Carlo error.  With a dataset instead, the reference is the
    empirical moment matrix.
    """
    out: dict = {"d": fitted.d}
    if truth is not None:
        if fitted.d <= EXACT_MOMENT_LIMIT:
            ref = exact_state_moments(truth)
            est = exact_state_moments(fitted)
            out["method"] = "exact-enumeration"
        else:
            ref, se_ref = sampled_state_moments(truth, sample_n, seed)
            est, se_est = sampled_state_moments(fitted, sample_n, seed + 1)
            out["method"] = "gibbs-sampled"
            out["monte_carlo_se_max"] = max(se_ref, se_est)
        out["coupling_mae_raw"] = matrix_mae(fitted.J, truth.J, include_diagonal=True)
        out["coupling_mae_symmetrized"] = matrix_mae(
            symmetrize_coupling(fitted.J), symmetrize_coupling(truth.J), include_diagonal=True
        )
    elif data is not None:
        ref = empirical_state_moments(data)
        if fitted.d <= EXACT_MOMENT_LIMIT:
            est = exact_state_moments(fitted)
            out["method"] = "exact-vs-empirical"
        else:
            est, se = sampled_state_moments(fitted, sample_n, seed)
            out["method"] = "gibbs-vs-empirical"
            out["monte_carlo_se_max"] = se
    else:
        raise ValueError("need a truth model or a dataset to compare against")

    out["moment_mae_offdiag"] = matrix_mae(est, ref)
    out["moment_mae_full"] = matrix_mae(est, ref, include_diagonal=True)
    out["covariance_mae_offdiag"] = matrix_mae(
        covariance_from_moments(est), covariance_from_moments(ref)
    )
    out["covariance_mae_full"] = matrix_mae(
        covariance_from_moments(est), covariance_from_moments(ref), include_diagonal=True
    )
    out["moments_fitted"] = est.tolist()
    out["moments_reference"] = ref.tolist()
    return out
