"""Synthetic data generation: Gibbs chains, random couplings, CD-1 baseline.

Every sampler is fully determined by (seed, config).  Site updates within a
chain happen in fixed ascending order, each site drawn from its exact
conditional given the rest; independent chains would get independent
substreams, but a single chain is strictly sequential.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._gibbs_kernel import run_sweeps
from .data import Dataset, as_dataset
from .errors import DimensionMismatchError
from .models import IsingModel, RbmMarginalModel


@dataclass(frozen=True)
class SamplerConfig:
    """Chain length bookkeeping.

    ``burn_in``/``thin`` count whole sweeps (one update of every site); when
    left as None they default to 100*d and d respectively -- recorded in
    dataset sidecars so fixtures are self-describing.
    """

    n_samples: int
    burn_in: int | None = None
    thin: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thin is not None and self.thin < 1:
            raise ValueError("thin must be >= 1")

    def resolve(self, d: int) -> tuple[int, int]:
        burn = 100 * d if self.burn_in is None else self.burn_in
        thin = d if self.thin is None else self.thin
        return burn, thin


def gibbs_sample_ising(model: IsingModel, cfg: SamplerConfig) -> Dataset:
    """Single-chain Gibbs sampler for the pairwise binary model.

    After ``burn_in`` sweeps, the chain records one state every ``thin``
    sweeps until ``n_samples`` states are collected.
    """
    d = model.d
    burn_in, thin = cfg.resolve(d)
    rng = np.random.default_rng(cfg.seed)

    A = np.ascontiguousarray(model.J + model.J.T)
    diag = np.ascontiguousarray(np.diag(model.J))
    x = rng.integers(0, 2, size=d).astype(np.int64)
    local_field = A @ x.astype(np.float64)

    out = np.empty((cfg.n_samples, d), dtype=np.uint8)
    if burn_in:
        run_sweeps(A, diag, x, local_field, rng.random((burn_in, d)))
    for i in range(cfg.n_samples):
        run_sweeps(A, diag, x, local_field, rng.random((thin, d)))
        out[i] = x
    return Dataset(out, binary=True)


def random_coupling(d: int, variance: float, seed: int = 0) -> IsingModel:
    """Ising model with i.i.d. Gaussian couplings of the given variance."""
    if variance < 0:
        raise ValueError("variance must be non-negative")
    rng = np.random.default_rng(seed)
    return IsingModel(rng.normal(0.0, np.sqrt(variance), size=(d, d)))


def rbm_gibbs_step(model: RbmMarginalModel, x_vis, rng: np.random.Generator):
    """One block-Gibbs step: sample hidden given visible, then visible given hidden.

    Accepts a single state or an (n, d_vis) batch (rows step independently)
    and returns the same shape.
    """
    x = np.asarray(x_vis)
    single = x.ndim == 1
    X = np.atleast_2d(x).astype(np.float64)
    if X.shape[1] != model.d:
        raise DimensionMismatchError(
            f"visible states have dimension {X.shape[1]}, model expects {model.d}"
        )
    # joint energy sum_ij W_ij v_i h_j  =>  P(h_j=1|v) = sigmoid(-(v W)_j)
    p_hid = expit(-(X @ model.W))
    hid = (rng.random(p_hid.shape) < p_hid).astype(np.float64)
    p_vis = expit(-(hid @ model.W.T))
    vis = (rng.random(p_vis.shape) < p_vis).astype(np.uint8)
    return vis[0] if single else vis


def gibbs_sample_rbm(model: RbmMarginalModel, cfg: SamplerConfig) -> Dataset:
    """Single-chain block-Gibbs sampler over the RBM's visible states."""
    d = model.d
    burn_in, thin = cfg.resolve(d)
    rng = np.random.default_rng(cfg.seed)
    x = rng.integers(0, 2, size=d).astype(np.uint8)
    for _ in range(burn_in):
        x = rbm_gibbs_step(model, x, rng)
    out = np.empty((cfg.n_samples, d), dtype=np.uint8)
    for i in range(cfg.n_samples):
        for _ in range(thin):
            x = rbm_gibbs_step(model, x, rng)
        out[i] = x
    return Dataset(out, binary=True)


def cd1_gradient(model: RbmMarginalModel, batch, rng: np.random.Generator) -> np.ndarray:
    """One-step contrastive-divergence update direction.

    Data expectation of ``dE/dW`` minus the same expectation after a single
    block-Gibbs step per sample; descending along the returned vector is the
    classic CD-1 update.
    """
    dataset = as_dataset(batch, binary=True)
    if dataset.d != model.d:
        raise DimensionMismatchError(
            f"batch dimension {dataset.d} does not match model dimension {model.d}"
        )
    X = dataset.states
    stepped = rbm_gibbs_step(model, X, rng)
    w = np.full(dataset.n, 1.0 / dataset.n)
    return model.weighted_param_gradient(X, w) - model.weighted_param_gradient(stepped, w)
