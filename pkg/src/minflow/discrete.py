"""Probability-flow objective for binary models under bit-flip connectivity.

For every observed state j and each of its d single-bit-flip neighbors i,
the objective accumulates ``exp(-(E_i - E_j) / 2)`` -- the rate at which
probability would initially flow out of the data into that neighbor if the
model's master-equation dynamics were switched on.  The value is

    value = (eps / |D|) * sum_{j in data} sum_{i in N(j), kept(i)} exp(-diff/2)

where ``kept`` drops neighbors that are themselves observed states in
"strict" mode and keeps everything in "full-neighbor" mode (the default:
with small d and many samples the observations can cover the whole state
space, which makes the strict sum collapse to zero).  Duplicated
observations contribute with multiplicity; internally the sum runs over the
lexicographically sorted distinct states with counts, so evaluation is
invariant -- bit for bit -- under permutations of the dataset.

The gradient is the exact derivative of this sum:
``-(eps / 2|D|) * sum w_ji * d(E_i - E_j)/dtheta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import as_dataset
from .errors import DimensionMismatchError, NumericError
from .models import EnergyModel
from .reduction import block_slices, tree_combine

MODES = ("full-neighbor", "strict")
STABILIZATIONS = ("clamp", "log-sum-exp")


@dataclass(frozen=True)
class FitConfig:
    """Evaluation policy for the discrete objective.

    mode
        "full-neighbor" sums over all d bit-flip neighbors of each data
        point; "strict" drops neighbors that are themselves data states.
    eps
        Flow-time scale; a pure multiplicative constant on value and
        gradient (the minimizer does not depend on it).
    stabilization
        "clamp" saturates the exponential's argument at ``clamp_cap``
        (value and gradient weights both use the saturated argument, so
        they stay consistent and finite even for wild parameters);
        "log-sum-exp" accumulates the value exactly in the log domain and
        derives gradient weights only while they are representable.
    n_workers / strict_serial
        Worker partitioning for the deterministic pairwise-tree reduction;
        ``strict_serial`` forces a single block regardless of n_workers.
    """

    mode: str = "full-neighbor"
    eps: float = 1.0
    stabilization: str = "clamp"
    clamp_cap: float = 30.0
    n_workers: int = 1
    strict_serial: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.stabilization not in STABILIZATIONS:
            raise ValueError(
                f"stabilization must be one of {STABILIZATIONS}, got {self.stabilization!r}"
            )
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not np.isfinite(self.clamp_cap):
            raise ValueError("clamp cap must be finite")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")

    @property
    def effective_workers(self) -> int:
        return 1 if self.strict_serial else self.n_workers


@dataclass
class ObjectiveReport:
    """Objective value, its full parameter gradient, and evaluation metadata."""

    value: float
    gradient: np.ndarray
    n_terms: int
    mode: str
    seed: int | None = None
    log_value: float | None = None
    extras: dict = field(default_factory=dict)


def bitflip_neighbors(x) -> np.ndarray:
    """All d states within Hamming distance 1 of ``x`` (row k flips bit k)."""
    x = np.asarray(x, dtype=np.uint8)
    if x.ndim != 1:
        raise DimensionMismatchError("expected a single state vector")
    out = np.repeat(x[None, :], x.size, axis=0)
    idx = np.arange(x.size)
    out[idx, idx] ^= 1
    return out


def _strict_keep_mask(unique_states: np.ndarray, keys: frozenset) -> np.ndarray:
    n, d = unique_states.shape
    keep = np.ones((n, d), dtype=bool)
    for k in range(d):
        flipped = unique_states.copy()
        flipped[:, k] ^= 1
        for r in range(n):
            if flipped[r].tobytes() in keys:
                keep[r, k] = False
    return keep


def mpf_objective(
    model: EnergyModel, data, theta=None, cfg: FitConfig | None = None
) -> ObjectiveReport:
    """Evaluate the bit-flip flow objective and its exact gradient.

    ``data`` may be a :class:`~minflow.data.Dataset` or any (n, d) 0/1
    array.  Raises :class:`NumericError` (carrying the offending state) if
    a non-finite energy difference shows up.
    """
    cfg = cfg or FitConfig()
    dataset = as_dataset(data, binary=True)
    if not dataset.binary:
        raise DimensionMismatchError("discrete objective requires a binary dataset")
    if dataset.d != model.d:
        raise DimensionMismatchError(
            f"dataset dimension {dataset.d} does not match model dimension {model.d}"
        )
    theta = model.resolve_params(theta)

    uniq, counts = dataset.compressed()
    diffs = model.flip_energy_diffs(uniq, theta)
    bad = ~np.isfinite(diffs)
    if bad.any():
        r = int(np.argwhere(bad)[0, 0])
        raise NumericError(
            "non-finite energy difference during objective evaluation",
            state=uniq[r].copy(),
        )

    arg = -0.5 * diffs
    if cfg.mode == "strict":
        keep = _strict_keep_mask(uniq, dataset.state_keys())
    else:
        keep = np.ones_like(arg, dtype=bool)

    n = dataset.n
    n_terms = int(counts @ keep.sum(axis=1))
    zeros = np.zeros(theta.size)
    if n_terms == 0:
        return ObjectiveReport(0.0, zeros, 0, cfg.mode, log_value=-np.inf)

    log_value = None
    if cfg.stabilization == "clamp":
        weights = np.exp(np.minimum(arg, cfg.clamp_cap))
    else:
        kept_arg = arg[keep]
        kept_counts = np.broadcast_to(counts[:, None], arg.shape)[keep]
        log_total = logsumexp(kept_arg + np.log(kept_counts))
        log_value = float(np.log(cfg.eps) - np.log(n) + log_total)
        peak = float(kept_arg.max())
        with np.errstate(over="ignore"):
            scale = np.exp(peak)
        if not np.isfinite(scale):
            r = int(np.argwhere(arg == peak)[0, 0])
            raise NumericError(
                "gradient weights not representable under log-sum-exp stabilization",
                state=uniq[r].copy(),
            )
        weights = np.exp(arg - peak) * scale
    weights = weights * keep

    weighted = weights * counts[:, None]
    slices = block_slices(uniq.shape[0], cfg.effective_workers)
    parts = [
        (
            float(weighted[sl].sum()),
            model.flip_weighted_param_gradient(uniq[sl], weighted[sl], theta),
        )
        for sl in slices
    ]
    total, grad_total = tree_combine(parts, lambda a, b: (a[0] + b[0], a[1] + b[1]))

    value = cfg.eps * (total / n) if cfg.stabilization == "clamp" else float(np.exp(log_value))
    gradient = (-0.5 * cfg.eps / n) * grad_total
    return ObjectiveReport(value, gradient, n_terms, cfg.mode, log_value=log_value)
