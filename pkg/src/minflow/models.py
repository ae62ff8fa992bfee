"""Energy-model families and their parameter/state derivatives.

Every model assigns a scalar energy ``E(x; theta)`` to a state ``x``; the
(unnormalized) model probability is ``exp(-E)`` with temperature fixed at 1.
The flow-matching objectives only ever consume energy *differences* and
parameter gradients, so no model here knows anything about its partition
function.

Three concrete families are provided, plus a one-parameter Gaussian used as
an analytically tractable continuous test model:

* :class:`IsingModel` -- binary pairwise model, couplings ``J`` with the
  diagonal acting as per-site bias:  ``E = sum_{i!=j} J_ij x_i x_j + sum_i
  J_ii x_i``.  For 0/1 states this is exactly ``x^T J x``.
* :class:`RbmMarginalModel` -- the visible-state energy of a binary RBM
  after summing out the hidden layer analytically:
  ``E = -sum_j softplus(-(x^T W)_j)``.
* :class:`PotModel` -- product of Student-t experts over continuous states:
  ``E = sum_i alpha_i log(1 + (J_i . x)^2)`` with ``alpha_i = exp(log_alpha_i)``
  kept positive by optimizing in the log domain.
* :class:`IsotropicGaussianModel` -- ``E = precision * ||x||^2 / 2``.

Models are immutable; all operations are pure and safe to call concurrently.
Batched methods take an ``(n, d)`` state matrix and are the hot paths; the
single-state methods are conveniences layered on top.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatchError, UnsupportedModelError
from .params import ParamLayout

MODEL_FILE_VERSION = 1


def _softplus(a):
    # log(1 + exp(a)), overflow-safe for large |a|
    return np.logaddexp(0.0, a)


def _as_state_matrix(X, d: int) -> np.ndarray:
    """Coerce one state or a stack of states to a float64 (n, d) matrix."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != d:
        raise DimensionMismatchError(
            f"state array has shape {X.shape}, expected (*, {d})"
        )
    return np.ascontiguousarray(X, dtype=np.float64)


def _frozen_array(obj, value, name):
    value = np.array(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise ValueError(f"{name} contains non-finite entries")
    value.flags.writeable = False
    object.__setattr__(obj, name, value)
    return value


class EnergyModel(ABC):
    """Contract shared by all model families.

    Subclasses must provide the batched primitives (``energies``,
    ``weighted_param_gradient``) and, for binary families, may override the
    bit-flip fast paths; generic fallbacks are supplied so that simple
    wrapper models written against this interface (e.g. in tests) work
    without extra effort.
    """

    discrete: bool = False

    @property
    @abstractmethod
    def d(self) -> int:
        """State dimension."""

    @property
    @abstractmethod
    def layout(self) -> ParamLayout:
        """Named-segment layout of the flat parameter vector."""

    @abstractmethod
    def default_params(self) -> np.ndarray:
        """The model's stored parameters as a flat vector (copy)."""

    @abstractmethod
    def with_params(self, theta) -> "EnergyModel":
        """A new model of the same family carrying ``theta``."""

    @abstractmethod
    def energies(self, X, theta=None) -> np.ndarray:
        """Energies of a stack of states, shape (n,)."""

    @abstractmethod
    def weighted_param_gradient(self, X, weights, theta=None) -> np.ndarray:
        """``sum_n weights_n * dE(x_n)/dtheta`` as a flat vector."""

    # -- parameter handling -------------------------------------------------

    def resolve_params(self, theta) -> np.ndarray:
        if theta is None:
            return self.default_params()
        return self.layout.validate(theta)

    # -- single-state conveniences ------------------------------------------

    def energy(self, x, theta=None) -> float:
        return float(self.energies(_as_state_matrix(x, self.d), theta)[0])

    def param_gradient(self, x, theta=None) -> np.ndarray:
        X = _as_state_matrix(x, self.d)
        return self.weighted_param_gradient(X, np.ones(1), theta)

    # -- bit-flip surface (binary models) ------------------------------------

    def _require_discrete(self):
        if not self.discrete:
            raise UnsupportedModelError(
                f"{type(self).__name__} is not a binary model; bit-flip "
                "operations are undefined"
            )

    def _check_flip_index(self, k: int):
        if not 0 <= k < self.d:
            raise DimensionMismatchError(
                f"flip index {k} out of range for dimension {self.d}"
            )

    def flip_energy_diffs(self, X, theta=None) -> np.ndarray:
        """``E(flip(x, k)) - E(x)`` for every state row and every bit k.

        Returns an (n, d) matrix.  Generic fallback computes d batched
        energy evaluations; concrete families override with O(n*d) paths.
        """
        self._require_discrete()
        X = _as_state_matrix(X, self.d)
        base = self.energies(X, theta)
        out = np.empty_like(X)
        for k in range(self.d):
            flipped = X.copy()
            flipped[:, k] = 1.0 - flipped[:, k]
            out[:, k] = self.energies(flipped, theta) - base
        return out

    def flip_weighted_param_gradient(self, X, flip_weights, theta=None) -> np.ndarray:
        """``sum_{n,k} w_nk * d[E(flip(x_n,k)) - E(x_n)]/dtheta`` (flat).

        ``flip_weights`` has shape (n, d).  Generic fallback; overridden by
        the concrete families.
        """
        self._require_discrete()
        X = _as_state_matrix(X, self.d)
        W = np.asarray(flip_weights, dtype=np.float64)
        total = np.zeros(self.layout.size)
        for k in range(self.d):
            flipped = X.copy()
            flipped[:, k] = 1.0 - flipped[:, k]
            total += self.weighted_param_gradient(flipped, W[:, k], theta)
            total -= self.weighted_param_gradient(X, W[:, k], theta)
        return total

    def energy_diff(self, x, k: int, theta=None) -> float:
        """``E(flip(x, k)) - E(x)`` for a single state."""
        self._require_discrete()
        self._check_flip_index(k)
        X = _as_state_matrix(x, self.d)
        flipped = X.copy()
        flipped[:, k] = 1.0 - flipped[:, k]
        e = self.energies(np.vstack([X, flipped]), theta)
        return float(e[1] - e[0])

    def energy_diff_gradient(self, x, k: int, theta=None) -> np.ndarray:
        """Parameter gradient of ``energy_diff(x, k)``."""
        self._require_discrete()
        self._check_flip_index(k)
        X = _as_state_matrix(x, self.d)
        flipped = X.copy()
        flipped[:, k] = 1.0 - flipped[:, k]
        return self.weighted_param_gradient(
            flipped, np.ones(1), theta
        ) - self.weighted_param_gradient(X, np.ones(1), theta)

    # -- state-derivative surface (continuous models) -------------------------

    def _no_state_derivatives(self):
        raise UnsupportedModelError(
            f"{type(self).__name__} does not provide analytic state derivatives"
        )

    def state_gradients(self, X, theta=None) -> np.ndarray:
        """``dE/dx`` for a stack of states, shape (n, d)."""
        self._no_state_derivatives()

    def state_laplacians(self, X, theta=None) -> np.ndarray:
        """Trace of the state Hessian of E for each row, shape (n,)."""
        self._no_state_derivatives()

    def sm_param_gradient(self, X, theta=None) -> np.ndarray:
        """``d/dtheta sum_n [ 0.5 ||dE/dx||^2 - laplacian E ](x_n)`` (flat)."""
        self._no_state_derivatives()

    def state_gradient(self, x, theta=None) -> np.ndarray:
        return self.state_gradients(_as_state_matrix(x, self.d), theta)[0]

    def state_laplacian(self, x, theta=None) -> float:
        return float(self.state_laplacians(_as_state_matrix(x, self.d), theta)[0])

    # -- serialization --------------------------------------------------------

    @abstractmethod
    def to_dict(self) -> dict:
        """JSON-ready description (kind, dims, named row-major blocks)."""


@dataclass(frozen=True)
class IsingModel(EnergyModel):
    """Fully visible Boltzmann machine over 0/1 states.

    ``E(x; J) = sum_{i, j != i} J_ij x_i x_j + sum_i J_ii x_i`` -- since
    ``x_i^2 = x_i`` this equals ``x^T J x``.  ``J`` is stored as a full
    (possibly asymmetric) d x d matrix; the energy depends only on
    ``J_ij + J_ji`` off the diagonal, so fitted couplings are usually
    reported symmetrized as well.
    """

    J: np.ndarray

    discrete = True

    def __post_init__(self):
        J = _frozen_array(self, self.J, "J")
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise DimensionMismatchError(f"coupling matrix must be square, got {J.shape}")

    @property
    def d(self) -> int:
        return self.J.shape[0]

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout((("J", (self.d, self.d)),))

    def default_params(self) -> np.ndarray:
        return self.J.ravel().copy()

    def with_params(self, theta) -> "IsingModel":
        theta = self.layout.validate(theta)
        return IsingModel(theta.reshape(self.d, self.d))

    def _coupling(self, theta):
        if theta is None:
            return self.J
        return self.layout.validate(theta).reshape(self.d, self.d)

    def energies(self, X, theta=None) -> np.ndarray:
        J = self._coupling(theta)
        X = _as_state_matrix(X, self.d)
        return np.einsum("ni,ij,nj->n", X, J, X, optimize=True)

    def weighted_param_gradient(self, X, weights, theta=None) -> np.ndarray:
        # dE/dJ_ab = x_a x_b
        X = _as_state_matrix(X, self.d)
        w = np.asarray(weights, dtype=np.float64)
        return ((X * w[:, None]).T @ X).ravel()

    def flip_energy_diffs(self, X, theta=None) -> np.ndarray:
        # flipping bit k changes E by (1 - 2 x_k) * [(J + J^T) x]_k + J_kk
        J = self._coupling(theta)
        X = _as_state_matrix(X, self.d)
        Y = X @ (J + J.T)
        return (1.0 - 2.0 * X) * Y + np.diag(J)[None, :]

    def flip_weighted_param_gradient(self, X, flip_weights, theta=None) -> np.ndarray:
        X = _as_state_matrix(X, self.d)
        W = np.asarray(flip_weights, dtype=np.float64)
        V = W * (1.0 - 2.0 * X)
        G = V.T @ X + X.T @ V
        np.fill_diagonal(G, V.sum(axis=0))
        return G.ravel()

    def energy_diff(self, x, k: int, theta=None) -> float:
        self._check_flip_index(k)
        J = self._coupling(theta)
        x = _as_state_matrix(x, self.d)[0]
        delta = 1.0 - 2.0 * x[k]
        return float(delta * ((J[k, :] + J[:, k]) @ x) + J[k, k])

    def energy_diff_gradient(self, x, k: int, theta=None) -> np.ndarray:
        self._check_flip_index(k)
        x = _as_state_matrix(x, self.d)[0]
        delta = 1.0 - 2.0 * x[k]
        G = np.zeros((self.d, self.d))
        G[k, :] = delta * x
        G[:, k] += delta * x
        G[k, k] = delta
        return G.ravel()

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FILE_VERSION,
            "kind": "ising",
            "d": self.d,
            "params": {"J": self.J.ravel(order="C").tolist()},
        }


@dataclass(frozen=True)
class RbmMarginalModel(EnergyModel):
    """Binary RBM with the hidden layer analytically summed out.

    The joint energy over (visible, hidden) is ``sum_ij W_ij v_i h_j``;
    summing ``exp(-E)`` over hidden configurations leaves the visible-state
    energy ``E(v; W) = -sum_j softplus(-(v^T W)_j)``, evaluated with the
    overflow-safe form ``softplus(a) = max(a, 0) + log1p(exp(-|a|))``.
    """

    W: np.ndarray

    discrete = True

    def __post_init__(self):
        W = _frozen_array(self, self.W, "W")
        if W.ndim != 2:
            raise DimensionMismatchError(f"weight matrix must be 2-D, got {W.shape}")

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def d_hid(self) -> int:
        return self.W.shape[1]

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout((("W", (self.d, self.d_hid)),))

    def default_params(self) -> np.ndarray:
        return self.W.ravel().copy()

    def with_params(self, theta) -> "RbmMarginalModel":
        theta = self.layout.validate(theta)
        return RbmMarginalModel(theta.reshape(self.d, self.d_hid))

    def _weights(self, theta):
        if theta is None:
            return self.W
        return self.layout.validate(theta).reshape(self.d, self.d_hid)

    def hidden_preactivations(self, x, theta=None) -> np.ndarray:
        """``x^T W`` -- cache this to make ``energy_diff`` O(d_hid)."""
        W = self._weights(theta)
        return _as_state_matrix(x, self.d)[0] @ W

    def energies(self, X, theta=None) -> np.ndarray:
        W = self._weights(theta)
        A = _as_state_matrix(X, self.d) @ W
        return -_softplus(-A).sum(axis=1)

    def weighted_param_gradient(self, X, weights, theta=None) -> np.ndarray:
        # dE/dW_ij = x_i * sigmoid(-a_j)
        W = self._weights(theta)
        X = _as_state_matrix(X, self.d)
        w = np.asarray(weights, dtype=np.float64)
        S = expit(-(X @ W))
        return ((X * w[:, None]).T @ S).ravel()

    def _flip_chunks(self, n):
        # (n, d, d_hid) intermediates; bound them to ~8M doubles per chunk
        per_row = max(1, self.d * self.d_hid)
        chunk = max(1, 8_000_000 // per_row)
        for start in range(0, n, chunk):
            yield slice(start, min(start + chunk, n))

    def flip_energy_diffs(self, X, theta=None) -> np.ndarray:
        W = self._weights(theta)
        X = _as_state_matrix(X, self.d)
        out = np.empty_like(X)
        for sl in self._flip_chunks(X.shape[0]):
            Xc = X[sl]
            A = Xc @ W
            B = A[:, None, :] + (1.0 - 2.0 * Xc)[:, :, None] * W[None, :, :]
            out[sl] = _softplus(-A).sum(axis=1)[:, None] - _softplus(-B).sum(axis=2)
        return out

    def flip_weighted_param_gradient(self, X, flip_weights, theta=None) -> np.ndarray:
        W = self._weights(theta)
        X = _as_state_matrix(X, self.d)
        Wt = np.asarray(flip_weights, dtype=np.float64)
        G = np.zeros((self.d, self.d_hid))
        for sl in self._flip_chunks(X.shape[0]):
            Xc, Wc = X[sl], Wt[sl]
            delta = 1.0 - 2.0 * Xc
            A = Xc @ W
            B = A[:, None, :] + delta[:, :, None] * W[None, :, :]
            S_flip = expit(-B)
            # gradient of the flipped-state energy: x'_i sigmoid(-b_j),
            # with x' = x except bit k which moved by delta_k
            G += np.einsum("nk,ni,nkj->ij", Wc, Xc, S_flip, optimize=True)
            G += np.einsum("nk,nk,nkj->kj", Wc, delta, S_flip, optimize=True)
            # minus the data-state gradient, once per flip
            G -= ((Xc * Wc.sum(axis=1)[:, None]).T) @ expit(-A)
        return G.ravel()

    def energy_diff(self, x, k: int, theta=None, preactivations=None) -> float:
        self._check_flip_index(k)
        W = self._weights(theta)
        x = _as_state_matrix(x, self.d)[0]
        a = x @ W if preactivations is None else np.asarray(preactivations)
        b = a + (1.0 - 2.0 * x[k]) * W[k, :]
        return float(_softplus(-a).sum() - _softplus(-b).sum())

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FILE_VERSION,
            "kind": "rbm",
            "d": self.d,
            "d_hid": self.d_hid,
            "params": {"W": self.W.ravel(order="C").tolist()},
        }


def _pot_phi(U):
    # d/du log(1 + u^2) = 2u / (1 + u^2)
    return 2.0 * U / (1.0 + U * U)


def _pot_psi(U):
    # second derivative: 2 (1 - u^2) / (1 + u^2)^2
    U2 = U * U
    return 2.0 * (1.0 - U2) / (1.0 + U2) ** 2


def _pot_psi_prime(U):
    return (4.0 * U**3 - 12.0 * U) / (1.0 + U * U) ** 3


@dataclass(frozen=True)
class PotModel(EnergyModel):
    """Product of Student-t experts over continuous states.

    ``E(x) = sum_i alpha_i log(1 + (J_i . x)^2)`` with ``J`` an
    (n_filters, d) bank of receptive fields and ``alpha_i =
    exp(log_alpha_i)`` controlling each expert's sparsity.  Storing the
    sparsity parameters in the log domain keeps them positive without
    constraining the optimizer.
    """

    J: np.ndarray
    log_alpha: np.ndarray

    discrete = False

    def __post_init__(self):
        J = _frozen_array(self, self.J, "J")
        la = _frozen_array(self, self.log_alpha, "log_alpha")
        if J.ndim != 2:
            raise DimensionMismatchError(f"filter matrix must be 2-D, got {J.shape}")
        if la.shape != (J.shape[0],):
            raise DimensionMismatchError(
                f"log_alpha has shape {la.shape}, expected ({J.shape[0]},)"
            )

    @property
    def d(self) -> int:
        return self.J.shape[1]

    @property
    def n_filters(self) -> int:
        return self.J.shape[0]

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout(
            (("J", (self.n_filters, self.d)), ("log_alpha", (self.n_filters,)))
        )

    def default_params(self) -> np.ndarray:
        return self.layout.pack({"J": self.J, "log_alpha": self.log_alpha})

    def with_params(self, theta) -> "PotModel":
        blocks = self.layout.unpack(theta)
        return PotModel(blocks["J"].copy(), blocks["log_alpha"].copy())

    def _blocks(self, theta):
        if theta is None:
            return self.J, self.log_alpha
        blocks = self.layout.unpack(theta)
        return blocks["J"], blocks["log_alpha"]

    def energies(self, X, theta=None) -> np.ndarray:
        J, log_alpha = self._blocks(theta)
        U = _as_state_matrix(X, self.d) @ J.T
        return np.log1p(U * U) @ np.exp(log_alpha)

    def weighted_param_gradient(self, X, weights, theta=None) -> np.ndarray:
        J, log_alpha = self._blocks(theta)
        alpha = np.exp(log_alpha)
        X = _as_state_matrix(X, self.d)
        w = np.asarray(weights, dtype=np.float64)
        U = X @ J.T
        GJ = alpha[:, None] * ((_pot_phi(U) * w[:, None]).T @ X)
        Gla = alpha * ((np.log1p(U * U) * w[:, None]).sum(axis=0))
        return self.layout.pack({"J": GJ, "log_alpha": Gla})

    def state_gradients(self, X, theta=None) -> np.ndarray:
        J, log_alpha = self._blocks(theta)
        U = _as_state_matrix(X, self.d) @ J.T
        return (_pot_phi(U) * np.exp(log_alpha)[None, :]) @ J

    def state_laplacians(self, X, theta=None) -> np.ndarray:
        J, log_alpha = self._blocks(theta)
        U = _as_state_matrix(X, self.d) @ J.T
        row_sq = (J * J).sum(axis=1)
        return (_pot_psi(U) * np.exp(log_alpha)[None, :]) @ row_sq

    def sm_param_gradient(self, X, theta=None) -> np.ndarray:
        J, log_alpha = self._blocks(theta)
        alpha = np.exp(log_alpha)
        X = _as_state_matrix(X, self.d)
        U = X @ J.T
        phi, psi, psi_p = _pot_phi(U), _pot_psi(U), _pot_psi_prime(U)
        g = (phi * alpha[None, :]) @ J          # (n, d) state gradients
        JG = g @ J.T                            # (n, f):  J_m . grad(x_n)
        row_sq = (J * J).sum(axis=1)            # (f,)

        Gla = alpha * (phi * JG - psi * row_sq[None, :]).sum(axis=0)
        GJ = alpha[:, None] * (
            (psi * JG - psi_p * row_sq[None, :]).T @ X
            + phi.T @ g
            - 2.0 * psi.sum(axis=0)[:, None] * J
        )
        return self.layout.pack({"J": GJ, "log_alpha": Gla})

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FILE_VERSION,
            "kind": "pot",
            "d": self.d,
            "n_filters": self.n_filters,
            "params": {
                "J": self.J.ravel(order="C").tolist(),
                "log_alpha": self.log_alpha.ravel(order="C").tolist(),
            },
        }


@dataclass(frozen=True)
class IsotropicGaussianModel(EnergyModel):
    """One-parameter Gaussian: ``E(x) = precision * ||x||^2 / 2``.

    Small enough to solve in closed form, which makes it the reference
    model for the score-matching reduction tests.
    """

    dim: int
    precision: float = 1.0

    discrete = False

    @property
    def d(self) -> int:
        return self.dim

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout((("precision", (1,)),))

    def default_params(self) -> np.ndarray:
        return np.array([float(self.precision)])

    def with_params(self, theta) -> "IsotropicGaussianModel":
        theta = self.layout.validate(theta)
        return IsotropicGaussianModel(self.dim, float(theta[0]))

    def _prec(self, theta):
        if theta is None:
            return float(self.precision)
        return float(self.layout.validate(theta)[0])

    def energies(self, X, theta=None) -> np.ndarray:
        prec = self._prec(theta)
        X = _as_state_matrix(X, self.d)
        return 0.5 * prec * (X * X).sum(axis=1)

    def weighted_param_gradient(self, X, weights, theta=None) -> np.ndarray:
        X = _as_state_matrix(X, self.d)
        w = np.asarray(weights, dtype=np.float64)
        return np.array([0.5 * float(w @ (X * X).sum(axis=1))])

    def state_gradients(self, X, theta=None) -> np.ndarray:
        return self._prec(theta) * _as_state_matrix(X, self.d)

    def state_laplacians(self, X, theta=None) -> np.ndarray:
        X = _as_state_matrix(X, self.d)
        return np.full(X.shape[0], self._prec(theta) * self.d)

    def sm_param_gradient(self, X, theta=None) -> np.ndarray:
        prec = self._prec(theta)
        X = _as_state_matrix(X, self.d)
        sq = (X * X).sum(axis=1)
        return np.array([float((prec * sq - self.d).sum())])

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FILE_VERSION,
            "kind": "gaussian",
            "d": self.dim,
            "params": {"precision": [float(self.precision)]},
        }


# -- model files ---------------------------------------------------------------


def model_from_dict(payload: dict) -> EnergyModel:
    """Rebuild a model from its JSON description."""
    try:
        kind = payload["kind"]
        d = int(payload["d"])
        params = payload["params"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model description: missing {exc}") from exc

    def block(name, shape):
        arr = np.asarray(params[name], dtype=np.float64)
        if arr.size != int(np.prod(shape)):
            raise ValueError(
                f"parameter block {name!r} has {arr.size} entries, expected {np.prod(shape)}"
            )
        return arr.reshape(shape)

    if kind == "ising":
        return IsingModel(block("J", (d, d)))
    if kind == "rbm":
        d_hid = int(payload["d_hid"])
        return RbmMarginalModel(block("W", (d, d_hid)))
    if kind == "pot":
        n_filters = int(payload["n_filters"])
        return PotModel(block("J", (n_filters, d)), block("log_alpha", (n_filters,)))
    if kind == "gaussian":
        return IsotropicGaussianModel(d, float(np.asarray(params["precision"]).ravel()[0]))
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model: EnergyModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path) -> EnergyModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
