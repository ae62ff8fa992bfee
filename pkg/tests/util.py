"""Shared test helpers: finite-difference oracles and random instances."""

from __future__ import annotations

import numpy as np

import minflow as mf


def fd_gradient(fn, theta, h=1e-5):
    """Central-difference gradient of a scalar function of a flat vector."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (fn(up) - fn(dn)) / (2.0 * h)
    return grad


def rel_err(approx, exact, floor=1e-8):
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    scale = max(float(np.abs(exact).max()), floor)
    return float(np.abs(approx - exact).max()) / scale


def random_ising(rng, d=None, scale=0.5):
    d = d or int(rng.integers(2, 7))
    return mf.IsingModel(rng.normal(0.0, scale, size=(d, d)))


def random_rbm(rng, d=None, d_hid=None, scale=0.8):
    d = d or int(rng.integers(2, 7))
    d_hid = d_hid or int(rng.integers(1, 5))
    return mf.RbmMarginalModel(rng.normal(0.0, scale, size=(d, d_hid)))


def random_pot(rng, d=None, n_filters=None):
    d = d or int(rng.integers(2, 6))
    n_filters = n_filters or int(rng.integers(1, 5))
    return mf.PotModel(
        rng.normal(0.0, 1.0, size=(n_filters, d)), rng.normal(0.0, 0.5, size=n_filters)
    )


def random_binary_data(rng, d, n):
    return rng.integers(0, 2, size=(n, d)).astype(np.uint8)
