"""Compiled inner loop for single-site Gibbs sweeps.

A sequential chain over hundreds of thousands of sweeps is the one hot path
numpy cannot vectorize (each site update depends on the previous one), so
the sweep kernel is JIT-compiled.  The kernel consumes pre-drawn uniforms,
keeping all randomness in the caller's single numpy stream.
"""

from __future__ import annotations

import math

from numba import njit


@njit(cache=True)
def run_sweeps(A, diag, x, local_field, uniforms):
    """Run ``uniforms.shape[0]`` fixed-order single-site sweeps in place.

    A
        Symmetrized coupling matrix J + J^T.
    diag
        Diagonal of J (per-site bias terms).
    x
        Current state (int64 0/1 entries), updated in place.
    local_field
        Running A @ x, updated in place when a site changes.
    uniforms
        (n_sweeps, d) uniform variates; entry (s, k) decides site k in
        sweep s.  Sites are visited in ascending order.
    """
    n_sweeps, d = uniforms.shape
    for s in range(n_sweeps):
        for k in range(d):
            # energy cost of setting x_k = 1 versus x_k = 0, given the rest
            cost = local_field[k] - 2.0 * diag[k] * x[k] + diag[k]
            # P(x_k = 1 | rest) = 1 / (1 + exp(cost)), overflow-safe
            if cost >= 0.0:
                e = math.exp(-cost)
                p_one = e / (1.0 + e)
            else:
                p_one = 1.0 / (1.0 + math.exp(cost))
            new = 1 if uniforms[s, k] < p_one else 0
            if new != x[k]:
                delta = float(new - x[k])
                for j in range(d):
                    local_field[j] += delta * A[j, k]
                x[k] = new
