"""Deterministic blocked reductions.

Objective evaluations may conceptually partition their data across workers;
to keep results bit-identical for a fixed worker count, partial results are
produced per contiguous block and combined along a fixed pairwise tree.  A
single block degenerates to plain serial summation (the "strict serial"
mode).
"""

from __future__ import annotations


def block_slices(n: int, n_blocks: int):
    """Split range(n) into up to ``n_blocks`` contiguous near-equal slices."""
    n_blocks = max(1, min(int(n_blocks), n)) if n > 0 else 1
    base, extra = divmod(n, n_blocks)
    slices = []
    start = 0
    for b in range(n_blocks):
        stop = start + base + (1 if b < extra else 0)
        slices.append(slice(start, stop))
        start = stop
    return slices


def tree_combine(parts, combine):
    """Reduce ``parts`` pairwise: ((p0+p1)+(p2+p3))+... for determinism."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to combine")
    while len(parts) > 1:
        nxt = []
        for i in range(0, len(parts) - 1, 2):
            nxt.append(combine(parts[i], parts[i + 1]))
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]
