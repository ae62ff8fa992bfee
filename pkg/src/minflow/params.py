"""Flat parameter vectors with a named-segment layout.

Optimizers see a model's parameters as one flat float64 vector; model files
and humans see named blocks ("J", "W", "log_alpha", ...).  ``ParamLayout``
is the bridge: an ordered list of (name, shape) segments that concatenate,
row-major, into the flat vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError


@dataclass(frozen=True)
class ParamLayout:
    """Ordered named segments of a flat parameter vector."""

    segments: tuple[tuple[str, tuple[int, ...]], ...]

    @property
    def size(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.segments)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.segments)

    def validate(self, theta) -> np.ndarray:
        """Coerce ``theta`` to a float64 vector and check length and finiteness."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.ndim != 1 or theta.size != self.size:
            raise DimensionMismatchError(
                f"parameter vector has shape {theta.shape}, expected ({self.size},)"
            )
        if not np.all(np.isfinite(theta)):
            raise DimensionMismatchError("parameter vector contains non-finite entries")
        return theta

    def unpack(self, theta) -> dict[str, np.ndarray]:
        """Split a flat vector into its named blocks (views, not copies)."""
        theta = self.validate(theta)
        blocks = {}
        offset = 0
        for name, shape in self.segments:
            size = int(np.prod(shape))
            blocks[name] = theta[offset : offset + size].reshape(shape)
            offset += size
        return blocks

    def pack(self, blocks: dict[str, np.ndarray]) -> np.ndarray:
        """Concatenate named blocks into a flat vector (row-major)."""
        missing = set(self.names) - set(blocks)
        if missing:
            raise DimensionMismatchError(f"missing parameter blocks: {sorted(missing)}")
        parts = []
        for name, shape in self.segments:
            block = np.asarray(blocks[name], dtype=np.float64)
            if block.shape != shape:
                raise DimensionMismatchError(
                    f"block {name!r} has shape {block.shape}, expected {shape}"
                )
            parts.append(block.ravel(order="C"))
        return np.concatenate(parts) if parts else np.empty(0)
