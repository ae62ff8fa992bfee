"""Dataset container and on-disk formats.

A dataset is a multiset of observed states: binary (0/1, stored uint8) or
continuous (float64).  Binary datasets additionally carry a lazily built
membership index over their *distinct* states, used by the strict objective
mode to drop neighbors that are themselves observations.

On-disk formats:

* binary container -- little-endian header ``{magic "MINFLOW\\0", u32
  version, u32 d, u64 n, u8 encoding}`` followed by rows.  Encodings:
  0 = bit-packed (LSB-first within each byte, matching the state-index
  convention), 1 = byte-per-element, 2 = float64.
* CSV -- one state per line, comma-separated (0/1 for binary, decimal
  doubles for continuous).
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DimensionMismatchError

MAGIC = b"MINFLOW\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIQB")

_ENCODINGS = {"bit-packed": 0, "byte-per-element": 1, "float64": 2}
_ENCODING_NAMES = {v: k for k, v in _ENCODINGS.items()}


class Dataset:
    """Immutable stack of observed states."""

    def __init__(self, states, binary: bool | None = None):
        states = np.asarray(states)
        if states.ndim != 2:
            raise DimensionMismatchError(
                f"dataset must be a 2-D array of states, got shape {states.shape}"
            )
        if states.shape[0] < 1:
            raise ValueError("dataset must contain at least one state")
        if binary is None:
            binary = not np.issubdtype(states.dtype, np.floating)
        if binary:
            arr = np.ascontiguousarray(states, dtype=np.uint8)
            if not np.isin(np.asarray(states), (0, 1)).all():
                raise ValueError("binary dataset entries must be exactly 0 or 1")
        else:
            arr = np.ascontiguousarray(states, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError("continuous dataset entries must be finite")
        arr.flags.writeable = False
        self._states = arr
        self.binary = bool(binary)
        self._keys = None
        self._compressed = None

    @property
    def states(self) -> np.ndarray:
        return self._states

    @property
    def n(self) -> int:
        return self._states.shape[0]

    @property
    def d(self) -> int:
        return self._states.shape[1]

    def __len__(self) -> int:
        return self.n

    def state_keys(self) -> frozenset:
        """Byte keys of the distinct states (binary datasets only)."""
        if not self.binary:
            raise TypeError("membership index is only defined for binary datasets")
        if self._keys is None:
            self._keys = frozenset(row.tobytes() for row in self._states)
        return self._keys

    def contains(self, state) -> bool:
        state = np.ascontiguousarray(state, dtype=np.uint8)
        return state.tobytes() in self.state_keys()

    def compressed(self):
        """Distinct states (lexicographically sorted) with multiplicities.

        The canonical ordering makes every downstream accumulation
        independent of the order observations arrived in.
        """
        if not self.binary:
            raise TypeError("compression is only defined for binary datasets")
        if self._compressed is None:
            uniq, counts = np.unique(self._states, axis=0, return_counts=True)
            uniq.flags.writeable = False
            counts.flags.writeable = False
            self._compressed = (uniq, counts)
        return self._compressed


def as_dataset(data, binary: bool | None = None) -> Dataset:
    if isinstance(data, Dataset):
        return data
    return Dataset(data, binary=binary)


# -- binary container ------------------------------------------------------------


def write_dataset(dataset: Dataset, path, encoding: str | None = None) -> None:
    if encoding is None:
        encoding = "bit-packed" if dataset.binary else "float64"
    if encoding not in _ENCODINGS:
        raise ValueError(f"unknown encoding {encoding!r}")
    if dataset.binary and encoding == "float64":
        raise ValueError("float64 encoding is for continuous datasets")
    if not dataset.binary and encoding != "float64":
        raise ValueError("continuous datasets require the float64 encoding")

    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, dataset.d, dataset.n, _ENCODINGS[encoding]
    )
    X = dataset.states
    if encoding == "bit-packed":
        body = np.packbits(X, axis=1, bitorder="little").tobytes()
    elif encoding == "byte-per-element":
        body = X.tobytes()
    else:
        body = X.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def read_dataset_binary(path) -> Dataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a dataset container (bad magic)")
    magic, version, d, n, enc = _HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    if enc not in _ENCODING_NAMES:
        raise ValueError(f"{path}: unknown encoding byte {enc}")
    body = raw[_HEADER.size :]
    encoding = _ENCODING_NAMES[enc]
    if encoding == "bit-packed":
        row_bytes = (d + 7) // 8
        packed = np.frombuffer(body, dtype=np.uint8, count=n * row_bytes)
        X = np.unpackbits(packed.reshape(n, row_bytes), axis=1, bitorder="little")[:, :d]
        return Dataset(X, binary=True)
    if encoding == "byte-per-element":
        X = np.frombuffer(body, dtype=np.uint8, count=n * d).reshape(n, d)
        return Dataset(X, binary=True)
    X = np.frombuffer(body, dtype="<f8", count=n * d).reshape(n, d)
    return Dataset(X, binary=False)


# -- CSV -------------------------------------------------------------------------


def write_dataset_csv(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        if dataset.binary:
            for row in dataset.states:
                fh.write(",".join(str(int(v)) for v in row))
                fh.write("\n")
        else:
            for row in dataset.states:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")


def read_dataset_csv(path, binary: bool | None = None) -> Dataset:
    rows = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: unparsable state row") from exc
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    X = np.asarray(rows, dtype=np.float64)
    if binary is None:
        binary = bool(np.isin(X, (0.0, 1.0)).all())
    return Dataset(X.astype(np.uint8) if binary else X, binary=binary)


def read_dataset(path, binary: bool | None = None) -> Dataset:
    """Load a dataset, sniffing the binary container magic, else CSV."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == MAGIC:
        return read_dataset_binary(path)
    return read_dataset_csv(path, binary=binary)
