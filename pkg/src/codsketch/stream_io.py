"""On-disk formats: paired-column streams and sketch snapshots.

Stream file (little-endian)::

    magic    8 bytes  b"CODSTRM1"
    mx       u64
    my       u64
    n        u64      (OPEN_ENDED for streams of unknown length)
    dtype    u64      (1 = float64)
    records  n * (mx + my) float64, record i = x_i then y_i

Snapshot file (little-endian)::

    magic    8 bytes  b"CODSNAP\\0"
    version  u8
    method   u8       index into baselines.METHODS
    pad      6 bytes
    ell, mx, my, columns_seen, fill, n_delta   u64 each
    seed     i64      (-1 when absent)
    frob_x_sq, frob_y_sq                        float64
    delta_log                                   n_delta float64
    bx (mx*ell), by (my*ell)                    float64, column-major
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baselines import METHODS
from .sketch_core import CoOccurringSketch, ColumnPair, SketchConfig

STREAM_MAGIC = b"CODSTRM1"
STREAM_HEADER = struct.Struct("<8sQQQQ")
DTYPE_F64 = 1
OPEN_ENDED = 2**64 - 1

SNAPSHOT_MAGIC = b"CODSNAP\0"
SNAPSHOT_VERSION = 1
SNAPSHOT_HEADER = struct.Struct("<8sBB6xQQQQQQqdd")

_F64 = np.dtype("<f8")


class StreamFormatError(ValueError):
    """Malformed header, wrong magic or unsupported dtype."""


class CorruptStreamError(StreamFormatError):
    """The file ended inside a record, or is shorter than its header claims."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class SnapshotVersionError(StreamFormatError):
    pass


# ------------------------------------------------------------------ streams


def write_stream(path, X, Y, *, open_ended=False):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise StreamFormatError("X and Y must be 2-D (rows = dimensions, columns = samples)")
    if X.shape[1] != Y.shape[1]:
        raise StreamFormatError(f"column count mismatch: {X.shape[1]} vs {Y.shape[1]}")
    with StreamWriter(path, X.shape[0], Y.shape[0], None if open_ended else X.shape[1]) as w:
        w.write_block(X, Y)


class StreamWriter:
    """Append column blocks to a stream file; ``n=None`` writes an open-ended header."""

    def __init__(self, path, mx, my, n=None):
        self.mx, self.my = int(mx), int(my)
        self.n = n
        self.written = 0
        self._fh = open(path, "wb")
        self._fh.write(
            STREAM_HEADER.pack(STREAM_MAGIC, self.mx, self.my, OPEN_ENDED if n is None else int(n), DTYPE_F64)
        )

    def write_block(self, X, Y):
        X = np.asarray(X, dtype=np.float64).reshape(self.mx, -1)
        Y = np.asarray(Y, dtype=np.float64).reshape(self.my, -1)
        if X.shape[1] != Y.shape[1]:
            raise StreamFormatError(f"column count mismatch: {X.shape[1]} vs {Y.shape[1]}")
        # one record per row of the (b, mx+my) array
        self._fh.write(np.ascontiguousarray(np.vstack([X, Y]).T, dtype=_F64).tobytes())
        self.written += X.shape[1]

    def close(self):
        if self._fh.closed:
            return
        self._fh.close()
        if self.n is not None and self.written != self.n:
            raise StreamFormatError(f"header announced {self.n} columns, wrote {self.written}")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class StreamReader:
    """Sequential reader; memory use is bounded by the batch size, not by ``n``."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self._fh = open(self.path, "rb")
        raw = self._fh.read(STREAM_HEADER.size)
        if len(raw) < STREAM_HEADER.size:
            self._fh.close()
            raise CorruptStreamError("truncated stream header", len(raw))
        magic, self.mx, self.my, n, dtype = STREAM_HEADER.unpack(raw)
        if magic != STREAM_MAGIC:
            self._fh.close()
            raise StreamFormatError(f"bad stream magic {magic!r}")
        if dtype != DTYPE_F64:
            self._fh.close()
            raise StreamFormatError(f"unsupported dtype tag {dtype}")
        self.n = None if n == OPEN_ENDED else n
        self.position = 0
        self.record_bytes = 8 * (self.mx + self.my)

    def _offset(self):
        return STREAM_HEADER.size + self.position * self.record_bytes

    def read_block(self, batch_size):
        """Up to ``batch_size`` columns as ``(X, Y)`` arrays; zero columns at end of stream."""
        want = batch_size
        if self.n is not None:
            want = min(want, self.n - self.position)
        raw = self._fh.read(want * self.record_bytes) if want > 0 else b""
        got, rem = divmod(len(raw), self.record_bytes)
        if rem or (self.n is not None and got < want):
            raise CorruptStreamError("truncated record", self._offset() + got * self.record_bytes)
        recs = np.frombuffer(raw, dtype=_F64).reshape(got, self.mx + self.my)
        self.position += got
        return recs[:, : self.mx].T.astype(np.float64), recs[:, self.mx :].T.astype(np.float64)

    def iter_blocks(self, batch_size=1024):
        while True:
            X, Y = self.read_block(batch_size)
            if X.shape[1] == 0:
                return
            yield X, Y

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_stream_file(path):
    return StreamReader(path)


def read_batch(reader, batch_size):
    """Up to ``batch_size`` ColumnPairs; an empty list signals the end of the stream."""
    X, Y = reader.read_block(batch_size)
    return [ColumnPair(X[:, i], Y[:, i]) for i in range(X.shape[1])]


def read_all(path):
    with StreamReader(path) as r:
        blocks = list(r.iter_blocks(4096))
        if not blocks:
            return np.zeros((r.mx, 0)), np.zeros((r.my, 0))
    return np.hstack([b[0] for b in blocks]), np.hstack([b[1] for b in blocks])


def import_csv(x_csv, y_csv, out_path, delimiter=","):
    """Convert two CSV files (row i = sample i) to a stream file."""
    X = np.loadtxt(x_csv, delimiter=delimiter, ndmin=2, dtype=np.float64)
    Y = np.loadtxt(y_csv, delimiter=delimiter, ndmin=2, dtype=np.float64)
    if X.shape[0] != Y.shape[0]:
        raise StreamFormatError(f"CSV row counts differ: {X.shape[0]} vs {Y.shape[0]}")
    write_stream(out_path, X.T, Y.T)


# ---------------------------------------------------------------- snapshots


@dataclass(eq=False)
class SketchSnapshot:
    method: str
    ell: int
    mx: int
    my: int
    bx: np.ndarray
    by: np.ndarray
    columns_seen: int = 0
    fill: int = 0
    frob_x_sq: float = 0.0
    frob_y_sq: float = 0.0
    delta_log: list = field(default_factory=list)
    seed: Optional[int] = None
    version: int = SNAPSHOT_VERSION

    @classmethod
    def from_sketch(cls, sketch):
        cfg = sketch.config
        return cls(
            method="cod", ell=cfg.ell, mx=cfg.mx, my=cfg.my,
            bx=sketch.bx.copy(), by=sketch.by.copy(),
            columns_seen=sketch.columns_seen, fill=sketch.fill,
            frob_x_sq=sketch.frob_x_sq, frob_y_sq=sketch.frob_y_sq,
            delta_log=list(sketch.delta_log),
        )

    def to_sketch(self):
        if self.method != "cod":
            raise StreamFormatError(f"snapshot holds a {self.method!r} sketch, not a co-occurring sketch")
        return CoOccurringSketch(
            config=SketchConfig(self.ell, self.mx, self.my),
            bx=self.bx.copy(), by=self.by.copy(), fill=self.fill,
            delta_log=list(self.delta_log), columns_seen=self.columns_seen,
            frob_x_sq=self.frob_x_sq, frob_y_sq=self.frob_y_sq,
        )


def save_sketch(path, snapshot):
    if isinstance(snapshot, CoOccurringSketch):
        snapshot = SketchSnapshot.from_sketch(snapshot)
    s = snapshot
    header = SNAPSHOT_HEADER.pack(
        SNAPSHOT_MAGIC, s.version, METHODS.index(s.method),
        s.ell, s.mx, s.my, s.columns_seen, s.fill, len(s.delta_log),
        -1 if s.seed is None else int(s.seed), s.frob_x_sq, s.frob_y_sq,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(s.delta_log, dtype=_F64).tobytes())
        fh.write(np.asarray(s.bx, dtype=_F64).tobytes(order="F"))
        fh.write(np.asarray(s.by, dtype=_F64).tobytes(order="F"))


def load_sketch(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < SNAPSHOT_HEADER.size:
        raise CorruptStreamError("truncated snapshot header", len(data))
    (magic, version, method, ell, mx, my, seen, fill, n_delta, seed,
     fx, fy) = SNAPSHOT_HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise StreamFormatError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotVersionError(f"unsupported snapshot version {version} (expected {SNAPSHOT_VERSION})")
    if method >= len(METHODS):
        raise StreamFormatError(f"unknown method code {method}")
    counts = (n_delta, mx * ell, my * ell)
    expected = SNAPSHOT_HEADER.size + 8 * sum(counts)
    if len(data) != expected:
        raise CorruptStreamError(f"snapshot size {len(data)} != expected {expected}", min(len(data), expected))
    off = SNAPSHOT_HEADER.size
    parts = []
    for count in counts:
        parts.append(np.frombuffer(data, dtype=_F64, count=count, offset=off).astype(np.float64))
        off += 8 * count
    return SketchSnapshot(
        method=METHODS[method], ell=ell, mx=mx, my=my,
        bx=parts[1].reshape((mx, ell), order="F"), by=parts[2].reshape((my, ell), order="F"),
        columns_seen=seen, fill=fill, frob_x_sq=fx, frob_y_sq=fy,
        delta_log=parts[0].tolist(), seed=None if seed < 0 else seed, version=version,
    )
