"""Streaming frequent directions and co-occurring directions sketches.

Both sketches keep a buffer of ``ell`` columns.  Incoming columns are written
into the first free column; once the buffer is full it is shrunk so that at
least half of the columns become zero again.  Occupied columns are always kept
contiguous at the low indices, so ``fill`` is also the index of the next free
column.

All matrices follow the column-sample layout: a stream of ``n`` samples forms
``X`` of shape ``(mx, n)`` and ``Y`` of shape ``(my, n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    ConfigMismatchError,
    SketchError,
    as_columns,
    as_vector,
    check_dim,
    check_even_ell,
)

# Shrunk singular values at or below this fraction of the largest are zeroed.
ZERO_FLOOR = 1e-12


@dataclass(frozen=True)
class SketchConfig:
    ell: int
    mx: int
    my: int

    def __post_init__(self):
        check_dim(self.mx, "mx")
        check_dim(self.my, "my")
        check_even_ell(self.ell, min(self.mx, self.my))


@dataclass(frozen=True, eq=False)
class ColumnPair:
    """One stream element: the paired columns ``x`` (length mx) and ``y`` (length my)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64).ravel()
        y = np.asarray(self.y, dtype=np.float64).ravel()
        object.__setattr__(self, "x", as_vector(x, x.shape[0], "x"))
        object.__setattr__(self, "y", as_vector(y, y.shape[0], "y"))


@dataclass
class ShrinkReport:
    delta: float
    sigma: np.ndarray
    retained: int


@dataclass(eq=False)
class CoOccurringSketch:
    config: SketchConfig
    bx: np.ndarray
    by: np.ndarray
    fill: int = 0
    delta_log: list = field(default_factory=list)
    columns_seen: int = 0
    frob_x_sq: float = 0.0
    frob_y_sq: float = 0.0

    @property
    def ell(self):
        return self.config.ell

    def update(self, x, y):
        return cod_update(self, ColumnPair(x, y))

    def update_block(self, X, Y):
        return cod_update_block(self, X, Y)

    def result(self):
        return cod_result(self)

    def product(self):
        """Current estimate of ``X @ Y.T``."""
        return self.bx[:, : self.fill] @ self.by[:, : self.fill].T

    def delta_sum(self):
        return math.fsum(self.delta_log)

    def theorem_bound(self):
        """``2 ||X||_F ||Y||_F / ell`` for everything streamed so far."""
        return 2.0 * math.sqrt(self.frob_x_sq) * math.sqrt(self.frob_y_sq) / self.ell


@dataclass(eq=False)
class FrequentDirectionsSketch:
    ell: int
    m: int
    dx: np.ndarray
    fill: int = 0
    frob_sq: float = 0.0
    columns_seen: int = 0
    delta_log: list = field(default_factory=list)

    def update(self, x):
        return fd_update(self, x)

    def update_block(self, X):
        return fd_update_block(self, X)

    def covariance(self):
        d = self.dx[:, : self.fill]
        return d @ d.T


def _fix_signs(u, vt):
    # Largest-magnitude entry of every left singular vector made nonnegative.
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, vt * signs[:, None]


def _floor_small(shrunk):
    top = shrunk[0] if shrunk.size else 0.0
    out = shrunk.copy()
    out[out <= ZERO_FLOOR * top] = 0.0
    return out


# ---------------------------------------------------------------- co-occurring


def cod_new(config):
    if not isinstance(config, SketchConfig):
        config = SketchConfig(*config)
    return CoOccurringSketch(
        config=config,
        bx=np.zeros((config.mx, config.ell)),
        by=np.zeros((config.my, config.ell)),
    )


def cod_update(sketch, pair):
    """Insert one column pair; returns the ShrinkReport if the buffer filled up."""
    cfg = sketch.config
    x = as_vector(pair.x, cfg.mx, "x")
    y = as_vector(pair.y, cfg.my, "y")
    j = sketch.fill
    sketch.bx[:, j] = x
    sketch.by[:, j] = y
    sketch.fill = j + 1
    sketch.columns_seen += 1
    sketch.frob_x_sq += float(x @ x)
    sketch.frob_y_sq += float(y @ y)
    if sketch.fill == cfg.ell:
        return cod_shrink(sketch)
    return None


def cod_update_block(sketch, X, Y):
    """Stream the columns of ``X`` and ``Y`` in order; same result as repeated cod_update."""
    cfg = sketch.config
    X = as_columns(X, cfg.mx, "X")
    Y = as_columns(Y, cfg.my, "Y")
    if X.shape[1] != Y.shape[1]:
        raise SketchError(f"column count mismatch: {X.shape[1]} vs {Y.shape[1]}")
    reports = []
    start, n = 0, X.shape[1]
    while start < n:
        take = min(cfg.ell - sketch.fill, n - start)
        xs, ys = X[:, start : start + take], Y[:, start : start + take]
        sketch.bx[:, sketch.fill : sketch.fill + take] = xs
        sketch.by[:, sketch.fill : sketch.fill + take] = ys
        sketch.fill += take
        sketch.columns_seen += take
        sketch.frob_x_sq += float(np.einsum("ij,ij->", xs, xs))
        sketch.frob_y_sq += float(np.einsum("ij,ij->", ys, ys))
        start += take
        if sketch.fill == cfg.ell:
            reports.append(cod_shrink(sketch))
    return reports


def cod_shrink(sketch):
    ell = sketch.config.ell
    if sketch.fill != ell:
        raise SketchError(f"cod_shrink needs a full buffer (fill={sketch.fill}, ell={ell})")
    qx, rx = np.linalg.qr(sketch.bx)
    qy, ry = np.linalg.qr(sketch.by)
    u, sigma, vt = np.linalg.svd(rx @ ry.T)
    u, vt = _fix_signs(u, vt)
    delta = float(sigma[ell // 2 - 1])
    shrunk = _floor_small(np.maximum(sigma - delta, 0.0))
    retained = int(np.count_nonzero(shrunk))
    root = np.sqrt(shrunk[:retained])
    bx = np.zeros_like(sketch.bx)
    by = np.zeros_like(sketch.by)
    bx[:, :retained] = qx @ (u[:, :retained] * root)
    by[:, :retained] = qy @ (vt[:retained].T * root)
    sketch.bx, sketch.by = bx, by
    sketch.fill = retained
    sketch.delta_log.append(delta)
    return ShrinkReport(delta=delta, sigma=sigma, retained=retained)


def cod_result(sketch):
    """Current buffers, returned as-is (no final shrink)."""
    return sketch.bx, sketch.by


def cod_merge(a, b):
    """Sketch of the concatenated occupied columns of ``a`` then ``b``."""
    if a.config != b.config:
        raise ConfigMismatchError(f"cannot merge sketches with {a.config} and {b.config}")
    out = cod_new(a.config)
    for src in (a, b):
        if src.fill:
            cod_update_block(out, src.bx[:, : src.fill], src.by[:, : src.fill])
    # The audit trail covers the original data, not the re-streamed sketch columns.
    out.delta_log = list(a.delta_log) + list(b.delta_log) + out.delta_log
    out.frob_x_sq = a.frob_x_sq + b.frob_x_sq
    out.frob_y_sq = a.frob_y_sq + b.frob_y_sq
    out.columns_seen = a.columns_seen + b.columns_seen
    return out


def cod_sketch(X, Y, ell):
    """One-shot convenience: sketch the full ``(mx, n)`` / ``(my, n)`` pair."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    sk = cod_new(SketchConfig(ell, X.shape[0], Y.shape[0]))
    cod_update_block(sk, X, Y)
    return sk


# ----------------------------------------------------------- frequent directions


def fd_new(ell, m):
    m = check_dim(m, "m")
    ell = check_even_ell(ell, m, "m")
    return FrequentDirectionsSketch(ell=ell, m=m, dx=np.zeros((m, ell)))


def fd_update(sketch, x):
    x = as_vector(x, sketch.m, "x")
    j = sketch.fill
    sketch.dx[:, j] = x
    sketch.fill = j + 1
    sketch.columns_seen += 1
    sketch.frob_sq += float(x @ x)
    if sketch.fill == sketch.ell:
        return fd_shrink(sketch)
    return None


def fd_update_block(sketch, X):
    X = as_columns(X, sketch.m, "X")
    reports = []
    start, n = 0, X.shape[1]
    while start < n:
        take = min(sketch.ell - sketch.fill, n - start)
        xs = X[:, start : start + take]
        sketch.dx[:, sketch.fill : sketch.fill + take] = xs
        sketch.fill += take
        sketch.columns_seen += take
        sketch.frob_sq += float(np.einsum("ij,ij->", xs, xs))
        start += take
        if sketch.fill == sketch.ell:
            reports.append(fd_shrink(sketch))
    return reports


def fd_shrink(sketch):
    ell = sketch.ell
    if sketch.fill != ell:
        raise SketchError(f"fd_shrink needs a full buffer (fill={sketch.fill}, ell={ell})")
    u, sigma, vt = np.linalg.svd(sketch.dx, full_matrices=False)
    u, _ = _fix_signs(u, vt)
    # delta taken from the same squared array so the median entry cancels exactly
    sq = sigma * sigma
    delta = float(sq[ell // 2 - 1])
    shrunk = _floor_small(np.sqrt(np.maximum(sq - delta, 0.0)))
    retained = int(np.count_nonzero(shrunk))
    dx = np.zeros_like(sketch.dx)
    dx[:, :retained] = u[:, :retained] * shrunk[:retained]
    sketch.dx = dx
    sketch.fill = retained
    sketch.delta_log.append(delta)
    return ShrinkReport(delta=delta, sigma=sigma, retained=retained)


def fd_sketch(X, ell):
    X = np.asarray(X, dtype=np.float64)
    sk = fd_new(ell, X.shape[0])
    fd_update_block(sk, X)
    return sk


# ------------------------------------------------------------ sketch length


def _ceil_even(value):
    # rounding guards against 1/0.1 style representation noise
    n = math.ceil(round(value, 9))
    return max(2, n + (n % 2))


def sketch_length_for(epsilon, mode="frobenius", stats=None):
    """Sketch length reaching relative error ``epsilon``, rounded up to even.

    ``stats`` is a mapping with ``sr_x``, ``sr_y`` (spectral mode) and also
    ``norm_x``, ``norm_y``, ``sigma_k1`` (lowrank mode).
    """
    if not (0 < epsilon <= 1):
        raise SketchError(f"epsilon must lie in (0, 1], got {epsilon}")
    if mode == "frobenius":
        return _ceil_even(1.0 / epsilon)
    if stats is None:
        raise SketchError(f"mode {mode!r} needs stable-rank stats")
    try:
        root = math.sqrt(stats["sr_x"] * stats["sr_y"])
        if mode == "spectral":
            return _ceil_even(2.0 * root / epsilon)
        if mode == "lowrank":
            if stats["sigma_k1"] <= 0:
                raise SketchError("sigma_k1 must be positive for the lowrank length")
            ratio = stats["norm_x"] * stats["norm_y"] / stats["sigma_k1"]
            return _ceil_even(8.0 * root / epsilon * ratio)
    except KeyError as exc:
        raise SketchError(f"missing stat {exc.args[0]!r} for mode {mode!r}") from None
    raise SketchError(f"unknown mode {mode!r}")
