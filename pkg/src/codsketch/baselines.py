"""Comparison methods for approximate matrix multiplication.

Each method consumes a paired-column stream and returns ``(bx, by)`` with
``bx @ by.T`` approximating ``X @ Y.T``.  The randomized methods draw all of
their randomness from :func:`counter_uniform` / :func:`counter_bits`, a
stateless SplitMix64-style mix of ``(seed, purpose, column index, slot)``, so
the random row for column ``i`` can be recomputed in O(1) without storing it
and results are a pure function of ``(stream, ell, seed)``.
"""

import math
import warnings

import numpy as np

from ._stream import DEFAULT_BLOCK, open_stream
from ._validation import as_columns, check_dim, check_even_ell, check_positive_ell
from .sketch_core import _fix_signs, fd_new, fd_update_block, cod_new, SketchConfig

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# purpose tags keep the streams of different methods independent
_SAMPLING, _PROJECTION, _HASH_BUCKET, _HASH_SIGN = 1, 2, 3, 4


class ZeroStreamWarning(UserWarning):
    """The sampling distribution is undefined because every weight is zero."""


def _mix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_bits(seed, purpose, i, j=0):
    """64 pseudo-random bits for every broadcast combination of ``i`` and ``j``."""
    with np.errstate(over="ignore"):
        key = _mix64(np.array([seed], dtype=np.uint64) ^ np.uint64(purpose << 56))
        z = _mix64(key ^ np.asarray(i, dtype=np.uint64))
        return _mix64(z ^ (np.asarray(j, dtype=np.uint64) * _GOLDEN))


def counter_uniform(seed, purpose, i, j=0):
    """Uniform draws in the open interval (0, 1)."""
    bits = counter_bits(seed, purpose, i, j)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return seed


class _Streaming:
    """Shared block-update plumbing for the baseline states."""

    def __init__(self, ell, mx, my):
        self.mx = check_dim(mx, "mx")
        self.my = check_dim(my, "my")
        self.ell = ell
        self.columns_seen = 0

    def _check_block(self, X, Y):
        X = as_columns(X, self.mx, "X")
        Y = as_columns(Y, self.my, "Y")
        if X.shape[1] != Y.shape[1]:
            raise ValueError(f"column count mismatch: {X.shape[1]} vs {Y.shape[1]}")
        return X, Y

    def update(self, x, y):
        self.update_block(np.reshape(x, (-1, 1)), np.reshape(y, (-1, 1)))

    def run(self, blocks):
        for Xb, Yb in blocks:
            self.update_block(Xb, Yb)
        return self.result()


class BruteForceState(_Streaming):
    """Running exact correlation ``C = sum x_i y_i^T``, truncated to rank ``ell`` at the end."""

    def __init__(self, ell, mx, my):
        super().__init__(ell, mx, my)
        self.ell = check_positive_ell(ell, min(self.mx, self.my))
        self.corr = np.zeros((self.mx, self.my))

    def update_block(self, X, Y):
        X, Y = self._check_block(X, Y)
        self.corr += X @ Y.T
        self.columns_seen += X.shape[1]

    def result(self):
        u, s, vt = np.linalg.svd(self.corr, full_matrices=False)
        u, vt = _fix_signs(u, vt)
        root = np.sqrt(s[: self.ell])
        return u[:, : self.ell] * root, vt[: self.ell].T * root


class SamplingState(_Streaming):
    """``ell`` independent single-slot weighted reservoirs.

    Column ``i`` has weight ``w_i = ||x_i|| ||y_i||``.  Reservoir ``r`` keeps
    the column minimising ``E_{ir} / w_i`` with ``E_{ir} ~ Exp(1)``, which
    selects column ``i`` with probability ``w_i / S``.  Reservoirs are
    independent, so the sample is drawn with replacement.
    """

    def __init__(self, ell, mx, my, seed=0, rescale=True):
        super().__init__(ell, mx, my)
        self.ell = check_positive_ell(ell)
        self.seed = _check_seed(seed)
        self.rescale = rescale
        self.total = 0.0
        self.keys = np.full(self.ell, np.inf)
        self.weights = np.zeros(self.ell)
        self.index = np.full(self.ell, -1, dtype=np.int64)
        self.sx = np.zeros((self.mx, self.ell))
        self.sy = np.zeros((self.my, self.ell))
        self.degenerate = False

    def update_block(self, X, Y):
        X, Y = self._check_block(X, Y)
        b = X.shape[1]
        if b == 0:
            return
        w = np.linalg.norm(X, axis=0) * np.linalg.norm(Y, axis=0)
        idx = np.arange(self.columns_seen, self.columns_seen + b, dtype=np.uint64)
        u = counter_uniform(self.seed, _SAMPLING, idx[:, None], np.arange(self.ell)[None, :])
        with np.errstate(divide="ignore"):
            keys = -np.log(u) / w[:, None]
        best = np.argmin(keys, axis=0)
        best_keys = keys[best, np.arange(self.ell)]
        win = best_keys < self.keys
        if np.any(win):
            cols = best[win]
            self.keys[win] = best_keys[win]
            self.weights[win] = w[cols]
            self.index[win] = self.columns_seen + cols
            self.sx[:, win] = X[:, cols]
            self.sy[:, win] = Y[:, cols]
        self.total += math.fsum(w)
        self.columns_seen += b

    def result(self):
        if self.total == 0.0:
            self.degenerate = True
            warnings.warn("all stream weights are zero; returning zero sketches", ZeroStreamWarning)
            return np.zeros((self.mx, self.ell)), np.zeros((self.my, self.ell))
        if not self.rescale:
            return self.sx.copy(), self.sy.copy()
        scale = np.sqrt(self.total / (self.ell * self.weights))
        return self.sx * scale, self.sy * scale


class ProjectionState(_Streaming):
    """``bx = X Pi``, ``by = Y Pi`` with ``Pi_ij = +-1/sqrt(ell)`` regenerated per column."""

    def __init__(self, ell, mx, my, seed=0):
        super().__init__(ell, mx, my)
        self.ell = check_positive_ell(ell)
        self.seed = _check_seed(seed)
        self.bx = np.zeros((self.mx, self.ell))
        self.by = np.zeros((self.my, self.ell))

    def rows(self, start, count):
        """Rows ``start .. start+count-1`` of the implicit ``n x ell`` matrix Pi."""
        idx = np.arange(start, start + count, dtype=np.uint64)
        bits = counter_bits(self.seed, _PROJECTION, idx[:, None], np.arange(self.ell)[None, :])
        signs = np.where(bits >> np.uint64(63), 1.0, -1.0)
        return signs / math.sqrt(self.ell)

    def update_block(self, X, Y):
        X, Y = self._check_block(X, Y)
        pi = self.rows(self.columns_seen, X.shape[1])
        self.bx += X @ pi
        self.by += Y @ pi
        self.columns_seen += X.shape[1]

    def result(self):
        return self.bx.copy(), self.by.copy()


class HashingState(_Streaming):
    """Count sketch with shared bucket hash ``h`` and sign hash ``s`` for X and Y."""

    def __init__(self, ell, mx, my, seed=0):
        super().__init__(ell, mx, my)
        self.ell = check_positive_ell(ell)
        self.seed = _check_seed(seed)
        self.bx = np.zeros((self.mx, self.ell))
        self.by = np.zeros((self.my, self.ell))

    def bucket(self, i):
        return (counter_bits(self.seed, _HASH_BUCKET, i) % np.uint64(self.ell)).astype(np.int64)

    def sign(self, i):
        return np.where(counter_bits(self.seed, _HASH_SIGN, i) >> np.uint64(63), 1.0, -1.0)

    def update_block(self, X, Y):
        X, Y = self._check_block(X, Y)
        b = X.shape[1]
        idx = np.arange(self.columns_seen, self.columns_seen + b, dtype=np.uint64)
        onehot = np.zeros((b, self.ell))
        onehot[np.arange(b), self.bucket(idx)] = self.sign(idx)
        self.bx += X @ onehot
        self.by += Y @ onehot
        self.columns_seen += b

    def result(self):
        return self.bx.copy(), self.by.copy()


class FdAmmState(_Streaming):
    """Frequent directions on the stacked columns ``z_i = [x_i; y_i]``."""

    def __init__(self, ell, mx, my):
        super().__init__(ell, mx, my)
        self.ell = check_even_ell(ell, self.mx + self.my, "mx+my")
        self.fd = fd_new(self.ell, self.mx + self.my)

    def update_block(self, X, Y):
        X, Y = self._check_block(X, Y)
        fd_update_block(self.fd, np.vstack([X, Y]))
        self.columns_seen += X.shape[1]

    def result(self):
        d = self.fd.dx
        return d[: self.mx].copy(), d[self.mx :].copy()


class _CodState(_Streaming):
    """Adapter giving the co-occurring sketch the same surface as the baselines."""

    def __init__(self, ell, mx, my):
        super().__init__(ell, mx, my)
        self.sketch = cod_new(SketchConfig(ell, self.mx, self.my))
        self.ell = self.sketch.ell

    def update_block(self, X, Y):
        self.sketch.update_block(X, Y)
        self.columns_seen = self.sketch.columns_seen

    def result(self):
        return self.sketch.bx.copy(), self.sketch.by.copy()


METHODS = ("cod", "fd-amm", "brute", "sampling", "projection", "hashing")
RANDOMIZED = ("sampling", "projection", "hashing")


def make_state(method, ell, mx, my, seed=0, **kwargs):
    """Streaming state object for ``method`` (one of :data:`METHODS`)."""
    if method == "cod":
        return _CodState(ell, mx, my)
    if method == "fd-amm":
        return FdAmmState(ell, mx, my)
    if method == "brute":
        return BruteForceState(ell, mx, my)
    if method == "sampling":
        return SamplingState(ell, mx, my, seed, **kwargs)
    if method == "projection":
        return ProjectionState(ell, mx, my, seed)
    if method == "hashing":
        return HashingState(ell, mx, my, seed)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _run(state_factory, stream, block, dims):
    mx, my, blocks = open_stream(stream, block, dims)
    return state_factory(mx, my).run(blocks)


def brute_force_amm(stream, ell, *, block=DEFAULT_BLOCK, dims=None):
    return _run(lambda mx, my: BruteForceState(ell, mx, my), stream, block, dims)


def sampling_amm(stream, ell, seed=0, *, rescale=True, block=DEFAULT_BLOCK, dims=None):
    return _run(lambda mx, my: SamplingState(ell, mx, my, seed, rescale), stream, block, dims)


def projection_amm(stream, ell, seed=0, *, block=DEFAULT_BLOCK, dims=None):
    return _run(lambda mx, my: ProjectionState(ell, mx, my, seed), stream, block, dims)


def hashing_amm(stream, ell, seed=0, *, block=DEFAULT_BLOCK, dims=None):
    return _run(lambda mx, my: HashingState(ell, mx, my, seed), stream, block, dims)


def fd_amm(stream, ell, *, block=DEFAULT_BLOCK, dims=None):
    return _run(lambda mx, my: FdAmmState(ell, mx, my), stream, block, dims)
