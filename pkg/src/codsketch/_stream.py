"""Uniform access to the kinds of paired-column streams the methods accept.

A stream is one of

* a tuple ``(X, Y)`` of arrays shaped ``(mx, n)`` and ``(my, n)``,
* an object with ``mx``, ``my`` and ``iter_blocks(size)`` (e.g. a stream file reader),
* any iterable of ``ColumnPair`` or ``(x, y)`` tuples.
"""

import itertools

import numpy as np

from ._validation import DimensionError, as_columns

DEFAULT_BLOCK = 1024


def _pair_xy(item):
    if hasattr(item, "x"):
        return item.x, item.y
    x, y = item
    return x, y


def open_stream(stream, block=DEFAULT_BLOCK, dims=None):
    """Return ``(mx, my, blocks)`` where ``blocks`` yields ``(Xb, Yb)`` column blocks."""
    if isinstance(stream, tuple) and len(stream) == 2 and all(
        isinstance(m, np.ndarray) and m.ndim == 2 for m in stream
    ):
        X, Y = stream
        if X.shape[1] != Y.shape[1]:
            raise DimensionError(f"column count mismatch: {X.shape[1]} vs {Y.shape[1]}")
        X = as_columns(X, X.shape[0], "X")
        Y = as_columns(Y, Y.shape[0], "Y")

        def blocks():
            for s in range(0, X.shape[1], block):
                yield X[:, s : s + block], Y[:, s : s + block]

        return X.shape[0], Y.shape[0], blocks()

    if hasattr(stream, "iter_blocks"):
        return stream.mx, stream.my, stream.iter_blocks(block)

    it = iter(stream)
    first = next(it, None)
    if first is None:
        if dims is None:
            raise DimensionError("cannot infer dimensions of an empty stream; pass dims=(mx, my)")
        mx, my = dims

        def empty():
            return
            yield

        return mx, my, empty()

    x0, y0 = _pair_xy(first)
    mx, my = np.asarray(x0).size, np.asarray(y0).size
    if dims is not None and tuple(dims) != (mx, my):
        raise DimensionError(f"stream dims {(mx, my)} do not match {tuple(dims)}")

    def grouped():
        rest = itertools.chain([first], it)
        while True:
            chunk = list(itertools.islice(rest, block))
            if not chunk:
                return
            xs, ys = zip(*(_pair_xy(p) for p in chunk))
            Xb = as_columns(np.column_stack([np.ravel(x) for x in xs]), mx, "X")
            Yb = as_columns(np.column_stack([np.ravel(y) for y in ys]), my, "Y")
            yield Xb, Yb

    return mx, my, grouped()
