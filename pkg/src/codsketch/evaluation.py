"""Synthetic data, error metrics and theoretical bounds for AMM sketches."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import DimensionError, SketchError, as_matrix, check_dim

# Above this many entries in X @ Y.T the error is computed without forming it.
DENSE_CAP = 4_000_000
# Matrices whose smaller side exceeds this use power iteration for the spectral norm.
SVD_CUTOFF = 512


class ConvergenceError(RuntimeError):
    pass


# ------------------------------------------------------------------ generator


@dataclass(frozen=True)
class LowRankModelSpec:
    """Parameters of the synthetic low-rank (optionally noisy) model.

    ``X = V_x S_x U_x^T (+ N_x / zeta_x)`` with Gaussian ``U_x`` (n x kx),
    linearly decaying diagonal ``S_x`` and orthonormal ``V_x`` (mx x kx);
    likewise for ``Y``.  With ``shared_latent`` the two matrices reuse the
    same Gaussian factors, which makes ``X`` and ``Y`` strongly correlated.
    """

    n: int
    mx: int
    my: int
    kx: int
    ky: int
    zeta_x: Optional[float] = None
    zeta_y: Optional[float] = None
    seed: int = 0
    shared_latent: bool = False

    def __post_init__(self):
        for name in ("n", "mx", "my", "kx", "ky"):
            check_dim(getattr(self, name), name)
        if self.kx > min(self.mx, self.n):
            raise SketchError(f"kx={self.kx} exceeds min(mx, n)={min(self.mx, self.n)}")
        if self.ky > min(self.my, self.n):
            raise SketchError(f"ky={self.ky} exceeds min(my, n)={min(self.my, self.n)}")
        for name in ("zeta_x", "zeta_y"):
            z = getattr(self, name)
            if z is not None and not z > 0:
                raise SketchError(f"{name} must be positive, got {z}")


def _orthonormal(rng, m, k):
    q, r = np.linalg.qr(rng.standard_normal((m, k)))
    # sign fix makes the factor a deterministic function of the Gaussian draw
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def gen_low_rank(spec):
    """Return ``(X, Y)`` of shapes ``(mx, n)`` and ``(my, n)``."""
    rng = np.random.default_rng(spec.seed)
    if spec.shared_latent:
        latent = rng.standard_normal((spec.n, max(spec.kx, spec.ky)))
        ux, uy = latent[:, : spec.kx], latent[:, : spec.ky]
    else:
        ux = rng.standard_normal((spec.n, spec.kx))
        uy = rng.standard_normal((spec.n, spec.ky))
    vx = _orthonormal(rng, spec.mx, spec.kx)
    vy = _orthonormal(rng, spec.my, spec.ky)
    sx = 1.0 - np.arange(spec.kx) / spec.kx
    sy = 1.0 - np.arange(spec.ky) / spec.ky
    X = (vx * sx) @ ux.T
    Y = (vy * sy) @ uy.T
    if spec.zeta_x is not None:
        X += rng.standard_normal((spec.mx, spec.n)) / spec.zeta_x
    if spec.zeta_y is not None:
        Y += rng.standard_normal((spec.my, spec.n)) / spec.zeta_y
    return X, Y


# -------------------------------------------------------------------- norms


def power_iteration_norm(matvec, rmatvec, ncols, *, tol=1e-9, max_iter=20000, seed=0):
    """Largest singular value of an implicit operator via power iteration on ``A^T A``.

    Stops once the Rayleigh quotient changes by less than ``tol * 1e-3``
    relative between iterations; the geometric tail of the iteration then
    keeps the estimate within ``tol`` unless the spectral gap is tiny, in
    which case the iteration cap is hit and :class:`ConvergenceError` raised.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(ncols)
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iter):
        w = rmatvec(matvec(v))
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam - prev) <= 1e-3 * tol * lam:
            return math.sqrt(max(lam, 0.0))
        prev = lam
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def spectral_norm(M, *, tol=1e-9, max_iter=20000):
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    if min(M.shape) <= SVD_CUTOFF:
        return float(np.linalg.svd(M, compute_uv=False)[0])
    return power_iteration_norm(lambda v: M @ v, lambda u: M.T @ u, M.shape[1], tol=tol, max_iter=max_iter)


def stable_rank(M):
    M = as_matrix(M)
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    return float(np.sum(s**2) / s[0] ** 2)


def nuclear_norm(M):
    return float(np.sum(np.linalg.svd(as_matrix(M), compute_uv=False)))


def _check_conformable(X, Y, bx, by):
    X, Y, bx, by = (as_matrix(a, name) for a, name in ((X, "X"), (Y, "Y"), (bx, "bx"), (by, "by")))
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"X and Y column counts differ: {X.shape[1]} vs {Y.shape[1]}")
    if bx.shape[0] != X.shape[0] or by.shape[0] != Y.shape[0] or bx.shape[1] != by.shape[1]:
        raise DimensionError(
            f"sketch shapes {bx.shape}, {by.shape} do not conform to X {X.shape}, Y {Y.shape}"
        )
    return X, Y, bx, by


def amm_error(X, Y, bx, by):
    """Spectral norm of ``X Y^T - bx by^T``."""
    X, Y, bx, by = _check_conformable(X, Y, bx, by)
    if X.shape[0] * Y.shape[0] <= DENSE_CAP:
        return spectral_norm(X @ Y.T - bx @ by.T)
    return power_iteration_norm(
        lambda v: X @ (Y.T @ v) - bx @ (by.T @ v),
        lambda u: Y @ (X.T @ u) - by @ (bx.T @ u),
        Y.shape[0],
    )


def frobenius_error(X, Y, bx, by, *, rows=256):
    X, Y, bx, by = _check_conformable(X, Y, bx, by)
    total = 0.0
    for s in range(0, X.shape[0], rows):
        d = X[s : s + rows] @ Y.T - bx[s : s + rows] @ by.T
        total += float(np.einsum("ij,ij->", d, d))
    return math.sqrt(total)


# ------------------------------------------------------------------- bounds


@dataclass
class BoundsReport:
    """Theoretical error bounds for one ``(X, Y, ell)`` instance."""

    ell: int
    frob_x: float
    frob_y: float
    norm_x: float
    norm_y: float
    sigma_xy: np.ndarray = field(repr=False)
    sigma_z: np.ndarray = field(repr=False)
    k: Optional[int] = None

    @property
    def thm2_bound(self):
        return 2.0 * self.frob_x * self.frob_y / self.ell

    @property
    def fd_bound(self):
        return 2.0 * self.frob_x**2 / self.ell

    @property
    def fdamm_bound(self):
        return (self.frob_x**2 + self.frob_y**2) / self.ell

    @property
    def sr_x(self):
        return self.frob_x**2 / self.norm_x**2 if self.norm_x else 0.0

    @property
    def sr_y(self):
        return self.frob_y**2 / self.norm_y**2 if self.norm_y else 0.0

    def improved_fd_bound(self, k=None):
        """``2 ||Z - Z_k||_F^2 / (ell - 2k)`` for the stacked ``Z = [X; Y]``."""
        k = self.k if k is None else k
        if k is None or k < 0:
            raise SketchError("improved_fd_bound needs k >= 0")
        if self.ell <= 2 * k:
            raise SketchError(f"improved bound needs ell > 2k (ell={self.ell}, k={k})")
        tail = float(np.sum(self.sigma_z[k:] ** 2))
        return 2.0 * tail / (self.ell - 2 * k)

    def sigma_k1(self, k):
        return float(self.sigma_xy[k]) if k < self.sigma_xy.size else 0.0

    def thm3_threshold(self, k, epsilon):
        """Smallest sketch length for which the (1+eps) low-rank product guarantee applies."""
        s = self.sigma_k1(k)
        if s == 0.0:
            return math.inf
        return 8.0 * math.sqrt(self.sr_x * self.sr_y) / epsilon * self.norm_x * self.norm_y / s


def theoretical_bounds(X, Y, ell, k=None):
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    sx = np.linalg.svd(X, compute_uv=False)
    sy = np.linalg.svd(Y, compute_uv=False)
    report = BoundsReport(
        ell=int(ell),
        frob_x=float(np.linalg.norm(X)),
        frob_y=float(np.linalg.norm(Y)),
        norm_x=float(sx[0]) if sx.size else 0.0,
        norm_y=float(sy[0]) if sy.size else 0.0,
        sigma_xy=np.linalg.svd(X @ Y.T, compute_uv=False),
        sigma_z=np.linalg.svd(np.vstack([X, Y]), compute_uv=False),
        k=k,
    )
    if k is not None:
        report.improved_fd_bound(k)
    return report


# ------------------------------------------------------- low-rank product


@dataclass
class LowRankResult:
    error: float
    sigma_k1: float
    ratio: Optional[float]


def _top_singular_pairs(bx, by, k):
    qx, rx = np.linalg.qr(bx)
    qy, ry = np.linalg.qr(by)
    u, s, vt = np.linalg.svd(rx @ ry.T)
    return qx @ u[:, :k], qy @ vt[:k].T


def low_rank_product_approx(bx, by, X, Y, k, *, zero_tol=1e-12):
    """Project ``X`` and ``Y`` on the top-``k`` singular subspaces of ``bx by^T``.

    ``sigma_k1`` values at or below ``zero_tol * ||X Y^T||`` count as zero and
    give ``ratio=None``.
    """
    X, Y, bx, by = _check_conformable(X, Y, bx, by)
    ell = bx.shape[1]
    if k < 1:
        raise SketchError(f"k must be at least 1, got {k}")
    if k > ell:
        raise SketchError(f"k={k} exceeds the sketch length {ell}")
    uk, vk = _top_singular_pairs(bx, by, k)
    px = uk @ (uk.T @ X)
    py = vk @ (vk.T @ Y)
    xy = X @ Y.T
    error = spectral_norm(xy - px @ py.T)
    s = np.linalg.svd(xy, compute_uv=False)
    sigma_k1 = float(s[k]) if k < s.size else 0.0
    if sigma_k1 <= zero_tol * (s[0] if s.size else 0.0):
        return LowRankResult(error, sigma_k1, None)
    return LowRankResult(error, sigma_k1, error / sigma_k1)


# ------------------------------------------------------------ run reports


@dataclass
class ErrorReport:
    method: str
    ell: int
    spectral_error: float
    bound_used: Optional[float]
    wall_time: float
    seed: Optional[int] = None
    frobenius_error: Optional[float] = None


def method_bound(method, bounds):
    """Deterministic error bound that applies to ``method``, or None for randomized ones."""
    if method == "cod":
        return bounds.thm2_bound
    if method == "fd-amm":
        return bounds.fdamm_bound
    if method == "brute":
        # sigma_{ell+1} <= ||XY^T||_* / (ell+1) <= ||X||_F ||Y||_F / (ell+1)
        return bounds.frob_x * bounds.frob_y / (bounds.ell + 1)
    return None


def evaluate_method(X, Y, method, ell, seed=None, bounds=None, block=1024):
    """Sketch ``(X, Y)`` with ``method`` and measure the error against the dense product."""
    from .baselines import RANDOMIZED, make_state

    state = make_state(method, ell, X.shape[0], Y.shape[0], seed=seed or 0)
    t0 = time.perf_counter()
    for s in range(0, X.shape[1], block):
        state.update_block(X[:, s : s + block], Y[:, s : s + block])
    bx, by = state.result()
    wall = time.perf_counter() - t0
    if bounds is None:
        bounds = theoretical_bounds(X, Y, ell)
    return ErrorReport(
        method=method,
        ell=ell,
        spectral_error=amm_error(X, Y, bx, by),
        bound_used=method_bound(method, bounds),
        wall_time=wall,
        seed=seed if method in RANDOMIZED else None,
        frobenius_error=frobenius_error(X, Y, bx, by),
    )
