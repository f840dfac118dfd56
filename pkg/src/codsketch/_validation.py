"""Input checks shared by the sketches, baselines and estimators."""

import numpy as np


class SketchError(ValueError):
    """Base class for invalid sketch parameters or inputs."""


class OddEllError(SketchError):
    pass


class EllTooSmallError(SketchError):
    pass


class EllTooLargeError(SketchError):
    pass


class DimensionError(SketchError):
    pass


class NonFiniteError(SketchError):
    pass


class ConfigMismatchError(SketchError):
    pass


def check_dim(value, name):
    if isinstance(value, bool) or int(value) != value or value <= 0:
        raise DimensionError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_even_ell(ell, limit, limit_name="min(mx,my)"):
    """Validate a sketch length for the shrinking sketches (FD, Co-D)."""
    if isinstance(ell, bool) or int(ell) != ell:
        raise SketchError(f"ell must be an integer, got {ell!r}")
    ell = int(ell)
    if ell < 2:
        raise EllTooSmallError(f"ell must be at least 2, got {ell}")
    if ell % 2:
        raise OddEllError(f"ell must be even, got {ell}")
    if ell > limit:
        raise EllTooLargeError(f"ell exceeds {limit_name} ({ell} > {limit})")
    return ell


def check_positive_ell(ell, limit=None, limit_name="min(mx,my)"):
    if isinstance(ell, bool) or int(ell) != ell:
        raise SketchError(f"ell must be an integer, got {ell!r}")
    ell = int(ell)
    if ell < 1:
        raise EllTooSmallError(f"ell must be positive, got {ell}")
    if limit is not None and ell > limit:
        raise EllTooLargeError(f"ell exceeds {limit_name} ({ell} > {limit})")
    return ell


def as_vector(v, length, name="x"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 2 and 1 in v.shape:
        v = v.ravel()
    if v.ndim != 1 or v.shape[0] != length:
        raise DimensionError(f"{name} must have length {length}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return v


def as_columns(M, rows, name="X"):
    """Coerce a block of columns to a float64 (rows, b) array."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2 or M.shape[0] != rows:
        raise DimensionError(f"{name} must have {rows} rows, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return M


def as_matrix(M, name="M"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return M
