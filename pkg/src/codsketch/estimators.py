"""scikit-learn style wrappers.

These follow the scikit-learn data layout: ``X`` has shape
``(n_samples, mx)`` and ``Y`` has shape ``(n_samples, my)``; each row is one
stream element.  The fitted sketches (``bx_``, ``by_``) keep the
column-sample layout of :mod:`codsketch.sketch_core`, i.e. ``bx_`` is
``(mx, ell)`` and ``bx_ @ by_.T`` approximates ``X.T @ Y``.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .baselines import RANDOMIZED, make_state
from .evaluation import amm_error
from .sketch_core import SketchConfig, cod_new, fd_new


def _check_pair(X, Y):
    X = check_array(X, dtype=np.float64)
    Y = check_array(Y, dtype=np.float64)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X and Y have different numbers of samples: {X.shape[0]} vs {Y.shape[0]}")
    return X, Y


def _top_pairs(bx, by, k):
    qx, rx = np.linalg.qr(bx)
    qy, ry = np.linalg.qr(by)
    u, s, vt = np.linalg.svd(rx @ ry.T)
    return (qx @ u[:, :k]).T, (qy @ vt[:k].T).T, s[:k]


class CoOccurringDirections(TransformerMixin, BaseEstimator):
    """Streaming correlation sketch of ``X.T @ Y``.

    Parameters
    ----------
    ell : int
        Even sketch length, at most ``min(mx, my)``.
    n_components : int or None
        Number of leading singular directions of the sketched product kept by
        ``transform``. Defaults to ``ell // 2``.
    """

    def __init__(self, ell=8, n_components=None):
        self.ell = ell
        self.n_components = n_components

    def partial_fit(self, X, Y):
        X, Y = _check_pair(X, Y)
        if not hasattr(self, "sketch_"):
            self.sketch_ = cod_new(SketchConfig(self.ell, X.shape[1], Y.shape[1]))
        self.sketch_.update_block(X.T, Y.T)
        self._refresh()
        return self

    def fit(self, X, Y):
        self.__dict__.pop("sketch_", None)
        return self.partial_fit(X, Y)

    def _refresh(self):
        sk = self.sketch_
        self.bx_, self.by_ = sk.bx, sk.by
        self.delta_log_ = list(sk.delta_log)
        self.n_samples_seen_ = sk.columns_seen
        self.n_features_in_ = sk.config.mx
        k = self.n_components or self.ell // 2
        self.x_components_, self.y_components_, self.singular_values_ = _top_pairs(sk.bx, sk.by, k)

    def product(self):
        """Sketched estimate of ``X.T @ Y``, shape ``(mx, my)``."""
        check_is_fitted(self, "sketch_")
        return self.sketch_.product()

    def transform(self, X, Y=None):
        check_is_fitted(self, "sketch_")
        X = check_array(X, dtype=np.float64)
        x_scores = X @ self.x_components_.T
        if Y is None:
            return x_scores
        Y = check_array(Y, dtype=np.float64)
        return x_scores, Y @ self.y_components_.T

    def fit_transform(self, X, Y):
        return self.fit(X, Y).transform(X, Y)

    def score(self, X, Y):
        """Negative spectral error of the sketched product on ``(X, Y)``."""
        check_is_fitted(self, "sketch_")
        X, Y = _check_pair(X, Y)
        return -amm_error(X.T, Y.T, self.bx_, self.by_)


class FrequentDirections(TransformerMixin, BaseEstimator):
    """Streaming covariance sketch: ``sketch_ @ sketch_.T`` approximates ``X.T @ X``."""

    def __init__(self, ell=8, n_components=None):
        self.ell = ell
        self.n_components = n_components

    def partial_fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if not hasattr(self, "fd_"):
            self.fd_ = fd_new(self.ell, X.shape[1])
        self.fd_.update_block(X.T)
        self.sketch_ = self.fd_.dx
        self.n_samples_seen_ = self.fd_.columns_seen
        self.n_features_in_ = self.fd_.m
        k = self.n_components or self.ell // 2
        u, _, _ = np.linalg.svd(self.sketch_, full_matrices=False)
        self.components_ = u[:, :k].T
        return self

    def fit(self, X, y=None):
        self.__dict__.pop("fd_", None)
        return self.partial_fit(X)

    def transform(self, X):
        check_is_fitted(self, "fd_")
        return check_array(X, dtype=np.float64) @ self.components_.T

    def covariance(self):
        check_is_fitted(self, "fd_")
        return self.fd_.covariance()


class ApproximateMatMul(BaseEstimator):
    """Any of the AMM methods (``cod``, ``fd-amm``, ``brute``, ``sampling``,
    ``projection``, ``hashing``) behind one estimator."""

    def __init__(self, method="cod", ell=8, random_state=0):
        self.method = method
        self.ell = ell
        self.random_state = random_state

    def partial_fit(self, X, Y):
        X, Y = _check_pair(X, Y)
        if not hasattr(self, "state_"):
            seed = self.random_state if self.method in RANDOMIZED else 0
            self.state_ = make_state(self.method, self.ell, X.shape[1], Y.shape[1], seed=seed)
        self.state_.update_block(X.T, Y.T)
        self.bx_, self.by_ = self.state_.result()
        self.n_samples_seen_ = self.state_.columns_seen
        return self

    def fit(self, X, Y):
        self.__dict__.pop("state_", None)
        return self.partial_fit(X, Y)

    def product(self):
        check_is_fitted(self, "state_")
        return self.bx_ @ self.by_.T

    def score(self, X, Y):
        check_is_fitted(self, "state_")
        X, Y = _check_pair(X, Y)
        return -amm_error(X.T, Y.T, self.bx_, self.by_)
