"""scikit-learn style wrappers.

:class:`CramerRateEstimator` learns the empirical law of observed pairs and
predicts the rate function; :class:`RenewalPairExtractor` turns Hawkes event
times into regeneration-cycle pairs.  Both follow the estimator conventions
(constructor stores parameters only, fitted state ends with ``_``), so they
work with ``clone``, ``get_params`` and pipelines.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .hawkes import _cycles
from .legendre import DEFAULT_TOL, deviation_bound, rate_function_jbar
from .models import EmpiricalSample, tail_rate_lower_bound

__all__ = ["CramerRateEstimator", "RenewalPairExtractor"]


class CramerRateEstimator(BaseEstimator):
    """Rate function ``Jbar`` of the empirical law of ``(tau, W)`` pairs.

    Parameters
    ----------
    tail_k : int or None
        Number of order statistics for the moment-boundary estimates;
        ``None`` uses ``max(10, sqrt(n))``.

    Attributes
    ----------
    model_ : EmpiricalSample
    theta0_, eta0_ : float
        Estimated lower bounds of the exponential-moment boundaries.
    lln_rate_ : float
        ``mean(W) / mean(tau)``.
    """

    def __init__(self, tail_k: int | None = None):
        self.tail_k = tail_k

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=2)
        if X.shape[1] != 2:
            raise ValueError(f"expected pairs of shape (n, 2), got {X.shape}")
        self.model_ = EmpiricalSample(X[:, 0], X[:, 1])
        self.theta0_ = tail_rate_lower_bound(X[:, 0], self.tail_k)
        self.eta0_ = tail_rate_lower_bound(np.abs(X[:, 1]), self.tail_k)
        self.lln_rate_ = self.model_.lln_rate
        self.n_features_in_ = 2
        return self

    def predict(self, m):
        """``Jbar(m)`` for each value of ``m`` (``inf`` where infinite)."""
        check_is_fitted(self, "model_")
        m = np.asarray(m, dtype=float).ravel()
        return np.array([float(rate_function_jbar(self.model_, v, DEFAULT_TOL)) for v in m])

    def deviation_bound(self, a: float, side: str = "Upper"):
        check_is_fitted(self, "model_")
        return deviation_bound(self.model_, a, side)


class RenewalPairExtractor(TransformerMixin, BaseEstimator):
    """Event times on ``(0, horizon]`` to regeneration-cycle pairs.

    Parameters
    ----------
    support : float
        Kernel support length ``L``; ``0`` makes every event a regeneration.
    horizon : float
        Observation horizon ``T``.
    """

    def __init__(self, support: float = 0.0, horizon: float = 1.0):
        self.support = support
        self.horizon = horizon

    def fit(self, X, y=None):
        check_array(X, dtype=float, ensure_min_samples=0)
        self.fitted_ = True
        return self

    def transform(self, X):
        check_is_fitted(self, "fitted_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        ev = np.sort(X.ravel())
        _, pairs, _ = _cycles(ev, float(self.support), float(self.horizon))
        return pairs
