"""scikit-learn style wrappers around :func:`~peerlens.learner.ensemble.fit`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .ensemble import Hyperparams, Mode, fit


class _TreeEnsembleClassifier(ClassifierMixin, BaseEstimator):
    _mode: Mode

    def _hyperparams(self) -> Hyperparams:
        raise NotImplementedError

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_all_finite="allow-nan", dtype=float)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two classes, got {len(self.classes_)}")
        y01 = (y == self.classes_[1]).astype(np.int64)
        self.model_ = fit(X, y01, self._mode, self._hyperparams(), self.random_state, self.n_jobs)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, ensure_all_finite="allow-nan", dtype=float)
        p = self.model_.predict_proba(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return self.classes_[(self.predict_proba(X)[:, 1] >= self.threshold).astype(int)]


class GradientBoostedTrees(_TreeEnsembleClassifier):
    """Second-order boosted trees on logistic loss with learned missing directions."""

    _mode = Mode.GRADIENT_BOOSTED

    def __init__(self, n_estimators=100, max_depth=6, learning_rate=0.3, reg_lambda=1.0,
                 min_child_weight=1.0, subsample=1.0, colsample=1.0, threshold=0.5,
                 random_state=0, n_jobs=None):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight
        self.subsample = subsample
        self.colsample = colsample
        self.threshold = threshold
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _hyperparams(self) -> Hyperparams:
        return Hyperparams(n_trees=self.n_estimators, max_depth=self.max_depth,
                           learning_rate=self.learning_rate, l2_lambda=self.reg_lambda,
                           min_child_weight=self.min_child_weight, subsample=self.subsample,
                           colsample=self.colsample)


class RandomForest(_TreeEnsembleClassifier):
    """Bagged Gini CART trees with per-split feature sampling."""

    _mode = Mode.RANDOM_FOREST

    def __init__(self, n_estimators=100, max_depth=None, max_features="sqrt", bootstrap=True,
                 threshold=0.5, random_state=0, n_jobs=None):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.threshold = threshold
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _hyperparams(self) -> Hyperparams:
        return Hyperparams(n_trees=self.n_estimators, max_depth=self.max_depth,
                           forest_features_per_split=self.max_features, bootstrap=self.bootstrap)
