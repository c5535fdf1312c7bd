"""L2-regularized logistic regression over user embeddings."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .embedding import UserEmbedding
from .exceptions import DegenerateLabels, DimensionMismatch

ARMIJO_C = 1e-4
MAX_HALVINGS = 60


def objective(w, b, X, y, lam) -> float:
    """Mean negative log-likelihood plus ``lam/2 * |w|^2`` (bias unpenalized)."""
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (w @ w))


def _grad_hess(theta, X, y, lam):
    n, k = X.shape
    w, b = theta[:k], theta[k]
    p = expit(X @ w + b)
    r = (p - y) / n
    grad = np.empty(k + 1)
    grad[:k] = X.T @ r + lam * w
    grad[k] = r.sum()
    d = p * (1.0 - p) / n
    Xd = X * d[:, None]
    H = np.empty((k + 1, k + 1))
    H[:k, :k] = X.T @ Xd
    H[:k, :k][np.diag_indices(k)] += lam
    H[:k, k] = H[k, :k] = Xd.sum(axis=0)
    H[k, k] = d.sum()
    return grad, H


def fit_logreg(X, y, lam=1.0, tol=1e-6, max_iter=500):
    """Minimize :func:`objective` by damped Newton steps with Armijo backtracking.

    Every accepted step satisfies the sufficient-decrease condition, so the
    recorded objective path never increases. Stops once the gradient's
    infinity norm drops below ``tol`` or after ``max_iter`` iterations.

    Returns ``(w, b, info)`` where ``info`` holds ``n_iter``,
    ``objective_path`` and ``grad_norm``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    k = X.shape[1]
    theta = np.zeros(k + 1)

    def J(t):
        return objective(t[:k], t[k], X, y, lam)

    f = J(theta)
    path = [f]
    grad, H = _grad_hess(theta, X, y, lam)
    n_iter = 0
    while np.max(np.abs(grad)) >= tol and n_iter < max_iter:
        try:
            direction = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            direction = -grad
        slope = grad @ direction
        if not slope < 0:
            direction, slope = -grad, -(grad @ grad)
        t = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = theta + t * direction
            f_new = J(candidate)
            if f_new <= f + ARMIJO_C * t * slope:
                break
            t *= 0.5
        else:
            break  # no representable decrease left
        theta, f = candidate, f_new
        path.append(f)
        grad, H = _grad_hess(theta, X, y, lam)
        n_iter += 1
    info = {"n_iter": n_iter, "objective_path": path, "grad_norm": float(np.max(np.abs(grad)))}
    return theta[:k].copy(), float(theta[k]), info


class CommunityClassifier(ClassifierMixin, BaseEstimator):
    """Logistic regression deciding whether a user belongs to a community.

    Parameters
    ----------
    lam : float
        Weight of the ``lam/2 * |w|^2`` penalty on the mean log-loss.
    tol : float
        Gradient infinity-norm at which optimization stops.
    max_iter : int
        Iteration cap for the Newton solver.

    Candidates are ranked with :meth:`rank_scores`, ``X @ w``; the bias shifts
    every log-odds equally and so never changes the ranking.
    """

    def __init__(self, lam=1.0, tol=1e-6, max_iter=500):
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise DegenerateLabels(
                f"need both classes to fit, got labels {self.classes_.tolist()}"
            )
        target = (y == self.classes_[1]).astype(np.float64)
        w, b, info = fit_logreg(X, target, self.lam, self.tol, self.max_iter)
        self.coef_ = w
        self.intercept_ = b
        self.n_iter_ = info["n_iter"]
        self.objective_path_ = info["objective_path"]
        self.grad_norm_ = info["grad_norm"]
        self.n_features_in_ = X.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != len(self.coef_):
            raise DimensionMismatch(f"expected {len(self.coef_)} features, got {X.shape[1]}")
        return X

    def rank_scores(self, X):
        """``X @ w``: the log-odds minus the constant bias."""
        return self._check(X) @ self.coef_

    def decision_function(self, X):
        return self.rank_scores(X) + self.intercept_

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]

    def to_dict(self) -> dict:
        check_is_fitted(self, "coef_")
        return {
            "k": len(self.coef_),
            "lambda": float(self.lam),
            "b": float(self.intercept_),
            "w": [float(v) for v in self.coef_],
        }

    @classmethod
    def from_dict(cls, d) -> "CommunityClassifier":
        w = np.asarray(d["w"], dtype=np.float64)
        if len(w) != d["k"]:
            raise DimensionMismatch(f"classifier declares k={d['k']} but has {len(w)} weights")
        clf = cls(lam=float(d["lambda"]))
        clf.coef_ = w
        clf.intercept_ = float(d["b"])
        clf.classes_ = np.array([0, 1])
        clf.n_features_in_ = len(w)
        return clf

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CommunityClassifier":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class LabeledEmbedding:
    u: UserEmbedding | np.ndarray
    y: int


def _as_vector(u):
    return np.asarray(u.vector if isinstance(u, UserEmbedding) else u, dtype=np.float64)


def train_logreg(data, lam=1.0) -> CommunityClassifier:
    """Fit a classifier on ``LabeledEmbedding`` items (or ``(u, y)`` pairs)."""
    pairs = [(d.u, d.y) if isinstance(d, LabeledEmbedding) else d for d in data]
    if not pairs:
        raise DegenerateLabels("no training examples")
    X = np.vstack([_as_vector(u) for u, _ in pairs])
    y = np.array([int(lbl) for _, lbl in pairs])
    if set(y.tolist()) - {0, 1}:
        raise ValueError("labels must be 0 or 1")
    if len(set(y.tolist())) < 2:
        raise DegenerateLabels("labels are all identical")
    clf = CommunityClassifier(lam=lam).fit(X, y)
    clf.classes_ = np.array([0, 1])
    return clf


def probability(c: CommunityClassifier, u) -> float:
    """``sigmoid(w.u + b)`` computed without overflow."""
    return float(expit(c.coef_ @ _as_vector(u) + c.intercept_))


def score(c: CommunityClassifier, u) -> float:
    """Ranking score ``w.u``."""
    return float(c.coef_ @ _as_vector(u))
