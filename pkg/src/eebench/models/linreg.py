"""Ordinary least squares, closed form and by gradient descent."""

from dataclasses import dataclass

import numpy as np


@dataclass
class LinearFit:
    coef: np.ndarray
    rank: int
    rank_deficient: bool

    def predict(self, X):
        return add_intercept(X) @ self.coef


def add_intercept(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(len(X)), X])


def fit_linear_regression_closed_form(X, y) -> LinearFit:
    """Least-squares coefficients for a design matrix that already has its ones column.

    Rank-deficient designs get the minimum-norm solution and are flagged.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"design {X.shape} does not match targets {y.shape}")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    return LinearFit(coef, int(rank), int(rank) < X.shape[1])


def fit_linear_regression_gd(X, y, tol=1e-12, max_iter=200_000) -> np.ndarray:
    """Full-batch gradient descent on the mean squared error, step 1/L.

    Independent of the closed form; used to cross-check it.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    lipschitz = 2.0 * np.linalg.eigvalsh(X.T @ X / n).max()
    step = 1.0 / lipschitz
    b = np.zeros(X.shape[1])
    for _ in range(max_iter):
        grad = 2.0 / n * (X.T @ (X @ b - y))
        b -= step * grad
        if np.linalg.norm(grad) < tol:
            break
    return b
