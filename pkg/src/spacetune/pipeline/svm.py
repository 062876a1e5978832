"""One-vs-rest linear L2-SVM (squared hinge loss, L2 penalty) in the primal."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .ops import PipelineError

__all__ = ["LinearModel", "svm_objective", "train_linear_svm"]


@dataclass
class LinearModel:
    weights: np.ndarray  # (kept features, classes)
    bias: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    mask: np.ndarray  # bool over all input columns
    classes: np.ndarray
    objective_history: list = field(default_factory=list)
    converged: bool = False

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)[:, self.mask]
        return ((X - self.mean) / self.scale) @ self.weights + self.bias

    def predict(self, X):
        return self.classes[np.argmax(self.decision_function(X), axis=1)]

    def error_rate(self, X, y):
        return float(np.mean(self.predict(X) != np.asarray(y)))


def svm_objective(params, X, Y, C_reg):
    """Sum of squared hinge losses plus ``||W||^2 / C_reg``; returns (value, gradient)."""
    D, K = X.shape[1], Y.shape[1]
    W = params[: D * K].reshape(D, K)
    b = params[D * K :]
    margin = np.maximum(1.0 - Y * (X @ W + b), 0.0)
    value = np.sum(margin**2) + np.sum(W**2) / C_reg
    G = -2.0 * Y * margin
    grad = np.concatenate([(X.T @ G + 2.0 * W / C_reg).ravel(), G.sum(axis=0)])
    return value, grad


def train_linear_svm(features, labels, C_reg: float, var_cutoff: float = 0.0, tol=1e-5, max_iter=1000):
    """Fit one squared-hinge classifier per class with L-BFGS.

    Columns whose variance falls below ``var_cutoff`` are dropped; the rest
    are standardized with training statistics.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or len(X) != len(y):
        raise PipelineError(f"features {X.shape} do not match {len(y)} labels")
    if not C_reg > 0:
        raise PipelineError("C_reg must be > 0")
    classes = np.unique(y)
    if len(classes) < 2:
        raise PipelineError("need at least two classes")
    var = X.var(axis=0)
    mask = var >= var_cutoff if var_cutoff > 0 else np.ones(X.shape[1], dtype=bool)
    if not mask.any():
        raise PipelineError(f"every feature column has variance below {var_cutoff}")
    X = X[:, mask]
    mean = X.mean(axis=0)
    scale = np.sqrt(var[mask])
    scale[scale == 0] = 1.0
    X = (X - mean) / scale
    Y = np.where(y[:, None] == classes[None, :], 1.0, -1.0)

    D, K = X.shape[1], len(classes)
    history = []

    def record(intermediate_result):
        history.append(float(intermediate_result.fun))

    x0 = np.zeros(D * K + K)
    history.append(svm_objective(x0, X, Y, C_reg)[0])
    res = minimize(
        svm_objective,
        x0,
        args=(X, Y, C_reg),
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={"maxiter": max_iter, "gtol": tol, "ftol": 0.0, "maxcor": 20},
    )
    return LinearModel(
        weights=res.x[: D * K].reshape(D, K),
        bias=res.x[D * K :],
        mean=mean,
        scale=scale,
        mask=mask,
        classes=classes,
        objective_history=history,
        converged=bool(np.max(np.abs(res.jac)) <= tol),
    )
