"""Filter/embedded comparison selectors and the >1% importance rule."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import Dataset

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.01


class ConvergenceWarning(UserWarning):
    pass


def normalize_importance(raw) -> np.ndarray:
    raw = np.abs(np.asarray(raw, dtype=np.float64))
    total = raw.sum()
    return raw / total if total > 0 else np.zeros_like(raw)


def correlation_importance(data: Dataset) -> np.ndarray:
    """Normalised |Pearson correlation| of each feature with the target.

    With several targets a feature keeps its largest absolute correlation.
    Constant columns score 0.
    """
    if data.n_samples < 2:
        raise ValueError("correlation needs at least two samples")
    Xc = data.features - data.features.mean(axis=0)
    Tc = data.targets - data.targets.mean(axis=0)
    xn = np.sqrt(np.sum(Xc * Xc, axis=0))
    tn = np.sqrt(np.sum(Tc * Tc, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = (Xc.T @ Tc) / np.outer(xn, tn)
    corr[~np.isfinite(corr)] = 0.0
    return normalize_importance(np.max(np.abs(corr), axis=1))


@dataclass(frozen=True)
class LassoFit:
    coef: np.ndarray
    intercept: float
    importance: np.ndarray
    sweeps: int
    max_change: float
    converged: bool

    def predict(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) @ self.coef + self.intercept).reshape(-1, 1)


def lasso_fit(data: Dataset, lam: float, tol: float = 1e-7, max_sweeps: int = 10_000) -> LassoFit:
    """Cyclic coordinate descent for (1/2J)||t - b - X beta||^2 + lam ||beta||_1.

    The intercept is unpenalised and handled by centring. Hitting
    ``max_sweeps`` emits a :class:`ConvergenceWarning` with the last change.
    """
    if data.n_targets != 1:
        raise ValueError("lasso_fit supports a single target")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    X = data.features
    t = data.targets[:, 0]
    mx, mt = X.mean(axis=0), t.mean()
    Xc = np.ascontiguousarray(X - mx)
    beta, sweeps, max_change = _kernels.lasso_cd(
        Xc, t - mt, np.zeros(X.shape[1]), float(lam), float(tol), int(max_sweeps))
    converged = bool(max_change < tol)
    if not converged:
        msg = f"lasso did not converge in {sweeps} sweeps (last max change {max_change:.3g})"
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return LassoFit(coef=beta, intercept=float(mt - mx @ beta),
                    importance=normalize_importance(beta), sweeps=int(sweeps),
                    max_change=float(max_change), converged=converged)


def lasso_subgradient(data: Dataset, fit: LassoFit) -> np.ndarray:
    """Gradient of the smooth part (1/2J)||t - b - X beta||^2 at the fitted point."""
    X = data.features
    t = data.targets[:, 0]
    r = t - X @ fit.coef - fit.intercept
    return -(X.T @ r) / X.shape[0]


def select_by_importance(importance, threshold: float = DEFAULT_THRESHOLD) -> tuple:
    """Indices with importance strictly above ``threshold``, most important first."""
    imp = np.asarray(importance, dtype=np.float64)
    idx = np.flatnonzero(imp > threshold)
    # stable sort keeps lower index first on ties
    order = np.argsort(-imp[idx], kind="stable")
    return tuple(int(i) for i in idx[order])


def write_importance_csv(path, importance) -> None:
    with open(path, "w") as fh:
        fh.write("index,importance\n")
        for i, v in enumerate(np.asarray(importance)):
            fh.write(f"{i + 1},{float(v)!r}\n")
