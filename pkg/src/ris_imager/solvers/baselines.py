"""Classical reconstruction baselines: subspace pursuit, support-aware least
squares (oracle lower bound), and plain least squares. All operate on the
real-stacked system since the image is real."""

from __future__ import annotations

import numpy as np

from .gamp import real_stack


def _lstsq_on(ab: np.ndarray, u: np.ndarray, support: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    sub = ab[:, support]
    if ridge > 0.0:
        gram = sub.T @ sub + ridge * np.eye(sub.shape[1])
        coef = np.linalg.solve(gram, sub.T @ u)
    else:
        coef, *_ = np.linalg.lstsq(sub, u, rcond=None)
    return coef


def sp_baseline(a: np.ndarray, y: np.ndarray, sparsity: int, max_iters: int = 50, tol: float = 1e-8) -> np.ndarray:
    """Subspace pursuit: iterative support refinement + least squares on the support."""
    a = np.asarray(a, dtype=complex)
    y = np.asarray(y, dtype=complex)
    n = a.shape[1]
    if sparsity < 0 or sparsity > min(2 * a.shape[0], n):
        raise ValueError("sparsity must lie in [0, min(2K, N)]")
    if sparsity == 0:
        return np.zeros(n)
    ab, u = real_stack(a, y)
    norms = np.linalg.norm(ab, axis=0)
    norms[norms == 0.0] = 1.0
    abn = ab / norms

    residual = u.copy()
    support = np.array([], dtype=int)
    x = np.zeros(n)
    best_res = np.inf
    for _ in range(max_iters):
        corr = np.abs(abn.T @ residual)
        candidates = np.argsort(corr)[::-1][:sparsity]
        merged = np.union1d(candidates, support)
        try:
            coef = _lstsq_on(abn, u, merged)
        except np.linalg.LinAlgError:
            coef = _lstsq_on(abn, u, merged, ridge=1e-10)
        keep = merged[np.argsort(np.abs(coef))[::-1][:sparsity]]
        keep = np.sort(keep)
        try:
            coef = _lstsq_on(abn, u, keep)
        except np.linalg.LinAlgError:
            coef = _lstsq_on(abn, u, keep, ridge=1e-10)
        x = np.zeros(n)
        x[keep] = coef
        residual = u - abn @ x
        res_norm = float(np.linalg.norm(residual))
        if np.array_equal(keep, support) or res_norm < tol:
            support = keep
            break
        if res_norm >= best_res * (1.0 - 1e-12):
            support = keep
            break
        best_res = res_norm
        support = keep
    return x / norms


def sals_oracle(a: np.ndarray, y: np.ndarray, support) -> tuple:
    """Least squares restricted to the true support, zero elsewhere.

    Returns (x_hat, used_ridge); an ill-conditioned restricted system falls
    back to a small ridge regularizer and reports it.
    """
    a = np.asarray(a, dtype=complex)
    y = np.asarray(y, dtype=complex)
    n = a.shape[1]
    support = np.asarray(support, dtype=int)
    x = np.zeros(n)
    if support.size == 0:
        return x, False
    if support.size > 2 * a.shape[0]:
        raise ValueError("support larger than the real-stacked measurement count")
    ab, u = real_stack(a, y)
    sub = ab[:, support]
    used_ridge = False
    cond = np.linalg.cond(sub)
    if not np.isfinite(cond) or cond > 1e10:
        used_ridge = True
        ridge = 1e-10 * float(np.trace(sub.T @ sub)) / max(support.size, 1)
        coef = _lstsq_on(ab, u, support, ridge=max(ridge, 1e-18))
    else:
        coef = _lstsq_on(ab, u, support)
    x[support] = coef
    return x, used_ridge


def ls_baseline(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-norm least squares on the full real-stacked system."""
    ab, u = real_stack(np.asarray(a, dtype=complex), np.asarray(y, dtype=complex))
    x, *_ = np.linalg.lstsq(ab, u, rcond=None)
    return x
