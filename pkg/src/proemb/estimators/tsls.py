"""Proxy-based two-stage least squares and a naive OLS baseline.

The ego's proxy ``Z`` is treated as endogenous, the neighbors' proxy
``Zngb`` as the excluded instrument, and the treatment as exogenous and
included. The treatment coefficient of the second stage is the effect
estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import solve_least_squares


@dataclass
class TslsResult:
    theta_hat: float
    coef: np.ndarray
    first_stage: np.ndarray  # fitted endogenous block [T_hat | Z_hat]
    diagnostics: dict


def _design(*blocks) -> np.ndarray:
    return np.hstack([np.asarray(b, dtype=float).reshape(b.shape[0], -1) for b in blocks])


def fit_tsls(y, T, Z, Zngb, ridge: float = 0.0) -> TslsResult:
    y = np.asarray(y, dtype=float)
    T = np.asarray(T, dtype=float).ravel()
    n = y.shape[0]
    Z = np.asarray(Z, dtype=float).reshape(n, -1)
    Zngb = np.asarray(Zngb, dtype=float).reshape(n, -1)
    if n < 2:
        raise ValueError("TSLS needs at least two nodes")
    if T.shape[0] != n:
        raise ValueError("treatment length does not match outcome length")
    if np.ptp(T) == 0:
        raise ValueError("treatment has zero variance; the effect is not identified")
    ones = np.ones((n, 1))
    instruments = _design(ones, T[:, None], Zngb)
    endog = _design(T[:, None], Z)
    gamma, rank1 = solve_least_squares(instruments, endog, ridge, return_rank=True)
    fitted = instruments @ gamma
    X2 = np.hstack([ones, fitted])
    coef, rank2 = solve_least_squares(X2, y, ridge, return_rank=True)
    diagnostics = {
        "n": n,
        "n_instruments": instruments.shape[1],
        "n_regressors": X2.shape[1],
        "rank_first_stage": rank1,
        "rank_second_stage": rank2,
    }
    return TslsResult(float(coef[1]), coef, fitted, diagnostics)


def fit_ols(y, T, Z=None, ridge: float = 0.0) -> float:
    """Treatment coefficient of ``y ~ 1 + T + Z`` (``Z`` optional)."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    blocks = [np.ones((n, 1)), np.asarray(T, dtype=float).reshape(n, 1)]
    if Z is not None:
        blocks.append(np.asarray(Z, dtype=float).reshape(n, -1))
    coef = solve_least_squares(np.hstack(blocks), y, ridge)
    return float(coef[1])
