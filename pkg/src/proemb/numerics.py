"""Seeded randomness, least squares, distributions and scalar nonlinearities."""

from __future__ import annotations

import zlib

import numpy as np
from scipy import linalg

# Tolerances shared across the package.
TOL = {
    "simplex": 1e-9,
    "prob_sum": 1e-9,
    "lstsq_rcond": 1e-12,
    "zero_norm": 1e-300,
}


class DegenerateInputError(ValueError):
    """Raised when an input is degenerate for the requested operation."""


def _key(stream) -> int:
    if isinstance(stream, str):
        return zlib.crc32(stream.encode("utf-8"))
    return int(stream)


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Identical ``(seed, stream_id)`` pairs give bit-identical draw sequences.
    Child streams are derived with :meth:`spawn` and are independent of the
    parent and of each other.
    """

    def __init__(self, seed: int, stream_id: int | str = 0, _path: tuple = ()):
        self.seed = int(seed)
        self.stream_id = _key(stream_id)
        self._path = tuple(_path)
        ss = np.random.SeedSequence(
            entropy=self.seed & (2**64 - 1), spawn_key=(self.stream_id, *self._path)
        )
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, key: int | str) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self._path + (_key(key),))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self._path})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size or a.size == 0:
        raise ValueError(f"vectors must have equal nonzero length, got {a.size} and {b.size}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= TOL["zero_norm"] or nb <= TOL["zero_norm"]:
        raise DegenerateInputError("cosine similarity undefined for a zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(A, B=None) -> np.ndarray:
    """Pairwise cosine similarities between rows of ``A`` and rows of ``B``."""
    A = np.asarray(A, dtype=float)
    B = A if B is None else np.asarray(B, dtype=float)
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    if np.any(na <= TOL["zero_norm"]) or np.any(nb <= TOL["zero_norm"]):
        raise DegenerateInputError("cosine similarity undefined for a zero-norm row")
    return np.clip((A / na[:, None]) @ (B / nb[:, None]).T, -1.0, 1.0)


def sigmoid(x):
    """Logistic function, stable for large ``|x|``. Accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def solve_least_squares(X, y, ridge: float = 0.0, return_rank: bool = False):
    """Least-squares coefficients for ``X @ beta ~ y``.

    Parameters
    ----------
    X : array, shape (n, p)
    y : array, shape (n,) or (n, k)
        Multiple right-hand sides are solved column by column in one call.
    ridge : float
        ``0`` gives the OLS minimizer, or the minimum-norm solution when
        ``X`` is rank deficient (column-pivoted complete orthogonal
        factorization). ``ridge > 0`` solves ``(X'X + ridge I) beta = X'y``.
    return_rank : bool
        Also return the numerical rank of ``X`` (``min(n, p)`` under ridge).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    n, p = X.shape
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got X of shape {X.shape}")
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has {y.shape[0]}")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("least squares inputs must be finite")
    if ridge == 0:
        beta, _, rank, _ = linalg.lstsq(X, y, cond=TOL["lstsq_rcond"], lapack_driver="gelsy")
        return (beta, int(rank)) if return_rank else beta
    if p <= n:
        A = X.T @ X
        A[np.diag_indices_from(A)] += ridge
        beta = linalg.solve(A, X.T @ y, assume_a="pos")
    else:
        # dual form is cheaper when p > n: X'(XX' + ridge I)^-1 y
        K = X @ X.T
        K[np.diag_indices_from(K)] += ridge
        beta = X.T @ linalg.solve(K, y, assume_a="pos")
    return (beta, min(n, p)) if return_rank else beta


def sample_dirichlet(rng, alpha, size: int | None = None) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size < 2 or np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise ValueError("Dirichlet concentrations must be a finite positive vector of length >= 2")
    g = as_generator(rng)
    out = g.dirichlet(alpha, size=size)
    # tiny concentrations can underflow every gamma draw in a row
    rows = np.atleast_2d(out)
    bad = ~np.isfinite(rows).all(axis=1) | (rows.sum(axis=1) <= 0)
    if np.any(bad):
        for i in np.flatnonzero(bad):
            rows[i] = 0.0
            rows[i, g.choice(alpha.size, p=alpha / alpha.sum())] = 1.0
    return out


def sample_gaussian(rng, mean=0.0, std=1.0, size=None) -> np.ndarray:
    std_arr = np.asarray(std, dtype=float)
    if np.any(std_arr < 0) or not np.all(np.isfinite(std_arr)):
        raise ValueError("Gaussian standard deviation must be finite and nonnegative")
    if not np.all(np.isfinite(np.asarray(mean, dtype=float))):
        raise ValueError("Gaussian mean must be finite")
    return as_generator(rng).normal(mean, std, size=size)


def sample_bernoulli(rng, p, size=None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("Bernoulli probabilities must lie in [0, 1]")
    shape = p.shape if size is None else size
    return (as_generator(rng).random(shape) < p).astype(np.int64)


def sample_multinomial(rng, n, pvals) -> np.ndarray:
    """Multinomial counts; ``n`` may be a vector and ``pvals`` a matching matrix."""
    n_arr = np.asarray(n)
    pvals = np.asarray(pvals, dtype=float)
    if np.any(n_arr < 0):
        raise ValueError("multinomial counts must be nonnegative")
    if np.any(pvals < 0) or not np.all(np.isfinite(pvals)):
        raise ValueError("multinomial probabilities must be finite and nonnegative")
    sums = pvals.sum(axis=-1, keepdims=True)
    if np.any(sums <= 0):
        raise ValueError("multinomial probabilities must have positive mass")
    pvals = pvals / sums
    return as_generator(rng).multinomial(n_arr, pvals)


def sample_poisson(rng, lam, size=None) -> np.ndarray:
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0):
        raise ValueError("Poisson rate must be nonnegative")
    return as_generator(rng).poisson(lam, size=size)
