"""Dense least squares, weighted-Lasso coordinate descent and projections.

Projections are always taken through a thin QR factorization of the
selected columns; the n x n projection matrix is never formed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular

from .errors import MaxIterations, NotNested, RankDeficient

RANK_RTOL = 1e-10
DEFAULT_CD_TOL = 1e-8
DEFAULT_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    rss: float
    support: frozenset = field(default_factory=frozenset)


@dataclass(frozen=True)
class LassoProblem:
    """Minimise ``||y - X v||^2 + 2 n * penalty_level * sum_l weights_l |v_l|``."""

    design: np.ndarray
    response: np.ndarray
    penalty_level: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not np.all((w == 0) | (w == 1)):
            raise ValueError("weights must be 0/1")
        if self.penalty_level < 0:
            raise ValueError("penalty_level must be nonnegative")


def _qr_checked(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    q, r = np.linalg.qr(a, mode="reduced")
    if a.shape[1]:
        s = np.linalg.svd(r, compute_uv=False)
        if s[-1] < RANK_RTOL * s[0] or s[0] == 0.0:
            raise RankDeficient(
                f"design with {a.shape[1]} columns is rank deficient "
                f"(singular value ratio {s[-1] / s[0] if s[0] else 0.0:.3g})")
    return q, r


def least_squares(design: np.ndarray, response: np.ndarray) -> FitResult:
    """Ordinary least squares through a QR factorization."""
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, m = x.shape
    if m == 0:
        return FitResult(np.zeros(0), float(y @ y), frozenset())
    if n < m:
        raise RankDeficient(f"{m} predictors but only {n} observations")
    q, r = _qr_checked(x)
    qty = q.T @ y
    coef = solve_triangular(r, qty)
    resid = y - x @ coef
    return FitResult(coef, float(resid @ resid), frozenset(np.flatnonzero(coef).tolist()))


def residual_sum_of_squares(design: np.ndarray, response: np.ndarray) -> float:
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.shape[1] == 0:
        return float(y @ y)
    if x.shape[0] < x.shape[1]:
        raise RankDeficient(f"{x.shape[1]} predictors but only {x.shape[0]} observations")
    q, _ = _qr_checked(x)
    resid = y - q @ (q.T @ y)
    return float(resid @ resid)


@njit(cache=True, nogil=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True, nogil=True)
def _cd_gram(gram, xty, lam, weights, beta, tol, max_sweeps):
    """Covariance-update coordinate descent with active-set sweeps.

    Solves ``min 0.5 b'Gb - b'c + lam * sum w_l |b_l|`` in place.  Returns
    (number of full sweeps, converged flag).
    """
    q = beta.shape[0]
    grad = xty - gram @ beta
    sweeps = 0
    while sweeps < max_sweeps:
        # full sweep
        sweeps += 1
        delta = 0.0
        for l in range(q):
            gll = gram[l, l]
            if gll <= 0.0:
                continue
            old = beta[l]
            new = _soft(grad[l] + gll * old, lam * weights[l]) / gll
            d = new - old
            if d != 0.0:
                beta[l] = new
                for i in range(q):
                    grad[i] -= d * gram[i, l]
                if abs(d) > delta:
                    delta = abs(d)
        if delta <= tol:
            return sweeps, True
        # sweeps over the current active set until it settles
        while sweeps < max_sweeps:
            sweeps += 1
            delta = 0.0
            for l in range(q):
                if beta[l] == 0.0:
                    continue
                gll = gram[l, l]
                old = beta[l]
                new = _soft(grad[l] + gll * old, lam * weights[l]) / gll
                d = new - old
                if d != 0.0:
                    beta[l] = new
                    for i in range(q):
                        grad[i] -= d * gram[i, l]
                    if abs(d) > delta:
                        delta = abs(d)
            if delta <= tol:
                break
    return sweeps, False


def lasso_from_gram(gram: np.ndarray, xty: np.ndarray, penalty_level: float,
                    weights: np.ndarray, init: np.ndarray | None = None,
                    tol: float = DEFAULT_CD_TOL,
                    max_sweeps: int = DEFAULT_MAX_SWEEPS) -> np.ndarray:
    """Weighted Lasso on precomputed ``X'X/n`` and ``X'y/n``."""
    beta = np.zeros(len(xty)) if init is None else np.array(init, dtype=float, copy=True)
    _, ok = _cd_gram(np.ascontiguousarray(gram, dtype=float), np.asarray(xty, dtype=float),
                     float(penalty_level), np.asarray(weights, dtype=float), beta,
                     float(tol), int(max_sweeps))
    if not ok:
        raise MaxIterations(f"coordinate descent did not converge in {max_sweeps} sweeps")
    return beta


def weighted_lasso(problem: LassoProblem, init: np.ndarray | None = None,
                   tol: float = DEFAULT_CD_TOL,
                   max_sweeps: int = DEFAULT_MAX_SWEEPS) -> np.ndarray:
    """Minimiser of the weighted Lasso objective.

    Coordinates with weight 0 are unpenalised.  Convergence is declared when
    the largest coordinate change over a full sweep is at most ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.asarray(problem.design, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(problem.response, dtype=float)
    n = x.shape[0]
    return lasso_from_gram(x.T @ x / n, x.T @ y / n, problem.penalty_level,
                           problem.weights, init, tol, max_sweeps)


def nested_projection(z: np.ndarray, cols_b: Sequence[int], cols_extra: Sequence[int],
                      v: np.ndarray) -> Tuple[float, float]:
    """Return ``(v'(P_A - P_B)v, v'(I - P_A)v)`` with ``A = B + extra``.

    One QR of ``Z[:, B + extra]`` gives both quantities; the first is a sum
    of squares and therefore nonnegative by construction.
    """
    cols = list(cols_b) + list(cols_extra)
    v = np.asarray(v, dtype=float)
    if not cols:
        return 0.0, float(v @ v)
    za = z[:, cols]
    if za.shape[0] < za.shape[1]:
        raise RankDeficient(f"{za.shape[1]} columns but only {za.shape[0]} rows")
    q, _ = _qr_checked(za)
    coef = q.T @ v
    resid = v - q @ coef
    extra = coef[len(cols_b):]
    return float(extra @ extra), float(resid @ resid)


def projection_quadratic_form(z: np.ndarray, cols_a: Sequence[int], cols_b: Sequence[int],
                              v: np.ndarray) -> float:
    """``v' (P_A - P_B) v`` for nested column sets ``B`` within ``A``."""
    a, b = list(dict.fromkeys(cols_a)), list(dict.fromkeys(cols_b))
    if not set(b) <= set(a):
        raise NotNested(f"columns {sorted(set(b) - set(a))} are in B but not in A")
    extra = [c for c in a if c not in set(b)]
    return nested_projection(np.asarray(z, dtype=float), b, extra, v)[0]
