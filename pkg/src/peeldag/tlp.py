"""Nodewise l0-constrained regression by truncated-L1 DC iterations.

Each node's reduced-form column is fitted by repeatedly solving a weighted
Lasso in which coordinates already larger than ``tau`` are left
unpenalised, then projecting onto the ``kappa`` largest coordinates and
refitting by least squares.  Tuning is by BIC over (tau, gamma, kappa).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import MaxIterations, RankDeficient
from .kernels import (DEFAULT_CD_TOL, DEFAULT_MAX_SWEEPS, RANK_RTOL, FitResult,
                      lasso_from_gram, least_squares)

log = logging.getLogger(__name__)

DEFAULT_TAU_GRID = (0.05, 0.1, 0.15)
DEFAULT_N_GAMMA = 100
DEFAULT_MAX_KAPPA = 30
DC_TOL = 1e-6
BIC_TIE_TOL = 1e-9
TIE_BREAK = "min_penalty"


@dataclass(frozen=True)
class TlpConfig:
    gamma: float
    tau: float
    kappa: int
    max_dc_iterations: int = 50
    cd_tol: float = DEFAULT_CD_TOL
    dc_tol: float = DC_TOL

    def __post_init__(self):
        if self.gamma <= 0 or self.tau <= 0:
            raise ValueError("gamma and tau must be positive")
        if self.kappa < 1:
            raise ValueError("kappa must be at least 1")


@dataclass(frozen=True)
class TlpFit:
    tilde_v: np.ndarray
    v_hat: np.ndarray
    support: Tuple[int, ...]
    dc_iterations_used: int
    rss: float
    converged: bool = True
    objective_path: Tuple[float, ...] = field(default=(), repr=False)


def surrogate_j(z: float, tau: float) -> float:
    """Truncated-L1 surrogate ``min(|z| / tau, 1)`` of the indicator ``z != 0``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return min(abs(z) / tau, 1.0)


def tlp_objective(x: np.ndarray, y: np.ndarray, v: np.ndarray, gamma: float, tau: float) -> float:
    """``RSS(v) + 2 n gamma tau sum_l min(|v_l|, tau)``.

    This is the function the DC iterations majorise; it does not increase
    from one iterate to the next.
    """
    r = y - x @ v
    return float(r @ r + 2 * len(y) * gamma * tau * np.minimum(np.abs(v), tau).sum())


def _active_count(v: np.ndarray, tau: float) -> int:
    return int(np.count_nonzero(np.abs(v) > tau))


def truncate_init(v: np.ndarray, tau: float, kappa: int) -> np.ndarray:
    """Zero the smallest above-``tau`` entries so at most ``kappa`` remain."""
    v = np.array(v, dtype=float, copy=True)
    above = np.flatnonzero(np.abs(v) > tau)
    if len(above) > kappa:
        order = above[np.lexsort((above, -np.abs(v[above])))]
        v[order[kappa:]] = 0.0
    return v


def support_order(tilde_v: np.ndarray) -> np.ndarray:
    """Columns ranked by decreasing ``|tilde_v|``; ties go to the lower index.

    Nonzero coordinates come first, then the zeros in index order.
    """
    mag = np.abs(np.asarray(tilde_v, dtype=float))
    idx = np.arange(len(mag))
    return np.lexsort((idx, -mag))


def select_support(tilde_v: np.ndarray, kappa: int) -> Tuple[int, ...]:
    """Index set kept by the l0 projection.

    Exact zeros are only kept when ``kappa`` equals the dimension, in which
    case the constraint does not bind and every column is kept.
    """
    q = len(tilde_v)
    if kappa >= q:
        return tuple(range(q))
    nnz = int(np.count_nonzero(tilde_v))
    return tuple(sorted(support_order(tilde_v)[:min(kappa, nnz)].tolist()))


def l0_project_refit(tilde_v: np.ndarray, kappa: int, x: np.ndarray, y: np.ndarray) -> FitResult:
    """Keep the ``kappa`` largest coordinates and refit them by least squares."""
    q = len(tilde_v)
    if not 1 <= kappa <= q:
        raise ValueError(f"kappa={kappa} outside [1, {q}]")
    support = select_support(tilde_v, kappa)
    coef = np.zeros(q)
    if support:
        fit = least_squares(x[:, list(support)], y)
        coef[list(support)] = fit.coefficients
        rss = fit.rss
    else:
        rss = float(y @ y)
    return FitResult(coef, rss, frozenset(support))


def _dc_iterate(gram, xty, gamma, tau, init, max_iter, cd_tol, dc_tol,
                objective=None, first=None) -> Tuple[np.ndarray, int, bool, List[float]]:
    # ``first``, when given, is the already-computed solution of the first solve
    lam = gamma * tau
    cur = np.asarray(init, dtype=float)
    path = [objective(cur)] if objective else []
    for t in range(max_iter):
        if t == 0 and first is not None:
            nxt = first
        else:
            weights = (np.abs(cur) <= tau).astype(float)
            nxt = lasso_from_gram(gram, xty, lam, weights, cur, cd_tol, DEFAULT_MAX_SWEEPS)
        if objective:
            path.append(objective(nxt))
        if np.max(np.abs(nxt - cur), initial=0.0) <= dc_tol:
            return cur, t, True, path
        cur = nxt
    return cur, max_iter, False, path


def dc_constrained_fit(x: np.ndarray, y: np.ndarray, cfg: TlpConfig,
                       init: Optional[np.ndarray] = None, *,
                       gram: Optional[np.ndarray] = None,
                       xty: Optional[np.ndarray] = None,
                       track_objective: bool = False) -> TlpFit:
    """DC iterations for one node followed by l0 projection and refit.

    ``init`` defaults to zero and must have at most ``kappa`` entries above
    ``tau`` in absolute value.  ``dc_iterations_used`` is the index ``t`` of
    the returned iterate, i.e. the confirming solve is not counted.  If the
    DC loop hits ``max_dc_iterations`` the last iterate is still projected
    and ``converged`` is False.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = x.shape
    if cfg.kappa > q:
        raise ValueError(f"kappa={cfg.kappa} exceeds q={q}")
    init = np.zeros(q) if init is None else np.asarray(init, dtype=float)
    if _active_count(init, cfg.tau) > cfg.kappa:
        raise ValueError("initial value has more than kappa entries above tau")
    if gram is None:
        gram = x.T @ x / n
    if xty is None:
        xty = x.T @ y / n
    objective = (lambda v: tlp_objective(x, y, v, cfg.gamma, cfg.tau)) if track_objective else None
    tilde, used, ok, path = _dc_iterate(gram, xty, cfg.gamma, cfg.tau, init,
                                        cfg.max_dc_iterations, cfg.cd_tol, cfg.dc_tol, objective)
    if not ok:
        log.warning("DC iterations hit the cap of %d; projecting last iterate", cfg.max_dc_iterations)
    fit = l0_project_refit(tilde, cfg.kappa, x, y)
    return TlpFit(tilde, fit.coefficients, tuple(sorted(fit.support)), used, fit.rss, ok, tuple(path))


def gamma_grid(x: np.ndarray, y: np.ndarray, num: int = DEFAULT_N_GAMMA) -> np.ndarray:
    """``exp`` of ``num`` equally spaced values from ``log m`` down to ``0.05 log m``.

    ``m`` is the largest absolute inner product between a column of ``x``
    and a column of ``y``.
    """
    y2 = np.asarray(y, dtype=float)
    if y2.ndim == 1:
        y2 = y2[:, None]
    m = float(np.max(np.abs(np.asarray(x, dtype=float).T @ y2), initial=0.0))
    top = np.log(max(m, np.finfo(float).tiny))
    return np.exp(np.linspace(top, 0.05 * top, num))


def default_kappa_grid(q: int, max_kappa: int = DEFAULT_MAX_KAPPA) -> Tuple[int, ...]:
    return tuple(range(1, min(max_kappa, q) + 1))


def bic(rss: float, n: int, df: int) -> float:
    return n * np.log(max(rss, np.finfo(float).tiny) / n) + df * np.log(n)


def _prefix_rss(x: np.ndarray, y: np.ndarray, order: np.ndarray) -> np.ndarray:
    """RSS of least squares on each leading prefix of ``order`` (entry s = first s columns).

    Prefixes that are rank deficient get ``nan``.
    """
    m = len(order)
    out = np.full(m + 1, np.nan)
    yy = float(y @ y)
    out[0] = yy
    if m == 0:
        return out
    k = min(m, x.shape[0])
    q_, r = np.linalg.qr(x[:, order[:k]], mode="reduced")
    qty = q_.T @ y
    cum = yy - np.concatenate(([0.0], np.cumsum(qty ** 2)))
    s = np.linalg.svd(r, compute_uv=False)
    if s[0] > 0 and s[-1] >= RANK_RTOL * s[0]:
        out[: k + 1] = np.maximum(cum, 0.0)
        return out
    for size in range(1, k + 1):
        sv = np.linalg.svd(r[:size, :size], compute_uv=False)
        if sv[0] == 0 or sv[-1] < RANK_RTOL * sv[0]:
            break
        out[size] = max(cum[size], 0.0)
    return out


def _prefer(rule: str, tau: float, gamma: float, best_tau: float, best_gamma: float) -> bool:
    if rule == "first":
        return False
    if rule == "min_penalty":
        return gamma * tau < best_gamma * best_tau
    if rule == "max_tau":
        return (tau, -gamma) > (best_tau, -best_gamma)
    raise ValueError(f"unknown tie_break rule {rule!r}")


def bic_tune(x: np.ndarray, y: np.ndarray,
             tau_grid: Sequence[float] = DEFAULT_TAU_GRID,
             gamma_grid_values: Optional[Sequence[float]] = None,
             kappa_grid: Optional[Iterable[int]] = None, *,
             gram: Optional[np.ndarray] = None,
             base: Optional[TlpConfig] = None,
             tie_break: str = TIE_BREAK) -> Tuple[TlpConfig, TlpFit]:
    """Pick ``(tau, gamma, kappa)`` minimising ``n log(RSS/n) + |support| log n``.

    Every cell starts its DC iterations from zero.  The first weighted
    Lasso of a cell is the plain Lasso, which is warm-started from the
    previous gamma's plain Lasso (convex, so only speed is affected).  A
    cell whose fit fails is skipped.

    Distinct gammas often project onto the same support and so share a BIC
    value.  ``tie_break="min_penalty"`` keeps the tied cell with the
    smallest ``gamma * tau`` (least shrinkage of the DC fixed point, which
    keeps frozen tuning stable under perturbation); ``"max_tau"`` prefers
    the largest threshold; ``"first"`` keeps grid order.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = x.shape
    gammas = gamma_grid(x, y) if gamma_grid_values is None else np.asarray(gamma_grid_values, float)
    kappas = sorted({k for k in (default_kappa_grid(q) if kappa_grid is None else kappa_grid) if 1 <= k <= q})
    if not len(tau_grid) or not len(gammas) or not kappas:
        raise ValueError("tuning grids must be nonempty")
    base = base or TlpConfig(gamma=1.0, tau=1.0, kappa=1)
    if gram is None:
        gram = x.T @ x / n
    xty = x.T @ y / n

    best = None
    rss_cache: Dict[Tuple[int, ...], float] = {}
    for tau in tau_grid:
        lasso_warm = np.zeros(q)
        for gamma in gammas:
            try:
                lasso_warm = lasso_from_gram(gram, xty, gamma * tau, np.ones(q), lasso_warm,
                                             base.cd_tol, DEFAULT_MAX_SWEEPS)
                tilde, used, ok, _ = _dc_iterate(gram, xty, gamma, tau, np.zeros(q),
                                                 base.max_dc_iterations, base.cd_tol,
                                                 base.dc_tol, first=lasso_warm.copy())
            except MaxIterations:
                log.debug("cell tau=%g gamma=%g failed to converge; skipped", tau, gamma)
                continue
            order = support_order(tilde)
            nnz = int(np.count_nonzero(tilde))
            prefix = None
            for kappa in kappas:
                size = q if kappa >= q else min(kappa, nnz)
                key = tuple(sorted(order[:size].tolist()))
                if key in rss_cache:
                    rss = rss_cache[key]
                else:
                    if prefix is None:
                        prefix = _prefix_rss(x, y, order)
                    rss = prefix[size] if size <= n else np.nan
                    rss_cache[key] = rss
                if not np.isfinite(rss):
                    continue
                score = bic(rss, n, size)
                if best is None or score < best[0] - BIC_TIE_TOL * max(1.0, abs(best[0])):
                    best = (score, tau, gamma, kappa, tilde, used, ok)
                elif (score <= best[0] + BIC_TIE_TOL * max(1.0, abs(best[0]))
                      and _prefer(tie_break, tau, gamma, best[1], best[2])):
                    best = (min(score, best[0]), tau, gamma, kappa, tilde, used, ok)
    if best is None:
        raise RankDeficient("every tuning cell failed")
    _, tau, gamma, kappa, tilde, used, ok = best
    cfg = replace(base, gamma=float(gamma), tau=float(tau), kappa=int(kappa))
    fit = l0_project_refit(tilde, kappa, x, y)
    return cfg, TlpFit(tilde, fit.coefficients, tuple(sorted(fit.support)), used, fit.rss, ok)
