"""Recover the DAG coefficients from an estimated super-graph.

For every node the candidate predictors are its estimated ancestors (other
primary variables) and its candidate interventions; one combined sparsity
budget is imposed and fitted with the same truncated-L1 machinery used for
the reduced form.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import BudgetExceedsPredictors, DegreesOfFreedomExhausted, DimensionMismatch
from .graph import DirectedGraph, SuperGraph, edges_from_matrix, has_cycle
from .tlp import DEFAULT_TAU_GRID, bic_tune, default_kappa_grid, gamma_grid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightedDag:
    """Coefficients of ``Y = U'Y + W'X + eps`` with ``eps ~ N(0, diag(sigma2))``."""

    u: np.ndarray
    w: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        u, w = np.asarray(self.u, float), np.asarray(self.w, float)
        s2 = np.asarray(self.sigma2, float)
        p = u.shape[0]
        if u.shape != (p, p) or w.shape[1] != p or s2.shape != (p,):
            raise DimensionMismatch(f"u {u.shape}, w {w.shape}, sigma2 {s2.shape} do not agree")
        if has_cycle(DirectedGraph(p, edges_from_matrix(u))):
            raise ValueError("u is not acyclic")
        if np.any(s2 <= 0):
            raise ValueError("noise variances must be positive")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "sigma2", s2)

    @property
    def p(self) -> int:
        return self.u.shape[0]

    @property
    def q(self) -> int:
        return self.w.shape[0]


def refit_dag(x: np.ndarray, y: np.ndarray, s: SuperGraph,
              kappa_prime: Union[None, int, Sequence[int]] = None,
              tau_grid: Sequence[float] = DEFAULT_TAU_GRID,
              n_gamma: int = 100, max_kappa: int = 30) -> WeightedDag:
    """Per-node l0-constrained regression on ``(Y_an(j), X_in(j))``.

    ``kappa_prime`` fixes the combined budget per node (an int applies to
    all nodes); when omitted it is chosen by BIC together with ``tau`` and
    ``gamma``.  The noise variance of node ``j`` is the refit RSS divided by
    ``n - |an(j)| - |in(j)|``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = x.shape
    p = y.shape[1]
    if (s.p, s.q) != (p, q):
        raise DimensionMismatch(f"supergraph is {(s.p, s.q)}, data give {(p, q)}")
    if isinstance(kappa_prime, (int, np.integer)):
        kappa_prime = [int(kappa_prime)] * p
    u = np.zeros((p, p))
    w = np.zeros((q, p))
    sigma2 = np.zeros(p)
    for j in range(p):
        an, inv = s.ancestors_of(j), s.interventions_of(j)
        m = len(an) + len(inv)
        dof = n - m
        if dof <= 0:
            raise DegreesOfFreedomExhausted(f"node {j + 1}: {m} predictors for {n} observations")
        if m == 0:
            sigma2[j] = float(y[:, j] @ y[:, j]) / dof
            continue
        design = np.hstack([y[:, an], x[:, inv]])
        if kappa_prime is None:
            kappas = default_kappa_grid(m, max_kappa)
        else:
            k = int(kappa_prime[j])
            if k < 1:
                raise ValueError(f"node {j + 1}: budget must be at least 1")
            if k > m:
                warnings.warn(f"node {j + 1}: budget {k} exceeds {m} candidate predictors; clamped",
                              BudgetExceedsPredictors)
                k = m
            kappas = (k,)
        _, fit = bic_tune(design, y[:, j], tau_grid, gamma_grid(design, y[:, j], n_gamma), kappas)
        coef = fit.v_hat
        u[an, j] = coef[: len(an)]
        w[inv, j] = coef[len(an):]
        sigma2[j] = fit.rss / dof
    if np.any(sigma2 <= 0):
        log.warning("zero residual variance for nodes %s", (np.flatnonzero(sigma2 <= 0) + 1).tolist())
        sigma2 = np.maximum(sigma2, np.finfo(float).tiny)
    return WeightedDag(u, w, sigma2)

