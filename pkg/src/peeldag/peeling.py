"""Topological layers and the super-graph from the reduced-form matrix.

The peeling loop repeatedly finds rows of the (thresholded) reduced-form
matrix with the fewest nonzeros among the unpeeled columns, pairs each such
row with its largest remaining column (a leaf), records ancestral relations
from the newly peeled leaves to the already peeled nodes, and removes the
leaves.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionMismatch, PeelStalled
from .graph import DirectedGraph, Edge, SuperGraph, ancestral_closure
from .tlp import (DEFAULT_TAU_GRID, TlpConfig, TlpFit, bic_tune, dc_constrained_fit,
                  default_kappa_grid, gamma_grid, truncate_init)

log = logging.getLogger(__name__)

ANCESTRAL_RULES = ("all", "layer")


@dataclass(frozen=True)
class ReducedFormEstimate:
    """Estimated ``V`` (q x p) with the per-column thresholds used for nonzeros.

    ``tilde_v`` and ``configs`` are kept from the nodewise fits so that
    perturbation replicates can warm-start with frozen tuning.
    """

    v: np.ndarray
    taus: np.ndarray
    tilde_v: Optional[np.ndarray] = None
    configs: Tuple[TlpConfig, ...] = ()

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        taus = np.broadcast_to(np.asarray(self.taus, dtype=float), (v.shape[1],)).copy()
        if np.any(taus <= 0):
            raise ValueError("thresholds must be positive")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "taus", taus)

    @property
    def nonzero(self) -> np.ndarray:
        return np.abs(self.v) > self.taus[None, :]


@dataclass(frozen=True)
class PeelRound:
    height: int
    pairs: Tuple[Edge, ...]
    removed: Tuple[int, ...]
    edges: Tuple[Edge, ...]


@dataclass(frozen=True)
class PeelTrace:
    rounds: Tuple[PeelRound, ...] = field(default_factory=tuple)

    def edges(self) -> List[Edge]:
        return [e for r in self.rounds for e in r.edges]


def peel(est: ReducedFormEstimate, *, strict: bool = False,
         ancestral_rule: str = "all") -> Tuple[SuperGraph, PeelTrace]:
    """Run the peeling loop on ``est``.

    ``ancestral_rule="layer"`` only tests a new leaf against the layer
    directly below it; ``"all"`` tests it against every node already
    peeled, which also catches direct edges that skip layers.  ``strict``
    additionally requires the minimal row count to be one, as it is on an
    exact reduced form.
    """
    if ancestral_rule not in ANCESTRAL_RULES:
        raise ValueError(f"ancestral_rule must be one of {ANCESTRAL_RULES}")
    v = est.v
    q, p = v.shape
    nz = est.nonzero
    absv = np.abs(v)
    remaining = np.ones(p, dtype=bool)
    heights = np.full(p, -1)
    rounds: List[PeelRound] = []
    found: List[Edge] = []
    h = 0
    while remaining.any():
        counts = nz[:, remaining].sum(axis=1)
        live = np.flatnonzero(counts > 0)
        if live.size == 0:
            cols = np.flatnonzero(remaining)
            raise PeelStalled(
                f"no instrument-leaf pair at height {h}; unpeeled nodes {(cols + 1).tolist()}",
                remaining=cols.tolist(), submatrix=np.where(nz[:, cols], v[:, cols], 0.0))
        m = counts[live].min()
        if strict and m != 1:
            cols = np.flatnonzero(remaining)
            raise PeelStalled(f"smallest row count is {m} at height {h}, strict mode needs 1",
                              remaining=cols.tolist(), submatrix=np.where(nz[:, cols], v[:, cols], 0.0))
        rows = live[counts[live] == m]
        pairs = []
        for l in rows:
            cand = np.flatnonzero(remaining & nz[l])
            j = int(cand[np.argmax(absv[l, cand])])  # argmax keeps the lowest index on ties
            pairs.append((int(l), j))
        leaves = sorted({j for _, j in pairs})
        edges = []
        if h > 0:
            if ancestral_rule == "layer":
                below = np.flatnonzero(heights == h - 1)
            else:
                below = np.flatnonzero((heights >= 0) & (heights < h))
            for k in leaves:
                inst = [l for l, jj in pairs if jj == k]
                for j in below:
                    if all(nz[l, j] for l in inst):
                        edges.append((k, int(j)))
        heights[leaves] = h
        remaining[leaves] = False
        found.extend(edges)
        rounds.append(PeelRound(h, tuple(pairs), tuple(leaves), tuple(edges)))
        h += 1
    ancestral = ancestral_closure(DirectedGraph(p, found))
    interventions = frozenset(zip(*np.nonzero(nz)))
    s = SuperGraph(p, q, ancestral, interventions, tuple(int(x) for x in heights))
    return s, PeelTrace(tuple(rounds))


@dataclass(frozen=True)
class TuningGrid:
    """Per-node BIC grids; ``gammas=None`` derives the gamma grid from the data."""

    taus: Tuple[float, ...] = DEFAULT_TAU_GRID
    gammas: Optional[Tuple[float, ...]] = None
    n_gamma: int = 100
    kappas: Optional[Tuple[int, ...]] = None
    max_kappa: int = 30


Tuning = Union[None, TuningGrid, TlpConfig, Sequence[TlpConfig]]


def fit_reduced_form(x: np.ndarray, y: np.ndarray, tuning: Tuning = None,
                     init: Optional[np.ndarray] = None,
                     gram: Optional[np.ndarray] = None) -> Tuple[ReducedFormEstimate, List[TlpFit]]:
    """Nodewise constrained regressions of each column of ``y`` on ``x``.

    ``tuning`` is a grid (BIC per node), one config for every node, or a
    sequence of per-node configs.  ``init`` (q x p) warm-starts fixed-config
    fits; entries beyond the ``kappa`` budget above ``tau`` are dropped.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, q = x.shape
    if y.shape[0] != n:
        raise DimensionMismatch(f"x has {n} rows, y has {y.shape[0]}")
    p = y.shape[1]
    if gram is None:
        gram = x.T @ x / n
    fits: List[TlpFit] = []
    configs: List[TlpConfig] = []
    if tuning is None or isinstance(tuning, TuningGrid):
        grid = tuning or TuningGrid()
        gammas = grid.gammas if grid.gammas is not None else gamma_grid(x, y, grid.n_gamma)
        kappas = grid.kappas if grid.kappas is not None else default_kappa_grid(q, grid.max_kappa)
        for j in range(p):
            cfg, fit = bic_tune(x, y[:, j], grid.taus, gammas, kappas, gram=gram)
            configs.append(cfg)
            fits.append(fit)
    else:
        per_node = [tuning] * p if isinstance(tuning, TlpConfig) else list(tuning)
        if len(per_node) != p:
            raise DimensionMismatch(f"{len(per_node)} configs for {p} nodes")
        xty = x.T @ y / n
        for j, cfg in enumerate(per_node):
            start = None if init is None else truncate_init(init[:, j], cfg.tau, cfg.kappa)
            fits.append(dc_constrained_fit(x, y[:, j], cfg, start, gram=gram, xty=xty[:, j]))
            configs.append(cfg)
    v = np.column_stack([f.v_hat for f in fits])
    tilde = np.column_stack([f.tilde_v for f in fits])
    taus = np.array([c.tau for c in configs])
    return ReducedFormEstimate(v, taus, tilde, tuple(configs)), fits


def learn_structure(x: np.ndarray, y: np.ndarray, tuning: Tuning = None, *,
                    init: Optional[np.ndarray] = None, gram: Optional[np.ndarray] = None,
                    ancestral_rule: str = "all") -> Tuple[SuperGraph, ReducedFormEstimate, PeelTrace]:
    """Nodewise fits followed by peeling; deterministic given data and tuning."""
    est, _ = fit_reduced_form(x, y, tuning, init, gram)
    s, trace = peel(est, ancestral_rule=ancestral_rule)
    return s, est, trace
