"""Simulation designs: random and hub DAGs, intervention setups A/B/C.

Also holds the structural Hamming distance and the type-I error / power
experiment driver.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, PeelDagError
from .graph import (DirectedGraph, SuperGraph, ancestral_closure, edges_from_matrix, has_cycle,
                    topological_heights)
from .refit import WeightedDag

log = logging.getLogger(__name__)


class GraphKind(str, enum.Enum):
    RANDOM = "random"
    HUB = "hub"


class Setup(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"


@dataclass(frozen=True)
class SimDesign:
    p: int
    q: int
    n: int
    graph_kind: GraphKind = GraphKind.RANDOM
    setup: Setup = Setup.A
    sigma2_range: Tuple[float, float] = (0.5, 1.0)
    x_corr: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "graph_kind", GraphKind(self.graph_kind))
        object.__setattr__(self, "setup", Setup(self.setup))
        if self.setup in (Setup.A, Setup.B) and self.q < 2 * self.p:
            raise DimensionMismatch(f"setup {self.setup.value} needs q >= 2p")
        if self.setup is Setup.C and self.q < self.p:
            raise DimensionMismatch("setup C needs q >= p")
        if self.n < 1:
            raise ValueError("n must be positive")


@dataclass(frozen=True)
class SimulationTruth:
    dag: WeightedDag
    v: np.ndarray
    omega: np.ndarray
    ancestral: frozenset

    def supergraph(self, atol: float = 0.0) -> SuperGraph:
        """The true super-graph: ancestral relations and the support of ``V``."""
        g = DirectedGraph(self.dag.p, edges_from_matrix(self.dag.u))
        return SuperGraph(self.dag.p, self.dag.q, self.ancestral,
                          edges_from_matrix(self.v, atol), topological_heights(g))


def gen_u(kind, p: int, rng: np.random.Generator) -> np.ndarray:
    kind = GraphKind(kind)
    u = np.zeros((p, p))
    if kind is GraphKind.RANDOM:
        upper = np.triu(np.ones((p, p), dtype=bool), k=1)
        u[upper] = rng.random(int(upper.sum())) < 1.0 / p
    else:
        if p < 3:
            raise ValueError("hub graph needs p >= 3")
        for j in range(1, p // 2 - 1):
            # 1-based U_{1,2j+1} and U_{2,2j+2}
            u[0, 2 * j] = 1.0
            u[1, 2 * j + 1] = 1.0
    return u


def gen_w(setup, p: int, q: int) -> np.ndarray:
    setup = Setup(setup)
    if setup is Setup.C:
        if q < p:
            raise DimensionMismatch("setup C needs q >= p")
        return np.vstack([np.eye(p), np.zeros((q - p, p))])
    if q < 2 * p:
        raise DimensionMismatch(f"setup {setup.value} needs q >= 2p")
    a = np.zeros((p, p))
    b = np.zeros((p, p))
    for j in range(p - 1):
        a[j, j] = b[j, j] = b[j, j + 1] = 1.0
        if setup is Setup.B:
            a[j, j + 1] = 1.0
    a[p - 1, p - 1] = 1.0
    return np.vstack([a, b, np.zeros((q - 2 * p, p))])


def noise_variances(p: int, lo: float = 0.5, hi: float = 1.0) -> np.ndarray:
    return np.linspace(lo, hi, p)


def make_truth(u: np.ndarray, w: np.ndarray, sigma2: np.ndarray) -> SimulationTruth:
    dag = WeightedDag(u, w, sigma2)
    p = dag.p
    i_minus_u = np.eye(p) - dag.u
    v = np.linalg.solve(i_minus_u.T, dag.w.T).T
    omega = i_minus_u @ np.diag(1.0 / dag.sigma2) @ i_minus_u.T
    anc = ancestral_closure(DirectedGraph(p, edges_from_matrix(dag.u)))
    return SimulationTruth(dag, v, omega, anc)


def generate_truth(design: SimDesign, rng: np.random.Generator,
                   zero_edges: Sequence[Tuple[int, int]] = ()) -> SimulationTruth:
    """Draw ``U`` for the design and build ``W``, ``Sigma`` deterministically.

    ``zero_edges`` (0-based) are forced to zero, which puts the truth under
    the null of an edge hypothesis.
    """
    u = gen_u(design.graph_kind, design.p, rng)
    for k, j in zero_edges:
        u[k, j] = 0.0
    w = gen_w(design.setup, design.p, design.q)
    return make_truth(u, w, noise_variances(design.p, *design.sigma2_range))


def _topological_order(u: np.ndarray) -> List[int]:
    p = u.shape[0]
    indeg = (u != 0).sum(axis=0)
    ready = [j for j in range(p) if indeg[j] == 0]
    order = []
    while ready:
        k = ready.pop(0)
        order.append(k)
        for j in np.flatnonzero(u[k]):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(int(j))
    return order


def sample_x(n: int, q: int, x_corr: float, rng: np.random.Generator) -> np.ndarray:
    """Rows iid N(0, S) with ``S_ll' = x_corr ** |l - l'|`` via the AR(1) recursion."""
    z = rng.standard_normal((n, q))
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    scale = np.sqrt(1.0 - x_corr ** 2)
    for l in range(1, q):
        x[:, l] = x_corr * x[:, l - 1] + scale * z[:, l]
    return x


def sample_data(truth: SimulationTruth, n: int, x_corr: float,
                rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    dag = truth.dag
    x = sample_x(n, dag.q, x_corr, rng)
    eps = rng.standard_normal((n, dag.p)) * np.sqrt(dag.sigma2)
    y = x @ dag.w + eps
    for j in _topological_order(dag.u):
        parents = np.flatnonzero(dag.u[:, j])
        if parents.size:
            y[:, j] += y[:, parents] @ dag.u[parents, j]
    return x, y


def shd(u_hat: np.ndarray, u_true: np.ndarray) -> int:
    """Number of entries where the supports of the two matrices disagree."""
    a, b = np.asarray(u_hat), np.asarray(u_true)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return int(np.count_nonzero((a != 0) != (b != 0)))


def inject_alternative(truth: SimulationTruth, edges: Sequence[Tuple[int, int]],
                       value: float) -> SimulationTruth:
    """Set ``U`` on the hypothesized edges to ``value`` on top of a null truth."""
    u = truth.dag.u.copy()
    for k, j in edges:
        u[k, j] = value
    if has_cycle(DirectedGraph(u.shape[0], edges_from_matrix(u))):
        raise ValueError("alternative creates a directed cycle")
    return make_truth(u, truth.dag.w, truth.dag.sigma2)


METHODS = ("dp", "lr", "olr")


def _rep_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def _rep_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, np.uint64)[0])


def run_experiment(design: SimDesign, hypothesis, alternative_grid: Sequence[float] = (0.0,),
                   reps: int = 10, dp=None, methods: Sequence[str] = METHODS,
                   alpha: float = 0.05, tuning=None) -> List[Dict[str, object]]:
    """Rejection frequencies per (method, alternative value).

    Each replication draws the null truth with the hypothesized edges set to
    zero and then injects the alternative value: on the first hypothesized
    edge for edge tests, on every edge for pathway tests.  Replications use
    the same random numbers at every alternative value.  Failed runs are
    counted in ``failures`` and left out of ``rate``.
    """
    from .graph import HypothesisMode
    from .inference import DpConfig, dp_edge_test, dp_pathway_test, lr_test

    bad = set(methods) - set(METHODS)
    if bad:
        raise ValueError(f"unknown methods {sorted(bad)}")
    for k, j in hypothesis.edges:
        if not (0 <= k < design.p and 0 <= j < design.p):
            raise DimensionMismatch(f"hypothesized edge {(k + 1, j + 1)} outside p={design.p}")
    dp = dp or DpConfig()
    pathway = hypothesis.mode is HypothesisMode.PATHWAY
    targets = list(hypothesis.edges) if pathway else [hypothesis.edges[0]]
    dp_test = dp_pathway_test if pathway else dp_edge_test
    rows = []
    for level, value in enumerate(alternative_grid):
        counts = {m: [0, 0, 0, 0] for m in methods}  # rejections, completed, failures, contained
        for r in range(reps):
            rng = _rep_rng(design.seed, r)
            truth = generate_truth(design, rng, zero_edges=hypothesis.edges)
            if value != 0.0:
                truth = inject_alternative(truth, targets, value)
            x, y = sample_data(truth, design.n, design.x_corr, rng)
            for m in methods:
                try:
                    if m == "dp":
                        cfg = DpConfig(dp.m, _rep_seed(dp.seed, r), dp.parallelism, dp.warm_start)
                        rep = dp_test(x, y, hypothesis, cfg, tuning)
                        counts[m][3] += rep.n_contained
                    elif m == "lr":
                        rep = lr_test(x, y, hypothesis, tuning)
                    else:
                        rep = lr_test(x, y, hypothesis, supergraph=truth.supergraph())
                except PeelDagError as exc:
                    log.info("rep %d, method %s, value %g failed: %s", r, m, value, exc)
                    counts[m][2] += 1
                    continue
                counts[m][0] += rep.pvalue <= alpha
                counts[m][1] += 1
        for m in methods:
            rej, done, fail, cont = counts[m]
            rows.append({
                "method": m,
                "level": level,
                "value": float(value),
                "reps": reps,
                "completed": done,
                "rejections": rej,
                "rate": rej / done if done else float("nan"),
                "failures": fail,
                "mean_contained": cont / done if (m == "dp" and done) else float("nan"),
            })
    return rows


def run_structure_experiment(design: SimDesign, reps: int = 10, tuning=None,
                             refit_tuning: Optional[dict] = None) -> List[Dict[str, object]]:
    """SHD of the refitted ``U`` against the truth, one row per replication."""
    from .peeling import learn_structure
    from .refit import refit_dag

    rows = []
    for r in range(reps):
        rng = _rep_rng(design.seed, r)
        truth = generate_truth(design, rng)
        x, y = sample_data(truth, design.n, design.x_corr, rng)
        row: Dict[str, object] = {"rep": r, "true_edges": int(np.count_nonzero(truth.dag.u))}
        try:
            s, _, _ = learn_structure(x, y, tuning)
            dag = refit_dag(x, y, s, **(refit_tuning or {}))
        except PeelDagError as exc:
            log.info("rep %d failed: %s", r, exc)
            row.update(shd=None, ancestral_superset=None, failed=True)
        else:
            row.update(shd=shd(dag.u, truth.dag.u),
                       ancestral_superset=truth.ancestral <= s.ancestral, failed=False)
        rows.append(row)
    return rows
