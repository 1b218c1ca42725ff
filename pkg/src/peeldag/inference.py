"""Likelihood-ratio tests for directed edges and pathways.

Column indices into the combined data ``Z = (X, Y)`` put the ``q``
interventions first, so primary node ``k`` lives in column ``q + k``.

The data-perturbation (DP) test adds known Gaussian noise to ``Y``,
re-learns the super-graph and evaluates the statistic on the noise alone,
keeping only replicates whose structure contains the original estimate.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import (DegreesOfFreedomExhausted, DimensionMismatch, NoContainedReplicates,
                     NumericalError, PeelDagError)
from .graph import (Edge, HypothesisClassification, HypothesisMode, HypothesisSpec, SuperGraph,
                    classify_hypothesis, supergraph_contains)
from .kernels import nested_projection
from .peeling import ReducedFormEstimate, Tuning, fit_reduced_form, learn_structure, peel

log = logging.getLogger(__name__)

__all__ = [
    "DpConfig", "DpTestReport", "NodeTestSets", "asymptotic_pvalue", "dp_edge_test",
    "dp_pathway_test", "dp_pvalue", "dp_star_statistic", "holm_adjust", "likelihood_ratio_edges",
    "lr_test", "node_statistics", "node_test_sets", "perturb", "replicate_streams", "sigma_hat",
    "supergraph_contains",
]

DegreeMap = Mapping[int, Sequence[int]]

# residual sums of squares this small relative to |y|^2 are treated as an exact fit
ZERO_RSS_RTOL = 1e-20


@dataclass(frozen=True)
class NodeTestSets:
    """Columns of ``Z`` spanning the full (``a``) and constrained (``b``) fits of one node."""

    a: Tuple[int, ...]
    b: Tuple[int, ...]

    @property
    def extra(self) -> Tuple[int, ...]:
        bs = set(self.b)
        return tuple(c for c in self.a if c not in bs)


def node_test_sets(s: SuperGraph, j: int, d_j: Sequence[int] = ()) -> NodeTestSets:
    q = s.q
    d = {q + k for k in d_j}
    base = [q + k for k in s.ancestors_of(j)] + list(s.interventions_of(j))
    b = tuple(c for c in base if c not in d)
    a = b + tuple(sorted(d))
    return NodeTestSets(a, b)


@dataclass(frozen=True)
class DpConfig:
    m: int = 500
    seed: int = 0
    parallelism: int = 1
    warm_start: bool = True

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")


@dataclass(frozen=True)
class DpTestReport:
    """Outcome of an edge or pathway test.

    For pathway tests ``lr`` and ``edge_pvalues`` are indexed by hypothesis
    edge and ``lr_star`` has one column per edge.  Irregular edge tests also
    report one column per nondegenerate edge, combined by Holm's method.
    """

    mode: str
    method: str
    hypothesis: Tuple[Edge, ...]
    classification: HypothesisClassification
    lr: object
    lr_star: np.ndarray
    contained: np.ndarray
    pvalue: float
    n_contained: int
    asymptotic_pvalue: float
    sigma2_hat: np.ndarray
    supergraph: Optional[SuperGraph] = None
    edge_pvalues: Tuple[float, ...] = ()
    n_failed: int = 0
    reason: str = ""

    def rejects(self, alpha: float) -> bool:
        return self.pvalue <= alpha


def _zcols(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"x has {x.shape[0]} rows, y has {y.shape[0]}")
    return np.hstack([x, y])


def sigma_hat(y: np.ndarray, z: np.ndarray, s: SuperGraph) -> np.ndarray:
    """Residual variance of each node regressed on its ancestors and interventions.

    The denominator is ``n - |an(j)| - |in(j)|``.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    n, p = y.shape
    if p != s.p or z.shape[1] != s.p + s.q:
        raise DimensionMismatch("data and super-graph dimensions disagree")
    out = np.empty(p)
    for j in range(p):
        sets = node_test_sets(s, j)
        dof = n - len(sets.a)
        if dof <= 0:
            raise DegreesOfFreedomExhausted(
                f"node {j + 1}: {len(sets.a)} predictors leave no residual degrees of freedom")
        _, rss = nested_projection(z, (), sets.a, y[:, j])
        if rss <= ZERO_RSS_RTOL * float(y[:, j] @ y[:, j]):
            rss = 0.0
        out[j] = rss / dof
        if out[j] == 0.0:
            log.warning("node %d is fitted exactly; zero variance estimate", j + 1)
    return out


def _term(z: np.ndarray, sets: NodeTestSets, v: np.ndarray,
          sigma2: Optional[float] = None) -> float:
    """``v'(P_A - P_B)v / (2 sigma)``; ``sigma`` defaults to ``v'(I - P_A)v / (n - |A|)``."""
    extra = sets.extra
    if not extra:
        return 0.0
    num, rss_a = nested_projection(z, sets.b, extra, v)
    if sigma2 is None:
        dof = z.shape[0] - len(sets.a)
        if dof <= 0:
            raise DegreesOfFreedomExhausted(f"{len(sets.a)} columns leave no residual degrees of freedom")
        sigma2 = rss_a / dof
    if sigma2 <= 0.0:
        if num <= 0.0:
            return 0.0
        raise NumericalError("zero residual variance with a nonzero projection difference")
    return num / (2.0 * sigma2)


def node_statistics(y: np.ndarray, z: np.ndarray, s: SuperGraph,
                    cls: HypothesisClassification,
                    sigma2: Optional[np.ndarray] = None) -> Dict[int, float]:
    """Per-node contributions to the likelihood ratio, keyed by node."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    out = {}
    for j, d_j in cls.per_node_d.items():
        sets = node_test_sets(s, j, d_j)
        out[j] = _term(z, sets, y[:, j], None if sigma2 is None else float(sigma2[j]))
    return out


def likelihood_ratio_edges(y: np.ndarray, z: np.ndarray, s: SuperGraph,
                           cls: HypothesisClassification,
                           sigma2: Optional[np.ndarray] = None) -> float:
    """Likelihood ratio for the nondegenerate hypothesized edges of ``cls``.

    By default each node's variance is the residual variance of the full
    fit on ``A_j``, which keeps the numerator and denominator independent;
    pass ``sigma2`` to use fixed variances instead.
    """
    if not cls.is_regular:
        raise ValueError("likelihood ratio needs a regular hypothesis")
    return float(sum(node_statistics(y, z, s, cls, sigma2).values()))


def perturb(y: np.ndarray, sigma2: np.ndarray,
            rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    sd = np.sqrt(np.asarray(sigma2, dtype=float))
    if np.any(~np.isfinite(sd)):
        raise ValueError("variances must be finite and nonnegative")
    e = rng.standard_normal(y.shape) * sd[None, :]
    return y + e, e


def dp_star_statistic(e_star: np.ndarray, z_star: np.ndarray, s_star: SuperGraph,
                      cls_on_s: HypothesisClassification) -> float:
    """Perturbation statistic: sum over nodes with nondegenerate edges under the original ``S``.

    The node sets come from ``s_star``; a hypothesized edge ``(k, j)`` drops
    out of node ``j`` when ``s_star`` has ``j`` as an ancestor of ``k``.
    """
    return _star_from_map(np.asarray(e_star, dtype=float), np.asarray(z_star, dtype=float),
                          s_star, cls_on_s.per_node_d)


def _star_from_map(e_star: np.ndarray, z_star: np.ndarray, s_star: SuperGraph,
                   d_map: DegreeMap) -> float:
    total = 0.0
    for j, d_j in d_map.items():
        d_star = [k for k in d_j if (j, k) not in s_star.ancestral]
        sets = node_test_sets(s_star, j, d_star)
        total += _term(z_star, sets, e_star[:, j])
    return total


def _lr_from_map(y: np.ndarray, z: np.ndarray, s: SuperGraph, d_map: DegreeMap) -> float:
    return float(sum(_term(z, node_test_sets(s, j, d_j), y[:, j]) for j, d_j in d_map.items()))


def asymptotic_pvalue(lr: float, d_size: int, normal: bool = False) -> float:
    """Chi-square tail of ``2 lr`` on ``d_size`` degrees of freedom.

    ``normal=True`` uses the standardized normal limit, meant for large ``d_size``.
    """
    if d_size < 0:
        raise ValueError("d_size must be nonnegative")
    if d_size == 0:
        return 1.0
    if normal:
        return float(stats.norm.sf((2.0 * lr - d_size) / np.sqrt(2.0 * d_size)))
    return float(stats.chi2.sf(2.0 * lr, d_size))


def dp_pvalue(lr: float, lr_star: np.ndarray, contained: np.ndarray) -> float:
    """Share of contained replicates whose statistic reaches ``lr``."""
    lr_star = np.asarray(lr_star, dtype=float)
    contained = np.asarray(contained, dtype=bool)
    total = int(contained.sum())
    if total == 0:
        raise NoContainedReplicates("no perturbation replicate contains the estimated super-graph",
                                    {"replicates": int(contained.size)})
    return float(np.count_nonzero((lr_star >= lr) & contained) / total)


def holm_adjust(pvalues: Sequence[float]) -> np.ndarray:
    """Holm step-down adjusted p-values, returned in the input order."""
    p = np.asarray(pvalues, dtype=float)
    k = p.size
    order = np.argsort(p, kind="stable")
    adj = np.empty(k)
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (k - rank) * p[i]))
        adj[i] = running
    return adj


def replicate_streams(seed: int, m: int) -> List[np.random.Generator]:
    """Independent counter-based generators, one per replicate."""
    children = np.random.SeedSequence(seed).spawn(m)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


@dataclass
class _Context:
    x: np.ndarray
    y: np.ndarray
    s: SuperGraph
    est: Optional[ReducedFormEstimate]
    sigma2: np.ndarray
    maps: List[DegreeMap]
    gram: np.ndarray
    ancestral_rule: str
    oracle: bool


def _one_replicate(ctx: _Context, rng: np.random.Generator) -> Tuple[bool, np.ndarray, bool]:
    y_star, e_star = perturb(ctx.y, ctx.sigma2, rng)
    try:
        if ctx.oracle:
            s_star = ctx.s
        else:
            init = ctx.est.tilde_v if ctx.est.tilde_v is not None else None
            est_star, _ = fit_reduced_form(ctx.x, y_star, list(ctx.est.configs), init, ctx.gram)
            s_star, _ = peel(est_star, ancestral_rule=ctx.ancestral_rule)
        contained = supergraph_contains(s_star, ctx.s)
        z_star = np.hstack([ctx.x, y_star])
        stats_ = np.array([_star_from_map(e_star, z_star, s_star, d) for d in ctx.maps])
    except PeelDagError as exc:
        log.debug("replicate failed: %s", exc)
        return False, np.full(len(ctx.maps), np.nan), True
    return contained, stats_, False


def _run_replicates(ctx: _Context, dp: DpConfig) -> Tuple[np.ndarray, np.ndarray, int]:
    streams = replicate_streams(dp.seed, dp.m)
    if dp.parallelism > 1:
        with ThreadPoolExecutor(max_workers=dp.parallelism) as pool:
            results = list(pool.map(lambda g: _one_replicate(ctx, g), streams))
    else:
        results = [_one_replicate(ctx, g) for g in streams]
    contained = np.array([r[0] for r in results], dtype=bool)
    lr_star = np.vstack([r[1] for r in results])
    failed = sum(r[2] for r in results)
    return lr_star, contained, failed


def _prepare(x, y, tuning, supergraph, ancestral_rule):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    z = _zcols(x, y)
    gram = x.T @ x / x.shape[0]
    if supergraph is not None:
        if (supergraph.p, supergraph.q) != (y.shape[1], x.shape[1]):
            raise DimensionMismatch("supplied super-graph does not match the data dimensions")
        return x, y, z, gram, supergraph, None
    s, est, _ = learn_structure(x, y, tuning, gram=gram, ancestral_rule=ancestral_rule)
    return x, y, z, gram, s, est


def _single_edge_map(edge: Edge) -> Dict[int, Tuple[int, ...]]:
    return {edge[1]: (edge[0],)}


def _empty_report(mode, method, hyp, cls, s, sigma2, reason, k=1) -> DpTestReport:
    return DpTestReport(mode, method, hyp.edges, cls, 0.0, np.zeros((0, k)), np.zeros(0, dtype=bool),
                        1.0, 0, 1.0, sigma2, s, reason=reason)


def lr_test(x: np.ndarray, y: np.ndarray, hyp: HypothesisSpec, tuning: Tuning = None, *,
            supergraph: Optional[SuperGraph] = None, ancestral_rule: str = "all") -> DpTestReport:
    """Likelihood ratio with the chi-square p-value and no perturbation.

    With ``supergraph`` set to the true structure this is the oracle test.
    """
    x, y, z, _, s, _ = _prepare(x, y, tuning, supergraph, ancestral_rule)
    cls = classify_hypothesis(hyp, s)
    sigma2 = sigma_hat(y, z, s)
    method = "olr" if supergraph is not None else "lr"
    mode = hyp.mode.value
    if hyp.mode is HypothesisMode.PATHWAY:
        if len(cls.nondegenerate) < len(hyp.edges) or not cls.is_regular:
            return _empty_report(mode, method, hyp, cls, s, sigma2, _pathway_reason(cls, hyp))
        lrs = [_lr_from_map(y, z, s, _single_edge_map(e)) for e in hyp.edges]
        ps = tuple(asymptotic_pvalue(v, 1) for v in lrs)
        return DpTestReport(mode, method, hyp.edges, cls, tuple(lrs), np.zeros((0, len(lrs))),
                            np.zeros(0, dtype=bool), max(ps), 0, max(ps), sigma2, s, ps)
    if cls.is_degenerate:
        return _empty_report(mode, method, hyp, cls, s, sigma2, "degenerate")
    if not cls.is_regular:
        lrs = [_lr_from_map(y, z, s, _single_edge_map(e)) for e in cls.nondegenerate]
        ps = holm_adjust([asymptotic_pvalue(v, 1) for v in lrs])
        p = float(ps.min())
        return DpTestReport(mode, method, hyp.edges, cls, tuple(lrs), np.zeros((0, len(lrs))),
                            np.zeros(0, dtype=bool), p, 0, p, sigma2, s, tuple(ps.tolist()),
                            reason="irregular")
    lr = likelihood_ratio_edges(y, z, s, cls)
    p = asymptotic_pvalue(lr, len(cls.nondegenerate))
    return DpTestReport(mode, method, hyp.edges, cls, lr, np.zeros((0, 1)), np.zeros(0, dtype=bool),
                        p, 0, p, sigma2, s)


def _pathway_reason(cls: HypothesisClassification, hyp: HypothesisSpec) -> str:
    if len(cls.nondegenerate) < len(hyp.edges):
        return "degenerate edge in pathway"
    return "irregular"


def _context(x, y, s, est, sigma2, maps, gram, ancestral_rule, oracle) -> _Context:
    if not oracle and (est is None or not est.configs):
        raise ValueError("replicates need the original fit's tuning")
    return _Context(x, y, s, est, sigma2, maps, gram, ancestral_rule, oracle)


def dp_edge_test(x: np.ndarray, y: np.ndarray, hyp: HypothesisSpec, dp: DpConfig = DpConfig(),
                 tuning: Tuning = None, *, supergraph: Optional[SuperGraph] = None,
                 ancestral_rule: str = "all") -> DpTestReport:
    """Data-perturbation test of ``H0: U_kj = 0`` for all hypothesized edges.

    Degenerate hypotheses return p-value 1 without running replicates.
    Irregular hypotheses are split into single-edge tests over the
    nondegenerate edges and combined with Holm's method.  Replicates that
    fail numerically are counted in ``n_failed`` and treated as not
    contained.
    """
    x, y, z, gram, s, est = _prepare(x, y, tuning, supergraph, ancestral_rule)
    cls = classify_hypothesis(hyp, s)
    sigma2 = sigma_hat(y, z, s)
    method = "dp-oracle" if supergraph is not None else "dp"
    mode = HypothesisMode.EDGE.value
    if cls.is_degenerate:
        return _empty_report(mode, method, hyp, cls, s, sigma2, "degenerate")
    if cls.is_regular:
        maps: List[DegreeMap] = [cls.per_node_d]
    else:
        maps = [_single_edge_map(e) for e in cls.nondegenerate]
    lrs = [_lr_from_map(y, z, s, d) for d in maps]
    ctx = _context(x, y, s, est, sigma2, maps, gram, ancestral_rule, supergraph is not None)
    lr_star, contained, failed = _run_replicates(ctx, dp)
    _check_contained(contained, failed, dp)
    ps = [dp_pvalue(lrs[i], lr_star[:, i], contained) for i in range(len(maps))]
    if cls.is_regular:
        return DpTestReport(mode, method, hyp.edges, cls, lrs[0], lr_star[:, 0], contained, ps[0],
                            int(contained.sum()), asymptotic_pvalue(lrs[0], len(cls.nondegenerate)),
                            sigma2, s, n_failed=failed)
    adj = holm_adjust(ps)
    asym = holm_adjust([asymptotic_pvalue(v, 1) for v in lrs])
    return DpTestReport(mode, method, hyp.edges, cls, tuple(lrs), lr_star, contained,
                        float(adj.min()), int(contained.sum()), float(asym.min()), sigma2, s,
                        tuple(adj.tolist()), failed, "irregular")


def dp_pathway_test(x: np.ndarray, y: np.ndarray, hyp: HypothesisSpec, dp: DpConfig = DpConfig(),
                    tuning: Tuning = None, *, supergraph: Optional[SuperGraph] = None,
                    ancestral_rule: str = "all") -> DpTestReport:
    """Pathway test: every hypothesized edge must be present.

    The p-value is the largest of the single-edge DP p-values, all computed
    on one shared set of replicates.  A degenerate edge or an irregular
    hypothesis gives p-value 1.
    """
    x, y, z, gram, s, est = _prepare(x, y, tuning, supergraph, ancestral_rule)
    cls = classify_hypothesis(hyp, s)
    sigma2 = sigma_hat(y, z, s)
    method = "dp-oracle" if supergraph is not None else "dp"
    mode = HypothesisMode.PATHWAY.value
    if len(cls.nondegenerate) < len(hyp.edges) or not cls.is_regular:
        return _empty_report(mode, method, hyp, cls, s, sigma2, _pathway_reason(cls, hyp),
                             len(hyp.edges))
    maps = [_single_edge_map(e) for e in hyp.edges]
    lrs = [_lr_from_map(y, z, s, d) for d in maps]
    ctx = _context(x, y, s, est, sigma2, maps, gram, ancestral_rule, supergraph is not None)
    lr_star, contained, failed = _run_replicates(ctx, dp)
    _check_contained(contained, failed, dp)
    ps = tuple(dp_pvalue(lrs[i], lr_star[:, i], contained) for i in range(len(maps)))
    asym = max(asymptotic_pvalue(v, 1) for v in lrs)
    return DpTestReport(mode, method, hyp.edges, cls, tuple(lrs), lr_star, contained, max(ps),
                        int(contained.sum()), asym, sigma2, s, ps, failed)


def _check_contained(contained: np.ndarray, failed: int, dp: DpConfig) -> None:
    if not contained.any():
        raise NoContainedReplicates(
            f"none of {dp.m} perturbation replicates contains the estimated super-graph",
            {"replicates": dp.m, "failed": failed, "seed": dp.seed})
