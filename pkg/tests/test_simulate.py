import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peeldag.errors import DimensionMismatch
from peeldag.graph import DirectedGraph, HypothesisMode, HypothesisSpec, edges_from_matrix, has_cycle
from peeldag.inference import DpConfig
from peeldag.peeling import TuningGrid
from peeldag.simulate import (SimDesign, gen_u, gen_w, generate_truth, inject_alternative,
                              make_truth, run_experiment, run_structure_experiment, sample_data,
                              sample_x, shd)


def nonzero_one_based(m):
    return {(a + 1, b + 1) for a, b in zip(*np.nonzero(m))}


def test_hub_graph():
    u = gen_u("hub", 8, np.random.default_rng(0))
    assert nonzero_one_based(u) == {(1, 3), (1, 5), (2, 4), (2, 6)}
    with pytest.raises(ValueError):
        gen_u("hub", 2, np.random.default_rng(0))


def test_random_graph_small():
    for seed in range(20):
        u = gen_u("random", 2, np.random.default_rng(seed))
        assert nonzero_one_based(u) <= {(1, 2)}


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 10_000), st.sampled_from(["random", "hub"]))
def test_generated_graphs_are_acyclic(p, seed, kind):
    if kind == "hub" and p < 3:
        return
    u = gen_u(kind, p, np.random.default_rng(seed))
    assert not has_cycle(DirectedGraph(p, edges_from_matrix(u)))
    assert set(np.unique(u)) <= {0.0, 1.0}


def test_setup_a():
    w = gen_w("A", 2, 5)
    assert nonzero_one_based(w) == {(1, 1), (2, 2), (3, 1), (3, 2)}


def test_setup_b_follows_index_formulas():
    # A_jj = A_j,j+1 = B_jj = B_j,j+1 = 1 for j < p and A_pp = 1; B_pp stays zero
    w = gen_w("B", 2, 5)
    assert nonzero_one_based(w) == {(1, 1), (1, 2), (2, 2), (3, 1), (3, 2)}


def test_setup_c():
    w = gen_w("C", 3, 5)
    np.testing.assert_array_equal(w, np.vstack([np.eye(3), np.zeros((2, 3))]))


def test_dimension_constraints():
    with pytest.raises(DimensionMismatch):
        gen_w("A", 3, 5)
    with pytest.raises(DimensionMismatch):
        gen_w("C", 3, 2)
    with pytest.raises(DimensionMismatch):
        SimDesign(p=3, q=5, n=10)
    with pytest.raises(ValueError):
        SimDesign(p=2, q=5, n=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000), st.sampled_from(["A", "B", "C"]))
def test_reduced_form_identity(p, seed, setup):
    design = SimDesign(p=p, q=2 * p + 1, n=10, setup=setup, seed=seed)
    t = generate_truth(design, np.random.default_rng(seed))
    np.testing.assert_allclose(t.v @ (np.eye(p) - t.dag.u), t.dag.w, atol=1e-10)
    i_u = np.eye(p) - t.dag.u
    np.testing.assert_allclose(t.omega, i_u @ np.diag(1 / t.dag.sigma2) @ i_u.T)


def test_noise_variances():
    t = generate_truth(SimDesign(p=5, q=10, n=10), np.random.default_rng(0))
    np.testing.assert_allclose(t.dag.sigma2, [0.5, 0.625, 0.75, 0.875, 1.0])


def test_pure_noise_sample():
    t = make_truth(np.zeros((3, 3)), np.zeros((2, 3)), np.array([0.5, 1.0, 2.0]))
    _, y = sample_data(t, 10_000, 0.5, np.random.default_rng(1))
    np.testing.assert_allclose(y.var(axis=0), [0.5, 1.0, 2.0], rtol=0.1)


def test_sampled_reduced_form():
    t = make_truth(np.array([[0.0, 0.5], [0.0, 0.0]]), np.array([[1.0, 0.0]]), np.ones(2))
    np.testing.assert_allclose(t.v, [[1.0, 0.5]])
    x, y = sample_data(t, 10_000, 0.5, np.random.default_rng(2))
    coef = np.linalg.lstsq(x, y, rcond=None)[0]
    np.testing.assert_allclose(coef, t.v, atol=0.05)


def test_sampling_reproducible():
    t = generate_truth(SimDesign(p=4, q=8, n=10), np.random.default_rng(0))
    a = sample_data(t, 50, 0.5, np.random.default_rng(9))
    b = sample_data(t, 50, 0.5, np.random.default_rng(9))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_ar1_covariance():
    x = sample_x(20_000, 4, 0.5, np.random.default_rng(3))
    expected = 0.5 ** np.abs(np.subtract.outer(np.arange(4), np.arange(4)))
    np.testing.assert_allclose(np.cov(x, rowvar=False), expected, atol=0.05)


def test_shd():
    u = np.zeros((3, 3))
    u[0, 1] = u[1, 2] = 1.0
    assert shd(u, u) == 0
    full = u.copy()
    full[0, 2] = full[1, 0] = 1.0
    assert shd(np.zeros((3, 3)), full) == 4
    other = u.copy()
    other[1, 2] = 0.0
    other[0, 2] = 0.3
    assert shd(other, u) == 2
    with pytest.raises(DimensionMismatch):
        shd(np.zeros((2, 2)), u)


def test_inject_alternative():
    t = make_truth(np.zeros((3, 3)), np.eye(3), np.ones(3))
    alt = inject_alternative(t, [(0, 2)], 0.3)
    assert alt.dag.u[0, 2] == 0.3
    assert (0, 2) in alt.ancestral
    base = inject_alternative(t, [(0, 1)], 0.5)
    with pytest.raises(ValueError):
        inject_alternative(base, [(1, 0)], 0.5)


def test_zero_edges_enforced():
    design = SimDesign(p=5, q=10, n=10, seed=1)
    for seed in range(10):
        t = generate_truth(design, np.random.default_rng(seed), zero_edges=[(0, 4), (1, 3)])
        assert t.dag.u[0, 4] == 0 and t.dag.u[1, 3] == 0


def test_experiment_smoke():
    design = SimDesign(p=4, q=8, n=120, seed=3)
    hyp = HypothesisSpec(((0, 3),))
    rows = run_experiment(design, hyp, (0.0, 0.5), reps=1, dp=DpConfig(m=10),
                          tuning=TuningGrid(n_gamma=10, max_kappa=4))
    assert len(rows) == 6
    for row in rows:
        assert row["completed"] + row["failures"] == 1
        if row["completed"]:
            assert row["rate"] in (0.0, 1.0)
    with pytest.raises(ValueError):
        run_experiment(design, hyp, methods=("bogus",))
    with pytest.raises(DimensionMismatch):
        run_experiment(design, HypothesisSpec(((0, 7),)))


def test_pathway_experiment_smoke():
    design = SimDesign(p=4, q=8, n=120, seed=4)
    hyp = HypothesisSpec(((0, 2), (2, 3)), HypothesisMode.PATHWAY)
    rows = run_experiment(design, hyp, (0.0,), reps=2, methods=("olr",))
    assert rows[0]["completed"] == 2


def test_structure_experiment_smoke():
    design = SimDesign(p=4, q=8, n=200, setup="C", seed=5)
    rows = run_structure_experiment(design, reps=2, tuning=TuningGrid(n_gamma=10, max_kappa=4),
                                    refit_tuning={"n_gamma": 10})
    assert [r["rep"] for r in rows] == [0, 1]
    for r in rows:
        assert r["failed"] or r["shd"] >= 0
