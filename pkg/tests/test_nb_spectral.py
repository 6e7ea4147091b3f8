import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (
    complete_bipartite,
    complete_graph,
    cycle_graph,
    dense_nb_matrix,
    petersen_graph,
    random_min2_graph,
)
from nbgrowth.config_sampler import MultiGraph, sample_matching, sample_simple
from nbgrowth.degree_model import DegreeSequence, realize_sequence, solve_two_point
from nbgrowth.nb_spectral import (
    ConvergenceError,
    OperatorError,
    build_nb_operator,
    edge_vectors,
    growth_rate_estimate,
    ihara_bass_oracle,
    power_iterate,
    prop51_diagnostics,
    walk_counts,
)


def dense_perron(g):
    return float(max(abs(np.linalg.eigvals(dense_nb_matrix(g)))))


class TestOperator:
    def test_matches_entry_rule(self):
        rng = np.random.default_rng(0)
        graphs = [complete_graph(4), cycle_graph(5), complete_bipartite(2, 3),
                  MultiGraph.from_edges(3, [(0, 0), (0, 1), (1, 2), (2, 0), (1, 2)])]
        graphs += [random_min2_graph(rng, int(rng.integers(3, 9))) for _ in range(5)]
        for g in graphs:
            op = build_nb_operator(g)
            assert np.array_equal(op.to_dense(), dense_nb_matrix(g))
            assert np.array_equal(op.to_sparse().toarray(), dense_nb_matrix(g))

    def test_cycle_is_permutation(self):
        B = build_nb_operator(cycle_graph(5)).to_dense()
        assert np.all(B.sum(axis=0) == 1) and np.all(B.sum(axis=1) == 1)

    def test_k4_two_successors(self):
        op = build_nb_operator(complete_graph(4))
        assert all(len(op.successors(e)) == 2 for e in range(op.dim))

    def test_loop_successors(self):
        # vertex 0 carries a loop and two more edges, so degree 4
        g = MultiGraph.from_edges(3, [(0, 0), (0, 1), (0, 2), (1, 2)])
        op = build_nb_operator(g)
        loop = [h for h in g.half_edges(0) if g.vertex_of[g.partner[h]] == 0]
        assert len(loop) == 2
        for h in loop:
            succ = op.successors(h)
            assert len(succ) == 3 and int(g.partner[h]) not in succ

    def test_row_sums(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 500), 1)
        op = build_nb_operator(g)
        B = op.to_sparse()
        rows = np.asarray(B.sum(axis=1)).ravel()
        assert np.array_equal(rows, op.row_sums())
        assert np.array_equal(rows, g.degrees[op.head] - 1)

    def test_degree_one_rejected(self):
        with pytest.raises(OperatorError):
            build_nb_operator(MultiGraph.from_edges(3, [(0, 1), (1, 2)]))

    def test_adjoint_identity(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 400), 2)
        op = build_nb_operator(g)
        B = op.to_sparse()
        rng = np.random.default_rng(3)
        for k in (1, 2, 5):
            z1, z2 = rng.normal(size=op.dim), rng.normal(size=op.dim)
            lhs = z1 @ np.linalg.matrix_power(B.toarray(), k) @ z2
            bz2 = z2.copy()
            for _ in range(k):
                bz2 = op.matvec(bz2)
            assert z1 @ bz2 == pytest.approx(lhs, rel=1e-10)
            w = z1.copy()
            for _ in range(k):
                w = op.rmatvec(w)
            assert w @ z2 == pytest.approx(z1 @ bz2, rel=1e-10, abs=1e-10)
            # reversal symmetry: (B*)^k z = P B^k P z
            v = op.reverse(z1)
            for _ in range(k):
                v = op.matvec(v)
            np.testing.assert_allclose(op.reverse(v), w, rtol=1e-12, atol=1e-9)

    def test_rmatvec_is_transpose(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.5), 300), 5)
        op = build_nb_operator(g)
        B = op.to_sparse()
        y = np.random.default_rng(0).normal(size=op.dim)
        P = np.zeros((op.dim, op.dim))
        P[np.arange(op.dim), op.partner] = 1
        np.testing.assert_allclose(op.rmatvec(y), P @ B.toarray() @ P @ y, atol=1e-12)

    def test_edge_vectors(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 200), 8)
        op = build_nb_operator(g)
        ev = edge_vectors(op)
        assert np.all(ev.chi == 1)
        assert ev.psi_tilde.min() >= 1 and ev.psi_tilde.max() <= 3
        np.testing.assert_array_equal(ev.psi_tilde, op.rmatvec(ev.chi))


class TestPowerIteration:
    @pytest.mark.parametrize("graph,expected", [
        (complete_graph(4), 2.0),
        (cycle_graph(7), 1.0),
        (petersen_graph(), 2.0),
        (complete_graph(5), 3.0),
        (complete_bipartite(3, 3), 2.0),
    ])
    def test_exact_values(self, graph, expected):
        res = power_iterate(build_nb_operator(graph))
        assert res.lambda1 == pytest.approx(expected, abs=1e-9)
        assert res.residual < 1e-10

    def test_k23_against_dense(self):
        g = complete_bipartite(2, 3)
        assert dense_perron(g) == pytest.approx(math.sqrt(2), abs=1e-8)
        assert power_iterate(build_nb_operator(g)).lambda1 == pytest.approx(math.sqrt(2), abs=1e-8)

    def test_oracles_agree(self):
        rng = np.random.default_rng(11)
        for _ in range(15):
            g = random_min2_graph(rng, int(rng.integers(4, 9)))
            lam = power_iterate(build_nb_operator(g)).lambda1
            assert lam == pytest.approx(dense_perron(g), abs=1e-8)
            assert lam == pytest.approx(ihara_bass_oracle(g), abs=1e-8)

    def test_multigraph_against_dense(self):
        g = MultiGraph.from_edges(3, [(0, 0), (0, 1), (1, 2), (2, 0), (1, 2)])
        assert power_iterate(build_nb_operator(g)).lambda1 == pytest.approx(dense_perron(g), abs=1e-8)

    def test_seed_recorded_and_json(self):
        res = power_iterate(build_nb_operator(complete_graph(4)), seed=17)
        d = json.loads(res.to_json())
        assert set(d) == {"lambda1", "iterations", "residual", "n", "m", "seed"}
        assert d["seed"] == 17 and d["n"] == 4 and d["m"] == 6

    def test_nonconvergence_reports_estimate(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 2000), 1)
        with pytest.raises(ConvergenceError) as info:
            power_iterate(build_nb_operator(g), max_iter=3)
        assert info.value.iterations == 3
        assert 1.0 < info.value.estimate < 3.0

    def test_keep_vector_is_eigenvector(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 1000), 4)
        op = build_nb_operator(g)
        res = power_iterate(op, keep_vector=True)
        x = res.vector
        assert np.all(x >= 0)
        np.testing.assert_allclose(op.matvec(x), res.lambda1 * x, atol=1e-9 * np.abs(x).max())


class TestIharaBass:
    @pytest.mark.parametrize("graph,expected", [
        (complete_graph(4), 2.0), (cycle_graph(5), 1.0), (petersen_graph(), 2.0),
    ])
    def test_examples(self, graph, expected):
        assert ihara_bass_oracle(graph) == pytest.approx(expected, abs=1e-10)

    def test_disconnected_takes_max(self):
        edges = [(i, (i + 1) % 5) for i in range(5)] + [(5 + u, 5 + v) for u in range(4) for v in range(u + 1, 4)]
        assert ihara_bass_oracle(MultiGraph.from_edges(9, edges)) == pytest.approx(2.0, abs=1e-10)


class TestWalkCounts:
    def test_triangle(self):
        S, _ = walk_counts(build_nb_operator(cycle_graph(3)), 6)
        assert np.all(S == 1)

    def test_regular_tree_ball(self):
        g = sample_simple(DegreeSequence({4: 3000}), 1)
        S, T = walk_counts(build_nb_operator(g), 3)
        # these counts hold on any 4-regular graph
        for t in range(4):
            assert np.all(S[t] == 3 ** t)
            assert np.all(T[t] == 3 ** (t + 1))

    def test_matrix_power_agreement(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 150), 3)
        op = build_nb_operator(g)
        B = op.to_dense().astype(np.int64)
        S, T = walk_counts(op, 6)
        psi = edge_vectors(op).psi_tilde.astype(np.int64)
        P = np.eye(op.dim, dtype=np.int64)[op.partner]
        Bstar = P @ B @ P
        for t in range(7):
            Bt = np.linalg.matrix_power(B, t)
            np.testing.assert_array_equal(S[t], Bt @ np.ones(op.dim, dtype=np.int64))
            np.testing.assert_array_equal(T[t], np.linalg.matrix_power(Bstar, t) @ psi)

    def test_T_is_reversed_S_shift(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 400), 6)
        op = build_nb_operator(g)
        S, T = walk_counts(op, 5)
        for t in range(5):
            np.testing.assert_array_equal(T[t], S[t + 1][op.partner])

    def test_bfs_enumeration_on_mixed_tree_balls(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 5000), 2)
        op = build_nb_operator(g)
        S, T = walk_counts(op, 4)

        def walks_from(e, length):
            frontier = [e]
            for _ in range(length):
                frontier = [f for h in frontier for f in op.successors(h)]
            return len(frontier)

        for e in range(0, op.dim, op.dim // 50):
            for t in range(4):
                assert S[t][e] == walks_from(e, t)
                assert T[t][e] == walks_from(op.partner[e], t + 1)


class TestProp51:
    @pytest.mark.parametrize("d,ell", [(3, 2), (4, 3), (6, 1)])
    def test_regular_exact(self, d, ell):
        g = sample_matching(DegreeSequence({d: 200}), d)
        diag = prop51_diagnostics(build_nb_operator(g), ell)
        assert diag.ratio == pytest.approx((d - 1) ** ell, rel=1e-12)
        assert diag.cosine == pytest.approx(1.0, abs=1e-12)

    def test_ell_zero(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 300), 1)
        diag = prop51_diagnostics(build_nb_operator(g), 0)
        assert diag.ratio == pytest.approx(1.0) and diag.cosine == pytest.approx(1.0)

    def test_matches_dense(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 120), 4)
        op = build_nb_operator(g)
        B = op.to_dense()
        P = np.eye(op.dim)[op.partner]
        psi = edge_vectors(op).psi_tilde
        ell = 3
        v = np.linalg.matrix_power(P @ B @ P, ell) @ psi
        u = np.linalg.matrix_power(B, ell) @ v
        diag = prop51_diagnostics(op, ell)
        assert diag.ratio == pytest.approx(np.linalg.norm(u) / np.linalg.norm(v), rel=1e-10)
        assert diag.cosine == pytest.approx(abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v)), rel=1e-10)


class TestGrowthRate:
    def test_regular(self):
        g = sample_simple(DegreeSequence({4: 500}), 2)
        assert growth_rate_estimate(build_nb_operator(g), 20) == pytest.approx(3.0, abs=0.05)

    def test_cycle(self):
        assert growth_rate_estimate(build_nb_operator(cycle_graph(9)), 20) == pytest.approx(1.0, abs=1e-6)

    def test_sampled_matches_power_iteration(self):
        g = sample_simple(realize_sequence(solve_two_point(2, 2.0), 10_000), 7)
        op = build_nb_operator(g)
        assert abs(growth_rate_estimate(op, 30) - power_iterate(op).lambda1) <= 0.1

    def test_depth_precondition(self):
        with pytest.raises(ValueError):
            growth_rate_estimate(build_nb_operator(cycle_graph(4)), 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 9), st.integers(0, 10**6))
def test_power_iterate_matches_ihara_property(n, seed):
    g = random_min2_graph(np.random.default_rng(seed), n)
    assert power_iterate(build_nb_operator(g), seed=seed).lambda1 == pytest.approx(ihara_bass_oracle(g), abs=1e-8)
