"""Tests for the graph generators, the coupled construction, and the
instance file format."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from pcsemi.graph_model import (
    AdversarySpec,
    AssignmentState,
    Graph,
    bowtie,
    column_weights,
    conditional_assignment,
    dump_instance,
    gen_classical,
    gen_coupled,
    gen_null_grid,
    gen_null_lines,
    gen_semirandom,
    grid_rate,
    hypergeometric_sample,
    instance_from_json,
    instance_record,
    instance_to_json,
    line_rate,
)


def outside_pairs(n, clique):
    out = sorted(set(range(n)) - set(clique))
    return [(i, j) for a, i in enumerate(out) for j in out[a + 1 :]]


class TestGraphType:
    def test_symmetry_enforced(self):
        bad = np.zeros((3, 3), dtype=bool)
        bad[0, 1] = True
        with pytest.raises(ValueError):
            Graph(n=3, adj=bad)

    def test_zero_diagonal_enforced(self):
        bad = np.eye(3, dtype=bool)
        with pytest.raises(ValueError):
            Graph(n=3, adj=bad)

    def test_edges_roundtrip(self):
        g = Graph.from_edges(4, [(0, 2), (1, 3)])
        assert g.edges() == [(0, 2), (1, 3)]


class TestClassical:
    def test_complete_when_all_planted(self):
        inst = gen_classical(12, 12, 0)
        assert inst.graph.adj.sum() == 12 * 11

    def test_k30_edge_count(self):
        inst = gen_classical(30, 30, 3)
        assert len(inst.graph.edges()) == 435

    def test_single_edge_rate(self):
        """n=2, s=1: the only edge is a fair coin, 1e4 seeds, 3 sigma."""
        hits = sum(gen_classical(2, 1, seed).graph.edge(0, 1) for seed in range(10_000))
        se = math.sqrt(0.25 / 10_000)
        assert abs(hits / 10_000 - 0.5) < 3 * se

    def test_deterministic(self):
        a, b = gen_classical(15, 5, 77), gen_classical(15, 5, 77)
        assert np.array_equal(a.graph.adj, b.graph.adj)
        assert a.clique == b.clique and a.revealed == b.revealed

    def test_size_validation(self):
        with pytest.raises(ValueError):
            gen_classical(3, 4, 0)


class TestSemirandom:
    def test_empty_adversary_leaves_no_outside_edges(self):
        inst = gen_semirandom(10, 4, AdversarySpec.empty(), 3)
        assert all(not inst.graph.edge(i, j) for i, j in outside_pairs(10, inst.clique))

    def test_extra_cliques_are_disjoint(self):
        inst = gen_semirandom(60, 15, AdversarySpec.extra_cliques(2), 42)
        # three pairwise disjoint 15-cliques must exist: planted + 2 extra
        from pcsemi.recovery import maximal_cliques

        cs = maximal_cliques(inst.graph, min_size=15)
        big = [c for c in cs.cliques if len(c) >= 15]
        assert any(inst.clique <= c for c in big)
        disjoint: list = []
        for c in big:
            if all(not (c & d) for d in disjoint):
                disjoint.append(c)
        assert len(disjoint) >= 3

    def test_extra_cliques_capacity_check(self):
        with pytest.raises(ValueError):
            gen_semirandom(20, 8, AdversarySpec.extra_cliques(2), 0)

    def test_cross_edge_rate(self):
        """Clique-to-outside edges are fair coins: 1e4 seeds, 3 sigma."""
        hits = total = 0
        for seed in range(10_000):
            inst = gen_semirandom(6, 2, AdversarySpec.empty(), seed)
            out = sorted(set(range(6)) - inst.clique)
            for i in inst.clique:
                for j in out:
                    hits += inst.graph.edge(i, j)
                    total += 1
        se = math.sqrt(0.25 / total)
        assert abs(hits / total - 0.5) < 3 * se

    def test_custom_rule_applies_only_outside(self):
        inst = gen_semirandom(10, 4, AdversarySpec.custom(lambda i, j: True), 5)
        for i, j in outside_pairs(10, inst.clique):
            assert inst.graph.edge(i, j)

    def test_adversary_parse(self):
        assert AdversarySpec.parse("empty").kind == "empty"
        assert AdversarySpec.parse("random:0.3").p == 0.3
        assert AdversarySpec.parse("extra_cliques:2").t == 2
        with pytest.raises(ValueError):
            AdversarySpec.parse("weird:1")


class TestNullGrid:
    def test_rate_formula(self):
        _, cfg = gen_null_grid(6, 3, 0)
        assert cfg.q == pytest.approx(0.25)
        assert grid_rate(11) == pytest.approx(0.5 - 1 / 20)
        with pytest.raises(ValueError):
            gen_null_grid(4, 2, 0)

    def test_capacity(self):
        with pytest.raises(ValueError):
            gen_null_grid(7, 3, 0)  # m^2 - m = 6

    def test_row_column_structure(self):
        _, cfg = gen_null_grid(50, 11, 5)
        assert len(set(cfg.points)) == 50
        classes = {}
        for i, (a, b) in enumerate(cfg.points):
            classes.setdefault(("row", a), set()).add(i)
            classes.setdefault(("col", b), set()).add(i)
        members = list(classes.values())
        for x in range(len(members)):
            for y in range(x + 1, len(members)):
                assert len(members[x] & members[y]) <= 1
        for i in range(50):
            assert sum(i in c for c in members) == 2

    def test_forced_edges_present(self):
        g, cfg = gen_null_grid(30, 7, 2)
        for i in range(30):
            for j in range(i + 1, 30):
                if cfg.points[i][0] == cfg.points[j][0] or cfg.points[i][1] == cfg.points[j][1]:
                    assert g.edge(i, j)

    def test_off_design_rate(self):
        """Non-design pairs are Ber(q): aggregated over 1e4 seeds at
        (n=50, m=11), 3 sigma."""
        q = grid_rate(11)
        hits = total = 0
        iu = np.triu_indices(50, 1)
        for seed in range(10_000):
            g, cfg = gen_null_grid(50, 11, seed)
            a = np.array([p[0] for p in cfg.points])
            b = np.array([p[1] for p in cfg.points])
            design = (a[:, None] == a[None, :]) | (b[:, None] == b[None, :])
            free = ~design[iu]
            hits += int(g.adj[iu][free].sum())
            total += int(free.sum())
        se = math.sqrt(q * (1 - q) / total)
        assert abs(hits / total - q) < 3 * se


class TestNullLines:
    def test_rate_formula(self):
        _, cfg = gen_null_lines(20, 11, 2, 0)
        assert cfg.q == pytest.approx(0.45)
        assert line_rate(11, 3) == pytest.approx(0.5 - 2 / 18)

    def test_prime_required(self):
        with pytest.raises(ValueError):
            gen_null_lines(10, 12, 2, 0)

    def test_k_range(self):
        with pytest.raises(ValueError):
            gen_null_lines(10, 11, 1, 0)
        with pytest.raises(ValueError):
            gen_null_lines(10, 11, 6, 0)

    def test_capacity(self):
        with pytest.raises(ValueError):
            gen_null_lines(56, 11, 2, 0)  # m(m-1)/2 = 55

    def test_same_column_not_related(self):
        assert not bowtie((1, 4), (5, 4), 11, 3)
        assert bowtie((1, 4), (1, 7), 11, 3)  # slope 0
        assert bowtie((3, 1), (5, 2), 11, 3)  # slope 2: 3-5 = -2 = 2*(1-2)

    def test_line_cliques_meet_only_at_the_vertex(self):
        """Each vertex's k line cliques pairwise intersect in that vertex."""
        g, cfg = gen_null_lines(50, 11, 3, 9)
        m, k = cfg.m, cfg.k
        pts = cfg.points
        for v in range(50):
            av, bv = pts[v]
            cliques = []
            for r in range(k):
                members = {
                    u
                    for u, (a, b) in enumerate(pts)
                    if (a - av - r * (b - bv)) % m == 0
                }
                assert v in members
                cliques.append(members)
            assert len(cliques) == k
            for x in range(k):
                for y in range(x + 1, k):
                    assert cliques[x] & cliques[y] == {v}

    def test_forced_edges_match_relation(self):
        g, cfg = gen_null_lines(40, 11, 3, 4)
        for i in range(40):
            for j in range(i + 1, 40):
                if bowtie(cfg.points[i], cfg.points[j], 11, 3):
                    assert g.edge(i, j)


class TestCrossRateCalibration:
    def test_structure_cross_edge_rate_is_exactly_half(self):
        """q + (1-q) (k-1)/m = 1/2 as exact rationals; this is the degree
        calibration against the fair-coin cross edges."""
        for m in (5, 7, 11, 13):
            q = Fraction(1, 2) - Fraction(1, 2 * m - 2)
            assert q + (1 - q) * Fraction(1, m) == Fraction(1, 2)
            for k in range(2, m // 2 + 1):
                q = Fraction(1, 2) - Fraction(k - 1, 2 * (m - k + 1))
                assert q + (1 - q) * Fraction(k - 1, m) == Fraction(1, 2)


class TestCoupled:
    def test_structure(self):
        inst = gen_coupled(50, 11, 3, 0)
        cfg = inst.grid
        r, h = cfg.planted_line
        members = sorted(inst.clique)
        sub = inst.graph.adj[np.ix_(members, members)]
        assert (sub | np.eye(len(members), dtype=bool)).all()
        for v in members:
            a, b = cfg.points[v]
            assert (a - r * b) % 11 == h % 11
        for v in set(range(50)) - inst.clique:
            a, b = cfg.points[v]
            assert (a - r * b) % 11 != h % 11
        assert inst.revealed in inst.clique

    def test_outside_forced_edges(self):
        inst = gen_coupled(40, 11, 2, 8)
        cfg = inst.grid
        out = sorted(set(range(40)) - inst.clique)
        for x, i in enumerate(out):
            for j in out[x + 1 :]:
                if bowtie(cfg.points[i], cfg.points[j], 11, 2):
                    assert inst.graph.edge(i, j)

    def test_clique_size_distribution(self):
        """Mean of |S| over seeds tracks the hypergeometric mean n/m."""
        sizes = [len(gen_coupled(20, 7, 2, seed).clique) for seed in range(400)]
        mean = np.mean(sizes)
        # HG(20, 7, 49) conditioned on s >= 1; the s=0 mass is ~0.03 so the
        # conditioned mean sits slightly above n/m.
        assert abs(mean - 20 / 7) < 0.25
        assert min(sizes) >= 1

    def test_cross_edge_rate(self):
        """Clique-to-outside edges are fair coins: 3 sigma over 1e4 seeds."""
        hits = total = 0
        for seed in range(10_000):
            inst = gen_coupled(10, 5, 2, seed)
            members = sorted(inst.clique)
            out = sorted(set(range(10)) - inst.clique)
            block = inst.graph.adj[np.ix_(members, out)]
            hits += int(block.sum())
            total += block.size
        se = math.sqrt(0.25 / total)
        assert abs(hits / total - 0.5) < 3 * se

    def test_deterministic(self):
        a, b = gen_coupled(30, 11, 3, 123), gen_coupled(30, 11, 3, 123)
        assert np.array_equal(a.graph.adj, b.graph.adj)
        assert a.clique == b.clique and a.revealed == b.revealed
        assert a.grid == b.grid


def fresh_grid_state(m, s, rng=None):
    rng = rng or np.random.default_rng(0)
    bvals = rng.permutation(m)[:s]
    return AssignmentState(
        mode="grid",
        m=m,
        k=2,
        q=grid_rate(m),
        planted=(0, 0),
        clique_points=tuple((0, int(b)) for b in bvals),
    )


class TestConditionalAssignment:
    def test_zero_column_only_free_points(self):
        """With an all-zero column every point forcing an edge is
        incompatible; free points carry weight (1-q)^s."""
        state = fresh_grid_state(7, 3)
        cands, weights = column_weights(state, [0, 0, 0])
        q = state.q
        for p, w in zip(cands, weights):
            if state.perturb_mask(p):
                assert w == 0.0
            else:
                assert w == pytest.approx((1 - q) ** 3)
        rng = np.random.default_rng(5)
        for _ in range(50):
            p = conditional_assignment(state, [0, 0, 0], rng)
            assert state.perturb_mask(p) == 0

    def test_marginal_perturbation_rate_is_one_over_m(self):
        """Averaged over columns drawn from the null column law, the chance
        that the sampled point perturbs coordinate j is exactly 1/m.
        Enumerated over all candidate points and columns."""
        from pcsemi.analysis import column_law_grid
        from pcsemi.perturbed_bernoulli import pmf_vector

        m, s = 9, 3
        state = fresh_grid_state(m, s)
        law = column_law_grid(state)
        col_probs = pmf_vector(law.spec)
        for j in range(s):
            marginal = 0.0
            for cmask in range(1 << s):
                column = [(cmask >> jj) & 1 for jj in range(s)]
                cands, weights = column_weights(state, column)
                total = weights.sum()
                if total == 0.0:
                    continue
                perturbing = sum(
                    w
                    for p, w in zip(cands, weights)
                    if state.perturb_mask(p) >> j & 1
                )
                marginal += col_probs[cmask] * perturbing / total
            assert marginal == pytest.approx(1.0 / m, abs=1e-12)

    def test_weights_positive_in_fuzzed_configs(self):
        """Desk-scale configurations always leave a compatible point."""
        rng = np.random.default_rng(99)
        for _ in range(20_000):
            m = int(rng.choice([5, 7, 11]))
            mode = "grid" if rng.random() < 0.5 else "lines"
            k = 2 if mode == "grid" else int(rng.integers(2, m // 2 + 1))
            s = int(rng.integers(1, min(m, 5)))
            d = int(rng.integers(0, m))
            from pcsemi.analysis import random_prefix_state

            state = random_prefix_state(rng, mode, m, k, s, d)
            column = (rng.random(s) < 0.5).astype(int)
            _, weights = column_weights(state, column)
            assert weights.sum() > 0.0

    def test_uniform_fallback_on_impossible_column(self):
        """If the planted set saturates every candidate's slope lines, a
        zero-probability column falls back to a uniform draw."""
        m = 3
        state = fresh_grid_state(m, 3)  # s = m: every off-row point shares a column
        cands, weights = column_weights(state, [0, 0, 0])
        assert weights.sum() == 0.0
        rng = np.random.default_rng(1)
        seen = {conditional_assignment(state, [0, 0, 0], rng) for _ in range(200)}
        assert seen <= set(cands) and len(seen) > 1

    def test_no_candidates_raises(self):
        state = fresh_grid_state(3, 2)
        for p in state.unused_candidates():
            state = state.with_point(p)
        with pytest.raises(ValueError):
            conditional_assignment(state, [0, 0], np.random.default_rng(0))


class TestHypergeometricSample:
    def test_all_marked(self):
        rng = np.random.default_rng(0)
        assert hypergeometric_sample(4, 9, 9, rng) == 4

    def test_no_draws(self):
        rng = np.random.default_rng(0)
        assert hypergeometric_sample(0, 3, 9, rng) == 0

    def test_mean(self):
        rng = np.random.default_rng(42)
        n = 100_000
        total = sum(hypergeometric_sample(5, 3, 9, rng) for _ in range(n))
        mean = total / n
        var = 5 * (3 / 9) * (6 / 9) * (4 / 8)
        assert abs(mean - 5 * 3 / 9) < 3 * math.sqrt(var / n)

    def test_validation(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            hypergeometric_sample(10, 3, 9, rng)
        with pytest.raises(ValueError):
            hypergeometric_sample(3, 10, 9, rng)


class TestInstanceFile:
    def test_planted_roundtrip(self):
        inst = gen_semirandom(20, 6, AdversarySpec.random(0.3), 11)
        record = instance_to_json(inst)
        assert record["s"] == 6 and record["clique"] == sorted(inst.clique)
        assert all(i < j for i, j in record["edges"])
        loaded = instance_from_json(json.loads(dump_instance(record)))
        assert np.array_equal(loaded.graph.adj, inst.graph.adj)
        assert loaded.clique == inst.clique and loaded.revealed == inst.revealed

    def test_null_instance_has_no_clique(self):
        g, cfg = gen_null_lines(20, 11, 2, 0)
        record = instance_record(g, "null-lines", {"n": 20, "m": 11, "k": 2}, 0, grid=cfg)
        assert record["s"] == 0 and record["v"] is None and record["clique"] == []
        loaded = instance_from_json(record)
        assert loaded.grid.mode == "lines"
        assert loaded.grid.points == cfg.points
        assert loaded.grid.planted_line is None

    def test_coupled_grid_roundtrip(self):
        inst = gen_coupled(30, 11, 3, 5)
        loaded = instance_from_json(instance_to_json(inst))
        assert loaded.grid.planted_line == inst.grid.planted_line
        assert loaded.grid.q == pytest.approx(inst.grid.q)

    def test_dump_is_deterministic(self):
        inst = gen_coupled(25, 11, 2, 1)
        assert dump_instance(instance_to_json(inst)) == dump_instance(
            instance_to_json(gen_coupled(25, 11, 2, 1))
        )
