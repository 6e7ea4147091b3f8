import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbgrowth.degree_model import (
    DegreeDistribution,
    DegreeSequence,
    DistributionError,
    derived_constants,
    erdos_gallai_check,
    offspring_distribution,
    parse_distribution,
    realize_sequence,
    solve_two_point,
)


def exact_constants(mapping):
    """Rational a, b from a rational degree law."""
    b = sum(k * p for k, p in mapping.items())
    a = sum(k * (k - 1) * p for k, p in mapping.items()) / b
    return a, b


def brute_graphic(degrees):
    """Try every simple graph on len(degrees) vertices."""
    n = len(degrees)
    pairs = list(itertools.combinations(range(n), 2))
    for mask in range(1 << len(pairs)):
        deg = [0] * n
        for i, (u, v) in enumerate(pairs):
            if mask >> i & 1:
                deg[u] += 1
                deg[v] += 1
        if sorted(deg) == sorted(degrees):
            return True
    return False


class TestDistribution:
    def test_two_point_constants(self):
        d = DegreeDistribution.from_mapping({2: 2 / 3, 4: 1 / 3})
        a, b = derived_constants(d)
        ea, eb = exact_constants({2: Fraction(2, 3), 4: Fraction(1, 3)})
        assert (ea, eb) == (2, Fraction(8, 3))
        assert a == pytest.approx(2.0, abs=1e-14)
        assert b == pytest.approx(8 / 3, abs=1e-14)

    @pytest.mark.parametrize("d", [3, 4, 7])
    def test_regular(self, d):
        assert derived_constants(DegreeDistribution.regular(d)) == (d - 1, d)

    def test_all_degree_two_rejected(self):
        with pytest.raises(DistributionError):
            DegreeDistribution.regular(2)

    def test_degree_one_rejected(self):
        with pytest.raises(DistributionError):
            DegreeDistribution.from_mapping({1: 0.5, 4: 0.5})

    def test_normalisation_enforced(self):
        with pytest.raises(DistributionError):
            DegreeDistribution(2, 4, (0.5, 0.0, 0.4))
        DegreeDistribution(2, 4, (0.6, 0.0, 0.4))

    def test_parse_and_str_round_trip(self):
        d = parse_distribution("2:0.6667,4:0.3333")
        assert d.support_min == 2 and d.support_max == 4
        assert math.fsum(d.probs) == pytest.approx(1.0, abs=1e-15)
        assert parse_distribution(str(d)) == d

    def test_bad_literal(self):
        with pytest.raises(DistributionError):
            parse_distribution("2-0.5")


class TestOffspring:
    def test_two_point(self):
        law = offspring_distribution(DegreeDistribution.from_mapping({2: 2 / 3, 4: 1 / 3}))
        assert law.as_dict() == pytest.approx({1: 0.5, 2: 0.0, 3: 0.5})

    def test_regular(self):
        assert offspring_distribution(DegreeDistribution.regular(5)).as_dict() == {4: 1.0}

    def test_two_three(self):
        # size-biasing by hand: E P = 5/2
        law = offspring_distribution(DegreeDistribution.from_mapping({2: 0.5, 3: 0.5}))
        ref = {k - 1: float(Fraction(k) * Fraction(1, 2) / Fraction(5, 2)) for k in (2, 3)}
        assert law.as_dict() == pytest.approx(ref, abs=1e-15)

    def test_monte_carlo_mean(self, two_point):
        law = offspring_distribution(two_point)
        rng = np.random.default_rng(5)
        draws = rng.choice(law.values, size=200_000, p=law.prob_array)
        se = draws.std() / math.sqrt(len(draws))
        assert abs(draws.mean() - 2.0) < 4 * se

    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6))
    def test_mean_identity(self, weights):
        mapping = {2 + i: w for i, w in enumerate(weights)}
        try:
            d = DegreeDistribution.from_mapping(mapping, normalize=True)
        except DistributionError:
            return
        law = offspring_distribution(d)
        assert math.fsum(law.probs) == pytest.approx(1.0, abs=1e-12)
        assert law.mean() == pytest.approx(derived_constants(d)[0], abs=1e-12)


class TestSolveTwoPoint:
    def test_alpha_two(self):
        d = solve_two_point(2, 2.0)
        assert d.as_dict()[2] == pytest.approx(2 / 3, abs=1e-15)

    def test_near_endpoints(self):
        assert solve_two_point(2, 3 - 1e-9).as_dict()[2] < 1e-8
        assert solve_two_point(3, 5 - 1e-9).as_dict()[2] < 1e-8

    @pytest.mark.parametrize("alpha", [1.0, 3.0, 0.5, 7.0])
    def test_out_of_range(self, alpha):
        with pytest.raises(DistributionError):
            solve_two_point(2, alpha)

    @settings(max_examples=100)
    @given(st.integers(2, 8), st.floats(0.001, 0.999))
    def test_round_trip(self, r, frac):
        alpha = 1 + frac * (2 * r - 2)
        d = solve_two_point(r, alpha)
        assert set(d.as_dict()) <= {2, 2 * r}
        assert derived_constants(d)[0] == pytest.approx(alpha, abs=1e-10)


class TestRealize:
    def test_nine(self):
        seq = realize_sequence(DegreeDistribution.from_mapping({2: 2 / 3, 4: 1 / 3}), 9)
        assert seq.counts == {2: 6, 4: 3}
        assert seq.half_edge_count == 24

    def test_regular_even(self):
        assert realize_sequence(DegreeDistribution.regular(4), 10).counts == {4: 10}

    def test_regular_odd_obstruction(self):
        with pytest.raises(DistributionError):
            realize_sequence(DegreeDistribution.regular(3), 7)

    def test_too_small(self):
        with pytest.raises(DistributionError):
            realize_sequence(DegreeDistribution.regular(4), 4)

    def test_odd_sequence_rejected(self):
        with pytest.raises(DistributionError):
            DegreeSequence({3: 3})

    @settings(max_examples=100)
    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=5), st.integers(2, 4000))
    def test_deviation_bound(self, weights, n):
        mapping = {2 + i: w for i, w in enumerate(weights)}
        try:
            d = DegreeDistribution.from_mapping(mapping, normalize=True)
        except DistributionError:
            return
        if n < d.support_max + 1:
            return
        try:
            seq = realize_sequence(d, n)
        except DistributionError:
            # only the single odd-degree obstruction may fail
            assert d.support_min == d.support_max and d.support_min % 2 == 1
            return
        assert seq.n == n
        assert seq.half_edge_count % 2 == 0
        for k, p in zip(d.degrees, d.probs):
            assert abs(seq.counts.get(int(k), 0) / n - p) <= d.support_max / n + 1e-12
        assert set(seq.counts) <= set(int(k) for k in d.degrees)


class TestErdosGallai:
    @pytest.mark.parametrize("degrees,expected", [
        ((2, 2, 2), True),
        ((3, 3, 3, 3), True),
        ((4, 2, 2), False),
        ((1, 1), True),
        ((3, 1), False),
        ((), True),
    ])
    def test_examples(self, degrees, expected):
        assert erdos_gallai_check(list(degrees)) is expected

    def test_brute_force_small(self):
        rng = np.random.default_rng(0)
        for _ in range(150):
            n = int(rng.integers(1, 7))
            degrees = rng.integers(0, n, size=n).tolist()
            assert erdos_gallai_check(degrees) == brute_graphic(degrees), degrees

    def test_against_networkx(self):
        nx = pytest.importorskip("networkx")
        rng = np.random.default_rng(1)
        for _ in range(300):
            n = int(rng.integers(2, 40))
            degrees = rng.integers(0, n, size=n).tolist()
            assert erdos_gallai_check(degrees) == nx.is_graphical(degrees)

    def test_sequence_input(self):
        assert erdos_gallai_check(DegreeSequence({4: 10}))
