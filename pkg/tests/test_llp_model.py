import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrected_llp.errors import DomainError, InputError
from corrected_llp.llp_model import (
    Bag,
    BagPair,
    derive,
    gaussian_sampler,
    noise_identity_residual,
    pair_bags,
    pair_bags_blossom,
    pair_bags_bruteforce,
    sample_bag_pair,
    sample_via_flip,
    strip_labels,
)
from corrected_llp.matching import (
    brute_force_matching,
    matching_weight,
    max_weight_perfect_matching,
    perfect_matchings,
    squared_gap_matching,
)


def make_bags(gammas, size=10, seed=0):
    rng = np.random.default_rng(seed)
    return [Bag(rng.normal(size=(size, 2)), g) for g in gammas]


class TestBag:
    def test_labels_must_match_gamma(self):
        with pytest.raises(DomainError):
            Bag(np.zeros((4, 1)), 0.5, np.array([1, 1, 1, -1]))

    def test_exact_gamma_from_labels(self):
        b = Bag(np.zeros((3, 1)), 1 / 3, np.array([1, -1, -1]))
        assert b.exact_gamma() == Fraction(1, 3)

    def test_exact_gamma_snaps(self):
        assert Bag(np.zeros((10, 1)), 0.7).exact_gamma() == Fraction(7, 10)

    def test_gamma_range(self):
        with pytest.raises(DomainError):
            Bag(np.zeros((2, 1)), 1.5)

    def test_without_labels(self):
        b = Bag(np.zeros((2, 1)), 0.5, np.array([1, -1]), bag_id=3)
        s = b.without_labels()
        assert s.hidden_labels is None and s.bag_id == 3

    def test_pair_orientation_enforced(self):
        lo, hi = make_bags([0.2, 0.6])
        with pytest.raises(DomainError):
            BagPair(lo, hi)

    def test_pair_points(self):
        hi, lo = make_bags([0.6, 0.2], size=3)
        X, y = BagPair(hi, lo).points()
        assert X.shape == (6, 2)
        np.testing.assert_array_equal(y, [1, 1, 1, -1, -1, -1])


class TestDerive:
    def test_hand_case(self):
        d = derive((0.8, 0.2))
        assert d.pi == pytest.approx(0.5)
        assert d.rho.rho_plus == pytest.approx(0.2)
        assert d.rho.rho_minus == pytest.approx(0.2)
        assert d.alpha.alpha_plus == pytest.approx(1.0)
        assert d.alpha.alpha_minus == pytest.approx(1.0)

    def test_asymmetric(self):
        d = derive((0.9, 0.6))
        assert d.pi == pytest.approx(0.75)
        assert d.rho.rho_plus == pytest.approx(0.6 / 1.5)
        assert d.rho.rho_minus == pytest.approx(0.1 / 0.5)
        assert d.alpha.alpha_plus == pytest.approx(1 / 1.5)
        assert d.alpha.alpha_minus == pytest.approx(1 / 0.5)

    def test_clean_extreme(self):
        d = derive((1.0, 0.0))
        assert d.rho.rho_plus == 0.0 and d.rho.rho_minus == 0.0

    def test_rejects_non_increasing(self):
        for pair in [(0.3, 0.3), (0.2, 0.4), (1.2, 0.1)]:
            with pytest.raises(DomainError):
                derive(pair)

    def test_identity_random(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            gm, gp = np.sort(rng.uniform(0, 1, 2))
            if gp > gm:
                assert noise_identity_residual((gp, gm)) < 1e-12

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_valid_noise(self, u, v):
        gm, gp = min(u, v), max(u, v)
        if gp - gm < 1e-6:
            return
        d = derive((gp, gm))
        assert 0 <= d.rho.rho_plus < 1 and 0 <= d.rho.rho_minus < 1
        assert d.rho.rho_plus + d.rho.rho_minus < 1


class TestSampling:
    def test_constructions_agree(self):
        p_plus = gaussian_sampler([2.0, 0.0])
        p_minus = gaussian_sampler([-2.0, 0.0])
        n = 100_000
        sim = sample_bag_pair(p_plus, p_minus, (0.8, 0.2), n, n, seed=1)
        comp = np.concatenate([sim.pos_components, sim.neg_components])
        y_tilde = np.concatenate([np.ones(n), -np.ones(n)])
        flip = sample_via_flip(p_plus, p_minus, derive((0.8, 0.2)), 2 * n, seed=2)
        for ynoisy, components, size in [(y_tilde, comp, 2 * n), (flip.y_noisy, flip.y, 2 * n)]:
            p1 = np.mean(ynoisy == 1)
            assert abs(p1 - 0.5) < 3 * np.sqrt(0.25 / size)
            cond = np.mean(components[ynoisy == 1] == 1)
            m = np.count_nonzero(ynoisy == 1)
            assert abs(cond - 0.8) < 3 * np.sqrt(0.16 / m)

    def test_deterministic(self):
        p = gaussian_sampler([0.0])
        a = sample_bag_pair(p, p, (0.7, 0.1), 5, 5, seed=3)
        b = sample_bag_pair(p, p, (0.7, 0.1), 5, 5, seed=3)
        np.testing.assert_array_equal(a.pair.pos_bag.instances, b.pair.pos_bag.instances)


class TestMatching:
    def test_four_bag_example(self):
        pairing = pair_bags(make_bags([0.9, 0.1, 0.6, 0.4]))
        assert pairing.objective == pytest.approx(0.68, abs=1e-12)
        assert pairing.index_pairs == [(0, 1), (2, 3)]

    def test_two_bags(self):
        pairing = pair_bags(make_bags([0.3, 0.7]))
        assert pairing.index_pairs == [(1, 0)]

    def test_odd_count(self):
        with pytest.raises(InputError, match="even"):
            pair_bags(make_bags([0.1, 0.2, 0.3]))

    def test_unequal_sizes_policy(self):
        bags = make_bags([0.9, 0.1]) + make_bags([0.5, 0.5], size=4)
        with pytest.raises(InputError):
            pair_bags(bags)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            pairing = pair_bags(bags, sizes_policy="permissive")
        assert caught
        assert pairing.objective == pytest.approx(20 * 0.64)

    @pytest.mark.parametrize("n", [4, 6, 8, 10])
    def test_matches_brute_force(self, n):
        rng = np.random.default_rng(n)
        for _ in range(100):
            gammas = rng.integers(0, 11, n) / 10
            bags = make_bags(gammas, size=10)
            fast = pair_bags(bags)
            oracle = pair_bags_bruteforce(bags)
            assert fast.objective == pytest.approx(oracle.objective, abs=1e-12)
            assert fast.index_pairs == oracle.index_pairs

    def test_blossom_agrees(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            gammas = rng.integers(0, 17, 12) / 16
            bags = make_bags(gammas, size=16)
            assert pair_bags_blossom(bags).index_pairs == pair_bags(bags).index_pairs

    def test_weights_zero_for_zero_gap(self):
        pairing = pair_bags(make_bags([0.5, 0.5, 0.9, 0.1]))
        w = pairing.weights()
        assert len(pairing.dropped) == 1
        assert w[[p.zero_gap for p in pairing.pairs].index(True)] == 0.0
        assert w.sum() == pytest.approx(1.0)

    def test_strip_labels(self):
        bags = [Bag(np.zeros((2, 1)), 0.5, np.array([1, -1])), Bag(np.zeros((2, 1)), 1.0, np.array([1, 1]))]
        for p in strip_labels(pair_bags(bags).pairs):
            assert p.pos_bag.hidden_labels is None and p.neg_bag.hidden_labels is None


class TestMatchingSolvers:
    def test_count_of_matchings(self):
        assert sum(1 for _ in perfect_matchings(list(range(8)))) == 105

    def test_blossom_vs_brute_force_general_weights(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.choice([2, 4, 6, 8]))
            W = rng.integers(0, 5, (n, n))
            W = np.triu(W, 1) + np.triu(W, 1).T
            assert max_weight_perfect_matching(W) == brute_force_matching(W)

    @settings(max_examples=100)
    @given(st.lists(st.integers(0, 20), min_size=2, max_size=10).filter(lambda v: len(v) % 2 == 0))
    def test_squared_gap_matches_brute_force(self, values):
        W = [[(a - b) ** 2 for b in values] for a in values]
        got = squared_gap_matching(values)
        assert got == brute_force_matching(W)
        assert matching_weight(W, got) == matching_weight(W, brute_force_matching(W))

    def test_odd_rejected(self):
        with pytest.raises(DomainError):
            max_weight_perfect_matching([[0]])
