import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqrate.errors import ParameterError
from eqrate.kernels import (
    AffinityKernel,
    affinity_entropy,
    affinity_entropy_gradient,
    clone_groups,
    dissimilarity_factorized,
    dissimilarity_joint,
    kernel_to_csv,
    max_affinity_entropy,
    project_simplex,
    shannon_affinity_entropy,
    similarity_kernel,
)
from conftest import random_game


def co_profile_rows(game, player):
    u = np.moveaxis(game.utilities[player], player, 0)
    return u.reshape(game.num_actions(player), -1)


def mc_dissimilarity_joint(game, player, p, q, samples, seed):
    """Monte-Carlo oracle on the closed form's measure: co-profile weights
    drawn uniformly from the solid simplex (a zero-payoff slack outcome)."""
    rows = co_profile_rows(game, player)
    d = rows.shape[1]
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(d + 1), size=samples)[:, :d]
    r = w @ (rows[p] - rows[q])
    return float(np.mean(r * r))


def mc_dissimilarity_factorized(game, player, p, q, samples, seed):
    """Same oracle with independent per-co-player solid-simplex weights."""
    u = np.moveaxis(game.utilities[player], player, 0)
    diff = (u[p] - u[q]).ravel()
    co_sizes = [s for j, s in enumerate(game.shape) if j != player]
    rng = np.random.default_rng(seed)
    joint = np.ones((samples, 1))
    for s in co_sizes:
        w = rng.dirichlet(np.ones(s + 1), size=samples)[:, :s]
        joint = (joint[:, :, None] * w[:, None, :]).reshape(samples, -1)
    r = joint @ diff
    return float(np.mean(r * r))


class TestDissimilarity:
    def test_duplicated_rock_rows_are_clones(self, rps_dup_rock):
        D = dissimilarity_joint(rps_dup_rock, 0)
        assert D[0, 1] == 0.0
        assert np.allclose(np.diag(D), 0.0)
        assert np.allclose(D, D.T)

    def test_rps_rock_paper_closed_form(self, rps):
        # rows (0,-1,1) vs (1,0,-1), d=3: (1/20) * [6 + 0] = 0.3
        D = dissimilarity_joint(rps, 0)
        assert D[0, 1] == pytest.approx(0.3)

    def test_rps_rock_paper_matches_mc_oracle(self, rps):
        D = dissimilarity_joint(rps, 0)
        mc = mc_dissimilarity_joint(rps, 0, 0, 1, samples=2_000_000, seed=42)
        assert D[0, 1] == pytest.approx(mc, rel=5e-3)

    def test_factorized_reduces_to_joint_for_two_players(self, rps, chicken):
        for game in (rps, chicken):
            for player in range(2):
                assert np.allclose(
                    dissimilarity_factorized(game, player),
                    dissimilarity_joint(game, player),
                    atol=1e-12,
                )

    def test_factorized_identical_actions_zero(self, rps_dup_rock):
        D = dissimilarity_factorized(rps_dup_rock, 0)
        assert D[0, 1] == pytest.approx(0.0, abs=1e-15)

    def test_factorized_matches_mc_oracle_three_player(self):
        game = random_game((2, 2, 2), seed=13)
        D = dissimilarity_factorized(game, 0)
        mc = mc_dissimilarity_factorized(game, 0, 0, 1, samples=2_000_000, seed=7)
        assert D[0, 1] == pytest.approx(mc, rel=5e-3)

    def test_joint_matches_mc_oracle_three_player(self):
        game = random_game((2, 3, 2), seed=21)
        D = dissimilarity_joint(game, 1)
        mc = mc_dissimilarity_joint(game, 1, 0, 1, samples=2_000_000, seed=11)
        assert D[0, 1] == pytest.approx(mc, rel=5e-3)


class TestSimilarityKernel:
    def test_zero_dissimilarity_gives_all_ones(self):
        K = similarity_kernel(np.zeros((3, 3)), sigma=1.0)
        assert np.allclose(K, 1.0)

    def test_exact_substitution(self):
        sigma = 0.35
        D = np.array([[0.0, (2 * sigma) ** 2], [(2 * sigma) ** 2, 0.0]])
        K = similarity_kernel(D, sigma=sigma)
        assert K[0, 1] == pytest.approx(np.exp(-1.0))

    def test_variance_names_denominator(self):
        D = np.array([[0.0, 2e-6], [2e-6, 0.0]])
        K = similarity_kernel(D, variance=1e-6)
        assert K[0, 1] == pytest.approx(np.exp(-2.0))

    def test_clone_entry_is_one(self):
        D = np.array([[0.0, 0.0, 0.5], [0.0, 0.0, 0.5], [0.5, 0.5, 0.0]])
        K = similarity_kernel(D, variance=1e-6)
        assert K[0, 1] == 1.0

    def test_invalid_sigma(self):
        with pytest.raises(ParameterError):
            similarity_kernel(np.zeros((2, 2)), sigma=0.0)
        with pytest.raises(ParameterError):
            similarity_kernel(np.zeros((2, 2)))

    def test_monotone_in_dissimilarity(self):
        rng = np.random.default_rng(0)
        D = rng.uniform(0, 2, size=(5, 5))
        D = (D + D.T) / 2
        np.fill_diagonal(D, 0.0)
        K = similarity_kernel(D, sigma=0.7)
        order = np.argsort(D[0])
        assert np.all(np.diff(K[0][order]) <= 1e-15)


def block_kernel(sizes):
    n = sum(sizes)
    K = np.zeros((n, n))
    start = 0
    for s in sizes:
        K[start : start + s, start : start + s] = 1.0
        start += s
    return K


class TestAffinityEntropy:
    def test_identity_kernel_is_tsallis(self):
        kern = AffinityKernel.from_matrix(np.eye(3), p=1.0)
        assert affinity_entropy(kern, np.ones(3) / 3) == pytest.approx(2 / 3)
        assert affinity_entropy(kern, np.array([1.0, 0, 0])) == pytest.approx(0.0)

    def test_two_clone_groups_half_mass(self):
        kern = AffinityKernel.from_matrix(block_kernel([2, 2]), p=1.0)
        for split in ([0.25, 0.25, 0.3, 0.2], [0.5, 0.0, 0.1, 0.4]):
            assert affinity_entropy(kern, np.array(split)) == pytest.approx(0.5)

    def test_gradient_identity_kernel(self):
        kern = AffinityKernel.from_matrix(np.eye(3), p=1.0)
        g = affinity_entropy_gradient(kern, np.ones(3) / 3)
        assert np.allclose(g, -2 / 3)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        D = rng.uniform(0, 1, size=(5, 5))
        D = (D + D.T) / 2
        np.fill_diagonal(D, 0)
        kern = AffinityKernel.from_dissimilarity(D, p=0.7, variance=0.5)
        x = rng.dirichlet(np.ones(5))
        g = affinity_entropy_gradient(kern, x)
        h = 1e-6
        for j in range(5):
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            fd = (affinity_entropy(kern, xp) - affinity_entropy(kern, xm)) / (2 * h)
            assert abs(fd - g[j]) / max(1.0, abs(fd)) < 1e-5

    def test_all_ones_kernel_constant_gradient(self):
        kern = AffinityKernel.from_matrix(np.ones((4, 4)), p=1.0)
        rng = np.random.default_rng(2)
        for _ in range(5):
            x = rng.dirichlet(np.ones(4))
            g = affinity_entropy_gradient(kern, x)
            assert np.allclose(g, g[0])

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 10_000), st.floats(0.1, 1.0))
    def test_nonnegative_on_simplex(self, n, seed, p):
        rng = np.random.default_rng(seed)
        K = rng.uniform(0, 1, size=(n, n))
        K = (K + K.T) / 2
        np.fill_diagonal(K, 1.0)
        kern = AffinityKernel.from_matrix(K, p=p)
        x = rng.dirichlet(np.ones(n))
        assert affinity_entropy(kern, x) >= -1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 10_000), st.floats(0.0, 1.0))
    def test_concavity_spot_check(self, n, seed, lam):
        rng = np.random.default_rng(seed)
        K = rng.uniform(0, 1, size=(n, n))
        K = (K + K.T) / 2
        np.fill_diagonal(K, 1.0)
        kern = AffinityKernel.from_matrix(K, p=1.0)
        x = rng.dirichlet(np.ones(n))
        y = rng.dirichlet(np.ones(n))
        mixed = affinity_entropy(kern, lam * x + (1 - lam) * y)
        assert mixed >= lam * affinity_entropy(kern, x) + (1 - lam) * affinity_entropy(
            kern, y
        ) - 1e-10

    def test_maximizer_set_under_clones_has_equal_value(self):
        kern = AffinityKernel.from_matrix(block_kernel([3, 2]), p=1.0)
        a = np.array([0.5, 0.0, 0.0, 0.25, 0.25])
        b = np.array([0.2, 0.2, 0.1, 0.4, 0.1])
        assert affinity_entropy(kern, a) == pytest.approx(
            affinity_entropy(kern, b), abs=1e-10
        )


class TestShannonAffinity:
    def test_identity_kernel_recovers_shannon(self):
        x = np.array([0.5, 0.3, 0.2])
        expected = -np.sum(x * np.log(x))
        assert shannon_affinity_entropy(np.eye(3), x) == pytest.approx(expected)

    def test_agreement_with_small_p(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            n = 4
            K = rng.uniform(0.05, 1, size=(n, n))
            K = (K + K.T) / 2
            np.fill_diagonal(K, 1.0)
            x = rng.dirichlet(np.ones(n))
            kern = AffinityKernel.from_matrix(K, p=1e-4)
            assert shannon_affinity_entropy(K, x) == pytest.approx(
                affinity_entropy(kern, x), abs=1e-3
            )

    def test_clone_blocks_give_log_group_count(self):
        for sizes, masses in [([2, 1], [0.25, 0.25, 0.5]), ([3, 2], [1/6, 1/6, 1/6, 1/4, 1/4])]:
            K = block_kernel(sizes)
            val = shannon_affinity_entropy(K, np.array(masses))
            assert val == pytest.approx(np.log(len(sizes)), abs=1e-12)


class TestMaxAffinityEntropy:
    def test_identity_kernel_uniform(self):
        kern = AffinityKernel.from_matrix(np.eye(3), p=1.0)
        assert np.allclose(max_affinity_entropy(kern), 1 / 3, atol=1e-8)

    def test_duplicated_rock_group_masses(self, rps_dup_rock):
        D = dissimilarity_joint(rps_dup_rock, 0)
        kern = AffinityKernel.from_dissimilarity(D)
        t = max_affinity_entropy(kern)
        groups = clone_groups(D)
        assert groups == [[0, 1], [2], [3]]
        masses = [t[g].sum() for g in groups]
        assert np.allclose(masses, 1 / 3, atol=1e-4)

    @pytest.mark.parametrize("p", [0.5, 1.0])
    @pytest.mark.parametrize("sizes", [[2, 2], [3, 1], [2, 1, 1], [3, 2, 2, 1]])
    def test_clone_value_formula(self, sizes, p):
        kern = AffinityKernel.from_matrix(block_kernel(sizes), p=p)
        t = max_affinity_entropy(kern, tolerance=1e-10)
        C = len(sizes)
        start = 0
        for s in sizes:
            assert t[start : start + s].sum() == pytest.approx(1 / C, abs=1e-4)
            start += s
        assert affinity_entropy(kern, t) == pytest.approx(
            (1 - C ** -p) / p, abs=1e-4
        )


def test_project_simplex_basics():
    assert np.allclose(project_simplex(np.array([0.2, 0.3, 0.5])), [0.2, 0.3, 0.5])
    out = project_simplex(np.array([10.0, 0.0, -5.0]))
    assert out.sum() == pytest.approx(1.0)
    assert np.all(out >= 0)
    assert out[0] == pytest.approx(1.0)


def test_clone_groups_transitivity():
    D = np.array(
        [
            [0.0, 0.0, 0.3],
            [0.0, 0.0, 0.3],
            [0.3, 0.3, 0.0],
        ]
    )
    assert clone_groups(D) == [[0, 1], [2]]


def test_kernel_csv_round_trip(tmp_path):
    K = np.array([[1.0, 0.25], [0.25, 1.0]])
    path = tmp_path / "kernel.csv"
    kernel_to_csv(K, ["a", "b"], path)
    import csv

    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["", "a", "b"]
    assert float(rows[1][2]) == 0.25
