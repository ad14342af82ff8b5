import numpy as np
import pytest
from scipy.stats import chisquare

from eqrate.errors import DimensionError, IncompleteDataError, ParameterError
from eqrate.kernels import dissimilarity_joint
from eqrate.koth import (
    KOTHGame,
    PreferenceRecord,
    adversarial_prompt_sampler,
    build_koth,
    inject_clones,
    mean_king_payoff,
    prompt_average_win_matrix,
    read_preference_csv,
)


def rec(p, a, b, s):
    return PreferenceRecord(prompt_id=p, model_a=a, model_b=b, score=s)


@pytest.fixture
def small_koth():
    records = [
        rec("q1", "alpha", "beta", 1.0),
        rec("q1", "alpha", "gamma", 0.5),
        rec("q1", "beta", "gamma", 0.0),
        rec("q2", "alpha", "beta", -0.5),
        rec("q2", "alpha", "gamma", 1.0),
        rec("q2", "gamma", "beta", -1.0),
    ]
    return build_koth(records)


class TestBuild:
    def test_single_pair_definition(self):
        kg = build_koth([rec("q", "a", "b", 1.0)])
        u_p, u_k, u_r = kg.game.utilities
        ia, ib = kg.models.index("a"), kg.models.index("b")
        assert u_k[0, ia, ib] == 1.0
        assert u_k[0, ib, ia] == -1.0
        assert u_p[0, ia, ib] == 1.0 and u_p[0, ib, ia] == 1.0
        assert u_r[0, ia, ib] == -1.0
        assert u_r[0, ia, ia] == -1.0 and u_r[0, ib, ib] == -1.0
        assert u_k[0, ia, ia] == 0.0 and u_p[0, ia, ia] == 0.0

    def test_opposing_samples_average_to_zero(self):
        kg = build_koth([rec("q", "a", "b", 1.0), rec("q", "a", "b", -1.0)])
        assert kg.u_king[0].max() == 0.0
        assert kg.game.utilities[0][0].max() == 0.0

    def test_half_point_scale(self):
        kg = build_koth([rec("q", "a", "b", 0.5)])
        ia, ib = kg.models.index("a"), kg.models.index("b")
        assert kg.game.utilities[0][0, ia, ib] == 0.5
        assert kg.game.utilities[2][0, ia, ib] == -0.5

    def test_position_bias_symmetrization(self):
        kg = build_koth([rec("q", "a", "b", 1.0), rec("q", "b", "a", 0.0)])
        ia, ib = kg.models.index("a"), kg.models.index("b")
        # forward mean 1.0, reversed mean -0.0: cell is the average 0.5
        assert kg.u_king[0, ia, ib] == pytest.approx(0.5)
        assert kg.u_king[0, ib, ia] == pytest.approx(-0.5)

    def test_missing_cell_listed(self):
        records = [rec("q1", "a", "b", 1.0), rec("q2", "a", "c", 1.0)]
        with pytest.raises(IncompleteDataError) as exc:
            build_koth(records)
        assert ("q1", "a", "c") in exc.value.missing

    def test_invalid_score_rejected(self):
        with pytest.raises(ParameterError):
            rec("q", "a", "b", 0.3)

    def test_self_comparison_rejected(self):
        with pytest.raises(ParameterError):
            rec("q", "a", "a", 0.0)

    def test_invariants_on_built_game(self, small_koth):
        u_p, u_k, u_r = small_koth.game.utilities
        assert np.all(u_p >= 0)
        assert np.array_equal(u_p, np.abs(u_k))
        m = u_k.shape[1]
        off = ~np.eye(m, dtype=bool)
        assert np.allclose((u_r + u_k)[:, off], 0.0)
        diag = np.arange(m)
        assert np.all(u_r[:, diag, diag] == -1.0)
        assert np.allclose(u_k, -u_k.transpose(0, 2, 1))


class TestSampler:
    def test_mean_king_payoff(self, small_koth):
        ubar = mean_king_payoff(small_koth, "alpha")
        ia = small_koth.models.index("alpha")
        assert np.allclose(ubar, small_koth.u_king[:, ia, :].mean(axis=1))

    def test_lambda_zero_is_uniform(self, small_koth):
        draws = adversarial_prompt_sampler(small_koth, "alpha", lam=0.0, count=10_000, seed=1)
        counts = np.bincount(draws, minlength=2)
        assert chisquare(counts).pvalue > 0.01

    def test_lambda_large_is_argmin(self, small_koth):
        ubar = mean_king_payoff(small_koth, "alpha")
        worst = int(np.argmin(ubar))
        draws = adversarial_prompt_sampler(small_koth, "alpha", lam=1e6, count=200, seed=2)
        assert set(draws) == {worst}

    def test_default_lambda_is_ten(self, small_koth):
        import inspect

        sig = inspect.signature(adversarial_prompt_sampler)
        assert sig.parameters["lam"].default == 10.0

    def test_unknown_model(self, small_koth):
        with pytest.raises(ParameterError):
            adversarial_prompt_sampler(small_koth, "nope", count=1)


class TestInjectClones:
    def test_exact_clones_bit_identical(self, small_koth):
        out = inject_clones(small_koth, [1, 0], noise_halfwidth=0.0)
        assert len(out.prompts) == 4
        assert np.array_equal(out.u_king[3], small_koth.u_king[0])
        assert np.array_equal(out.u_king[2], small_koth.u_king[1])
        D = dissimilarity_joint(out.game, 0)
        assert D[0, 3] == 0.0 and D[1, 2] == 0.0
        assert out.clone_sources == (None, None, 1, 0)

    def test_original_rows_untouched(self, small_koth):
        out = inject_clones(small_koth, [0] * 250, noise_halfwidth=0.0)
        assert len(out.prompts) == len(small_koth.prompts) + 250
        assert np.array_equal(out.u_king[:2], small_koth.u_king)
        for player in range(3):
            assert np.array_equal(
                out.game.utilities[player][:2], small_koth.game.utilities[player]
            )

    def test_noise_bounded(self, small_koth):
        out = inject_clones(small_koth, [0, 1, 0], noise_halfwidth=0.01, seed=3)
        delta = out.u_king[2] - small_koth.u_king[0]
        assert np.abs(delta).max() <= 0.01
        assert np.abs(delta).max() > 0.0
        # structure invariants survive noise
        u_p, u_k, u_r = out.game.utilities
        assert np.array_equal(u_p, np.abs(u_k))
        m = u_k.shape[1]
        diag = np.arange(m)
        assert np.all(u_r[:, diag, diag] == -1.0)
        assert np.all(u_k[:, diag, diag] == 0.0)

    def test_labels_unique(self, small_koth):
        out = inject_clones(small_koth, [0, 0, 1])
        assert len(set(out.prompts)) == len(out.prompts)

    def test_noop_on_empty(self, small_koth):
        assert inject_clones(small_koth, []) is small_koth


class TestWinMatrix:
    def test_diagonal_and_complement(self, small_koth):
        w = prompt_average_win_matrix(small_koth)
        assert np.allclose(np.diag(w), 0.5)
        assert np.allclose(w + w.T, 1.0)

    def test_values(self):
        kg = build_koth([rec("q", "a", "b", 1.0)])
        w = prompt_average_win_matrix(kg)
        ia, ib = kg.models.index("a"), kg.models.index("b")
        assert w[ia, ib] == pytest.approx(1.0)
        assert w[ib, ia] == pytest.approx(0.0)


def test_preference_csv_round_trip(tmp_path):
    path = tmp_path / "prefs.csv"
    path.write_text(
        "prompt_id,model_a,model_b,score\n"
        "q1,alpha,beta,1\n"
        "q1,alpha,beta,-0.5\n",
        encoding="utf-8",
    )
    records = read_preference_csv(path)
    assert len(records) == 2
    assert records[1].score == -0.5
    with pytest.raises(ParameterError):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n", encoding="utf-8")
        read_preference_csv(bad)


def test_clone_sources_length_checked(small_koth):
    with pytest.raises(DimensionError):
        KOTHGame(game=small_koth.game, clone_sources=(None,))
