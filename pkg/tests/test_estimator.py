"""Estimator values, coin sources, replication runs, and the derived coin."""

from fractions import Fraction

import numpy as np
import pytest

import coinfactory as cf
from coinfactory import rowmeans
from coinfactory.errors import (
    CertificationError,
    DomainError,
    ReplayExhaustedError,
    TruncationCapError,
)

# independent high-precision reference, frozen from an mpmath evaluation of
# the telescoping sum with exact mixing weights
QUAD_PSI_5_2 = 0.26518071349617284


@pytest.fixture(scope="module")
def quad_config(quad_scheme):
    return cf.EstimatorConfig(quad_scheme, cf.TruncationLaw(lam=2.0, k=2))


@pytest.fixture(scope="module")
def lin_config(lin_scheme):
    return cf.EstimatorConfig(lin_scheme, cf.TruncationLaw(lam=2.0, k=1))


class TestPsiValue:
    def test_frozen_quad(self, quad_config):
        assert cf.psi_value(quad_config, 5, 2) == pytest.approx(
            QUAD_PSI_5_2, abs=1e-12
        )

    def test_affine_collapses_to_plugin(self, lin_config):
        # zero curvature: every increment cancels and psi = f(S/L)
        assert cf.psi_value(lin_config, 4, 3) == 0.25 + 0.5 * (3 / 4)
        assert cf.psi_value(lin_config, 1, 0) == 0.25

    def test_constant_target(self, const_scheme):
        config = cf.EstimatorConfig(const_scheme, cf.TruncationLaw(lam=2.0, k=1))
        for L, S in ((1, 0), (1, 1), (7, 3), (40, 40)):
            assert cf.psi_value(config, L, S) == pytest.approx(1 / 3, abs=1e-15)

    def test_domain_checks(self, quad_config):
        with pytest.raises(DomainError):
            cf.psi_value(quad_config, 1, 0)  # below start
        with pytest.raises(DomainError):
            cf.psi_value(quad_config, 4, 5)  # S > L
        with pytest.raises(DomainError):
            cf.psi_value(quad_config, 4, -1)

    def test_upper_variant_on_symmetric_scheme(self, lin_scheme):
        law = cf.TruncationLaw(lam=2.0, k=1)
        lo = cf.EstimatorConfig(lin_scheme, law, variant="lower")
        hi = cf.EstimatorConfig(lin_scheme, law, variant="upper")
        for L, S in ((3, 1), (6, 6), (9, 0)):
            assert cf.psi_value(lo, L, S) == cf.psi_value(hi, L, S)

    def test_generic_table_path_matches_fast_path(self, tmp_path, lin_scheme):
        # a table scheme has no mean family, so the estimator falls back to
        # explicit hypergeometric mixing; values must agree with the closed form
        path = tmp_path / "lin.tbl"
        cf.save_coefficient_table(lin_scheme, path, n_max=12)
        table = cf.load_coefficient_table(path)
        law = cf.TruncationLaw(lam=2.0, k=1, cap=12)
        slow = cf.EstimatorConfig(table, law)
        fast = cf.EstimatorConfig(lin_scheme, law)
        for L, S in ((1, 1), (5, 2), (12, 7)):
            assert cf.psi_value(slow, L, S) == pytest.approx(
                cf.psi_value(fast, L, S), abs=1e-12
            )


class TestConfigValidation:
    def test_start_below_certified_window(self, quad_scheme):
        with pytest.raises(DomainError, match="start"):
            cf.EstimatorConfig(quad_scheme, cf.TruncationLaw(lam=2.0, k=1))

    def test_upper_variant_needs_certificate(self, quad_scheme):
        with pytest.raises(CertificationError):
            cf.EstimatorConfig(
                quad_scheme, cf.TruncationLaw(lam=2.0, k=2), variant="upper"
            )

    def test_unknown_variant(self, lin_scheme):
        with pytest.raises(DomainError):
            cf.EstimatorConfig(lin_scheme, cf.TruncationLaw(lam=2.0, k=1), variant="mid")

    def test_table_must_cover_cap(self, tmp_path, lin_scheme):
        path = tmp_path / "lin.tbl"
        cf.save_coefficient_table(lin_scheme, path, n_max=8)
        table = cf.load_coefficient_table(path)
        with pytest.raises(DomainError, match="cap"):
            cf.EstimatorConfig(table, cf.TruncationLaw(lam=2.0, k=1, cap=100))

    def test_describe_round_trips_key_fields(self, quad_config):
        d = quad_config.describe()
        assert d["scheme_label"] == "quad"
        assert d["law_lam"] == 2.0 and d["law_k"] == 2
        assert d["variant"] == "lower"


class TestRowMeanKernels:
    def test_quad_rows_frozen(self):
        # E[(I/m)^2] at L=6, s=3, m=2: p=1/2, add (1-p)p*(L-m)/(m(L-1)) = 1/5
        # with f = x^2: 0.25 + 0.25*4/10 = 0.35
        out = rowmeans.quad_mean_rows(0.0, 0.0, 1.0, 6, 3, 2, 2)
        assert out.shape == (1,)
        assert out[0] == pytest.approx(0.35, abs=1e-15)

    def test_quad_rows_full_sample_is_plugin(self):
        out = rowmeans.quad_mean_rows(0.25, 0.0, 0.125, 9, 4, 9, 9)
        p = 4 / 9
        assert out[0] == pytest.approx(0.25 + 0.125 * p * p, abs=1e-15)

    def test_quad_single_coin(self):
        out = rowmeans.quad_mean_rows(0.25, 0.0, 0.125, 1, 1, 1, 1)
        assert out[0] == pytest.approx(0.375, abs=1e-15)

    def test_sin_rows_match_exact_mixing(self):
        exact_f = cf.preset("trig").evaluate_exact
        for L, s in ((12, 5), (20, 0), (17, 17), (25, 13)):
            got = rowmeans.sin_imag_rows(L, s, 11, L)
            for j, m in enumerate(range(11, L + 1)):
                want = cf.mixed_coefficient_exact(
                    lambda mm, i: exact_f(Fraction(i, mm)), L, m, s
                )
                # reconstruct the row mean from the imaginary part
                assert 0.5 + 0.25 * got[j] == pytest.approx(float(want), abs=5e-13)

    def test_sin_twins_agree(self):
        if not rowmeans.HAVE_NUMBA:
            pytest.skip("numba unavailable; only one implementation present")
        for L, s in ((15, 6), (40, 39), (33, 1)):
            a = np.empty(L - 11 + 1)
            b = np.empty(L - 11 + 1)
            rowmeans._sin_imag_numba(L, s, 11, L, a)
            rowmeans._sin_imag_numpy(L, s, 11, L, b)
            np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)

    def test_sin_rows_domain(self):
        with pytest.raises(DomainError):
            rowmeans.sin_imag_rows(10, 3, 0, 5)
        with pytest.raises(DomainError):
            rowmeans.sin_imag_rows(10, 3, 2, 11)
        with pytest.raises(DomainError):
            rowmeans.sin_imag_rows(10, 11, 2, 5)

    def test_affine_mean(self):
        assert rowmeans.affine_mean(0.25, 0.5, 8, 6) == 0.25 + 0.5 * 0.75


class TestCoinSources:
    def test_random_coins_bias_checked(self):
        gen = np.random.default_rng(0)
        with pytest.raises(DomainError):
            cf.RandomCoins(-0.1, gen)
        with pytest.raises(DomainError):
            cf.RandomCoins(1.5, gen)

    def test_random_coins_deterministic(self):
        a = cf.RandomCoins(0.4, np.random.default_rng(7)).take(50)
        b = cf.RandomCoins(0.4, np.random.default_rng(7)).take(50)
        np.testing.assert_array_equal(a, b)
        assert a.dtype == np.uint8
        assert set(np.unique(a)) <= {0, 1}

    def test_random_coins_consumption_counter(self):
        src = cf.RandomCoins(0.5, np.random.default_rng(1))
        assert src.consumed == 0
        src.take(10)
        src.take(3)
        assert src.consumed == 13

    def test_replay_from_text(self):
        src = cf.ReplayCoins.from_text("1101\n 0 01")
        np.testing.assert_array_equal(
            src.take(7), np.array([1, 1, 0, 1, 0, 0, 1], dtype=np.uint8)
        )
        assert src.remaining == 0

    def test_replay_rejects_junk(self):
        with pytest.raises(DomainError):
            cf.ReplayCoins.from_text("10x1")

    def test_replay_exhaustion(self):
        src = cf.ReplayCoins.from_text("101")
        src.take(2)
        with pytest.raises(ReplayExhaustedError):
            src.take(2)

    def test_replay_from_file(self, tmp_path):
        p = tmp_path / "coins.txt"
        p.write_text("111000111\n")
        src = cf.ReplayCoins.from_file(p)
        assert src.remaining == 9
        assert int(src.take(9).sum()) == 6


class TestDraw:
    def test_force_budget_consumes_no_uniform(self, quad_config):
        coins = cf.ReplayCoins.from_text("11010")
        out = cf.draw(quad_config, coins, force_L=5)
        assert (out.L, out.S) == (5, 3)
        assert out.coins_used == 5
        assert out.psi == pytest.approx(cf.psi_value(quad_config, 5, 3), abs=0)

    def test_force_budget_validated(self, quad_config):
        coins = cf.ReplayCoins.from_text("1" * 20)
        with pytest.raises(DomainError):
            cf.draw(quad_config, coins, force_L=1)
        with pytest.raises(DomainError):
            cf.draw(
                cf.EstimatorConfig(
                    quad_config.scheme, cf.TruncationLaw(lam=2.0, k=2, cap=10)
                ),
                coins,
                force_L=11,
            )

    def test_uniform_required_without_forced_budget(self, quad_config):
        with pytest.raises(DomainError):
            cf.draw(quad_config, cf.ReplayCoins.from_text("1111"))

    def test_uniform_drives_budget(self, quad_config):
        coins = cf.ReplayCoins.from_text("10" * 10)
        out = cf.draw(quad_config, coins, u=0.0)
        assert out.L == 2  # smallest budget at u = 0
        assert out.coins_used == 2

    def test_psi_depends_only_on_head_count(self, quad_config):
        a = cf.draw(quad_config, cf.ReplayCoins.from_text("11000"), force_L=5)
        b = cf.draw(quad_config, cf.ReplayCoins.from_text("00011"), force_L=5)
        assert a.S == b.S == 2
        assert a.psi == b.psi == pytest.approx(QUAD_PSI_5_2, abs=1e-12)


class TestFactoryCoin:
    def test_requires_two_sided_certificates(self, quad_config):
        coins = cf.ReplayCoins.from_text("1" * 50)
        with pytest.raises(CertificationError):
            cf.factory_coin(quad_config, coins, u=0.2, v=0.5)

    def test_flip_thresholds_psi(self, lin_config):
        # psi here is f(S/L); pick the replay so psi = 0.25 + 0.5*(2/3)
        psi = 0.25 + 0.5 * (2 / 3)
        for v, want in ((psi - 1e-6, 1), (psi + 1e-6, 0)):
            coins = cf.ReplayCoins.from_text("110")
            bit, out = cf.factory_coin(lin_config, coins, u=0.8, v=v)
            assert out.L == 3 and out.S == 2
            assert bit == want

    def test_flip_domain(self, lin_config):
        with pytest.raises(DomainError):
            cf.factory_coin(lin_config, cf.ReplayCoins.from_text("1"), u=0.0, v=1.0)


class TestRunReplicates:
    def test_deterministic_across_runs(self, quad_config):
        a, sa = cf.run_replicates(quad_config, x=0.3, reps=300, seed=11)
        b, sb = cf.run_replicates(quad_config, x=0.3, reps=300, seed=11)
        np.testing.assert_array_equal(a, b)
        assert sa == sb

    def test_seed_changes_stream(self, quad_config):
        a, _ = cf.run_replicates(quad_config, x=0.3, reps=200, seed=11)
        b, _ = cf.run_replicates(quad_config, x=0.3, reps=200, seed=12)
        assert not np.array_equal(a, b)

    def test_worker_count_invisible(self, quad_config):
        a, sa = cf.run_replicates(quad_config, x=0.55, reps=240, seed=5, workers=1)
        b, sb = cf.run_replicates(quad_config, x=0.55, reps=240, seed=5, workers=2)
        np.testing.assert_array_equal(a, b)
        assert sa == sb

    def test_record_fields(self, quad_config):
        recs, summary = cf.run_replicates(quad_config, x=0.5, reps=64, seed=3)
        assert recs.dtype.names == ("rep", "L", "S", "psi")
        assert list(recs["rep"]) == list(range(64))
        assert (recs["L"] >= 2).all()
        assert (recs["S"] <= recs["L"]).all()
        assert (recs["psi"] >= 0).all()
        assert summary["reps"] == 64
        assert summary["coins_total"] == int(recs["L"].sum())
        assert summary["cap_hits"] == 0
        assert summary["min_psi"] >= 0.0

    def test_summary_moments(self, lin_config):
        recs, summary = cf.run_replicates(lin_config, x=0.5, reps=4000, seed=21)
        assert summary["mean"] == pytest.approx(float(recs["psi"].mean()), abs=0)
        want_se = float(recs["psi"].std(ddof=1)) / np.sqrt(4000)
        assert summary["se"] == pytest.approx(want_se, rel=1e-12)
        assert abs(summary["mean"] - 0.5) <= 5 * summary["se"]

    def test_cap_counting(self, quad_scheme):
        # tiny cap: a fat slice of the mass sits beyond it
        law = cf.TruncationLaw(lam=1.5, k=2, cap=3)
        config = cf.EstimatorConfig(quad_scheme, law)
        recs, summary = cf.run_replicates(
            config, x=0.5, reps=500, seed=9, on_cap="count"
        )
        assert summary["cap_hits"] > 0
        capped = recs["L"] == -1
        assert capped.sum() == summary["cap_hits"]
        assert np.isnan(recs["psi"][capped]).all()
        assert summary["capped_reps"][:3] == [
            int(r) for r in recs["rep"][capped][:3]
        ]
        ok = ~capped
        assert np.isfinite(recs["psi"][ok]).all()

    def test_cap_raising(self, quad_scheme):
        law = cf.TruncationLaw(lam=1.5, k=2, cap=3)
        config = cf.EstimatorConfig(quad_scheme, law)
        with pytest.raises(TruncationCapError):
            cf.run_replicates(config, x=0.5, reps=500, seed=9, on_cap="raise")

    def test_arg_validation(self, quad_config):
        with pytest.raises(DomainError):
            cf.run_replicates(quad_config, x=1.5, reps=10, seed=0)
        with pytest.raises(DomainError):
            cf.run_replicates(quad_config, x=0.5, reps=0, seed=0)
        with pytest.raises(DomainError):
            cf.run_replicates(quad_config, x=0.5, reps=10, seed=0, on_cap="ignore")

    def test_boundary_biases(self, quad_config, lin_config):
        # degenerate coins: head count is pinned to 0 or L
        recs, _ = cf.run_replicates(quad_config, x=0.0, reps=50, seed=2)
        assert (recs["S"] == 0).all()
        for r in recs[:5]:
            assert r["psi"] == pytest.approx(
                cf.psi_value(quad_config, int(r["L"]), 0), abs=0
            )
        recs, _ = cf.run_replicates(quad_config, x=1.0, reps=50, seed=2)
        assert (recs["S"] == recs["L"]).all()
        # affine target: psi collapses to the endpoint values exactly
        recs, _ = cf.run_replicates(lin_config, x=0.0, reps=50, seed=2)
        assert np.all(recs["psi"] == 0.25)
        recs, _ = cf.run_replicates(lin_config, x=1.0, reps=50, seed=2)
        assert np.all(recs["psi"] == 0.75)


class TestRunFactory:
    def test_needs_certificates(self, quad_config):
        with pytest.raises(CertificationError):
            cf.run_factory(quad_config, x=0.3, flips=10, seed=0)

    def test_deterministic_and_unbiased_ish(self, lin_config):
        recs, summary = cf.run_factory(lin_config, x=0.3, flips=6000, seed=17)
        recs2, summary2 = cf.run_factory(lin_config, x=0.3, flips=6000, seed=17)
        np.testing.assert_array_equal(recs, recs2)
        assert summary == summary2
        assert set(np.unique(recs["bit"])) <= {0, 1}
        # f(0.3) = 0.4; binomial se at 6000 reps
        se = np.sqrt(0.4 * 0.6 / 6000)
        assert abs(summary["bit_mean"] - 0.4) <= 5 * se
        assert summary["bit_se"] == pytest.approx(
            np.sqrt(summary["bit_mean"] * (1 - summary["bit_mean"]) / 6000),
            rel=1e-9,
        )

    def test_bit_matches_psi_threshold(self, lin_config):
        recs, _ = cf.run_factory(lin_config, x=0.5, flips=100, seed=4)
        assert ((recs["psi"] >= 0) & (recs["psi"] <= 1)).all()
