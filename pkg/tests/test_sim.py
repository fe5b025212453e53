import math

import numpy as np
import pytest

import slp.sim as sim
from slp.constellation import QamSpec, draw_symbols
from slp.errors import ChannelError, InvalidInputError, SolverError
from slp.precoders import ChannelState, zf_precode
from slp.sep import analytic_sep_part, gain_constants, per_part_eps
from slp.constellation import PartClass
from slp.sim import (SimConfig, estimate_sep, gen_channel, parse_scheme, run_experiment,
                     scheme_name, summarize, transmit_receive)

SPEC = QamSpec(2)


def small_cfg(**kw):
    base = dict(n_antennas=3, n_users=2, block_len=4, eps_grid=(0.1, 0.05), n_channels=2,
                sep_trials=2000, seed=7)
    base.update(kw)
    return SimConfig(**base)


class TestConfig:
    def test_defaults(self):
        cfg = SimConfig()
        assert (cfg.n_antennas, cfg.n_users, cfg.block_len, cfg.qam_level) == (16, 16, 50, 2)
        assert cfg.eps_grid == (0.10, 0.05, 0.02, 0.01, 0.005)
        assert cfg.sep_trials == 200_000

    @pytest.mark.parametrize("kw, field", [
        ({"n_users": 5, "n_antennas": 4}, "n_users"),
        ({"block_len": 0}, "block_len"),
        ({"n_channels": 0}, "n_channels"),
        ({"eps_grid": (0.0, 0.1)}, "eps_grid"),
        ({"eps_grid": (1.0,)}, "eps_grid"),
        ({"eps_grid": ()}, "eps_grid"),
        ({"noise_var": -1.0}, "noise_var"),
        ({"schemes": ("Foo",)}, "schemes"),
        ({"schemes": ("SlpHeuristic(0.5)",)}, "schemes"),
        ({"schemes": ("ZF", "ZF")}, "schemes"),
        ({"seed": 1.5}, "seed"),
    ])
    def test_invalid(self, kw, field):
        with pytest.raises(InvalidInputError) as info:
            SimConfig(**kw)
        assert info.value.field == field

    def test_unattainable_message(self):
        with pytest.raises(InvalidInputError, match="unattainable SEP requirement"):
            SimConfig(eps_grid=(0.0,))

    def test_scheme_names(self):
        assert parse_scheme("SlpHeuristic(1.20)") == ("SlpHeuristic", 1.2)
        assert scheme_name("SlpHeuristic", 1.0) == "SlpHeuristic(1)"
        assert parse_scheme("ZF") == ("ZF", None)
        assert SimConfig(schemes=("SlpHeuristic( 1.0 )",)).schemes == ("SlpHeuristic(1)",)


class TestChannel:
    def test_deterministic(self):
        a, b = gen_channel(3, 4, 6), gen_channel(3, 4, 6)
        assert a.h_matrix.tobytes() == b.h_matrix.tobytes()
        assert not np.array_equal(a.h_matrix, gen_channel(4, 4, 6).h_matrix)

    def test_entry_statistics(self):
        n = 100_000
        H = np.concatenate([gen_channel(s, 10, 10).h_matrix.ravel() for s in range(n // 100)])
        # E|h|^2 = 1 with Var|h|^2 = 1 for CN(0,1)
        assert abs(np.mean(np.abs(H) ** 2) - 1) <= 3 / math.sqrt(n)
        # Re and Im each have variance 1/2 (Var of x^2 for N(0,1/2) is 1/2)
        for part in (H.real, H.imag):
            assert abs(np.mean(part ** 2) - 0.5) <= 3 * math.sqrt(0.5 / n)
        assert abs(np.mean(H.real * H.imag)) <= 3 * 0.5 / math.sqrt(n)

    def test_full_dimensions(self):
        ch = gen_channel(0, 16, 16)
        assert ch.h_matrix.shape == (16, 16)
        assert np.isfinite(ch.condition) and ch.condition >= 1

    def test_too_many_users(self):
        with pytest.raises(ChannelError):
            gen_channel(0, 5, 4)

    def test_resample_logged(self, monkeypatch, caplog):
        calls = []
        real = sim.ChannelState

        def flaky(h):
            calls.append(1)
            if len(calls) == 1:
                raise ChannelError("rank deficient")
            return real(h)

        monkeypatch.setattr(sim, "ChannelState", flaky)
        with caplog.at_level("WARNING", logger="slp.sim"):
            ch = gen_channel(10, 2, 2)
        assert len(calls) == 2
        assert "resampling" in caplog.text
        np.testing.assert_array_equal(ch.h_matrix, gen_channel(11, 2, 2).h_matrix)


class TestTransmitReceive:
    def test_noiseless(self, rng):
        ch = gen_channel(1, 3, 4)
        X = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
        np.testing.assert_array_equal(transmit_receive(ch, X, 0.0, 0), ch.h_matrix @ X)

    def test_noise_statistics(self):
        ch = gen_channel(1, 4, 4)
        n = 50_000
        Y = transmit_receive(ch, np.zeros((4, n)), math.sqrt(2.0), 9)
        C = Y @ Y.conj().T / n
        se = 2.0 / math.sqrt(n)
        np.testing.assert_allclose(np.diag(C).real, 2.0, atol=3 * se)
        off = C - np.diag(np.diag(C))
        assert np.abs(off).max() <= 4 * se
        assert abs(np.mean(Y.real ** 2) - 1.0) <= 3 * math.sqrt(2.0 / (4 * n))

    def test_deterministic(self):
        ch = gen_channel(1, 2, 2)
        a = transmit_receive(ch, np.ones((2, 3)), 1.0, 5)
        assert a.tobytes() == transmit_receive(ch, np.ones((2, 3)), 1.0, 5).tobytes()

    def test_shape_check(self):
        with pytest.raises(InvalidInputError):
            transmit_receive(gen_channel(1, 2, 3), np.ones((2, 1)), 1.0, 0)


class TestEstimateSep:
    def test_noiseless_is_error_free(self):
        ch = gen_channel(2, 3, 3)
        S = draw_symbols(SPEC, 1, 3 * 4).reshape(3, 4)
        X = np.stack([zf_precode(ch, 1.0, S[:, t]).x for t in range(4)], axis=1)
        est = estimate_sep(ch, X, S, 1.0, SPEC, 1e-12, 100, 0)
        np.testing.assert_array_equal(est.sep, 0)
        assert est.trials == 100

    def test_trial_count_rounds_up(self):
        ch = gen_channel(2, 2, 2)
        S = np.ones((2, 3), dtype=complex)
        X = ch.pseudo_inverse @ S
        assert estimate_sep(ch, X, S, 1.0, SPEC, 0.5, 10, 0).trials == 12

    def test_zf_interior_matches_analytic(self):
        """ZF at d = alpha with interior symbols: each axis errs with probability eps_bar."""
        eps = 0.05
        gc = gain_constants(1.0, eps)
        ch = gen_channel(4, 2, 2)
        S = np.array([[1 + 1j, -1 + 1j], [1 - 1j, -1 - 1j]])
        X = np.stack([zf_precode(ch, gc.alpha, S[:, t]).x for t in range(2)], axis=1)
        M = 1_000_000
        est = estimate_sep(ch, X, S, gc.alpha, SPEC, 1.0, M, 3)
        eb = analytic_sep_part(gc.alpha, 0.0, 1.0, PartClass.INTERIOR)
        assert eb == pytest.approx(per_part_eps(eps), rel=1e-9)
        p = 1 - (1 - eb) ** 2
        se = math.sqrt(p * (1 - p) / M)
        np.testing.assert_array_less(np.abs(est.sep - p), 3 * se)

    def test_chunking_invariant(self):
        ch = gen_channel(5, 2, 2)
        S = np.array([[1 + 1j, 3 - 1j, -3 + 3j], [1 + 3j, -1 - 1j, 1 + 1j]])
        X = ch.pseudo_inverse @ (1.5 * S)
        a = estimate_sep(ch, X, S, 1.5, SPEC, 1.0, 3000, 1)
        b = estimate_sep(ch, X, S, 1.5, SPEC, 1.0, 3000, 1, chunk_elems=10)
        # chunk sizes change the draw order, not the estimator's distribution
        assert a.trials == b.trials
        np.testing.assert_allclose(a.sep, b.sep, atol=6 * max(a.stderr.max(), 1e-3))

    def test_rejects_zero_draws(self):
        ch = gen_channel(2, 2, 2)
        with pytest.raises(InvalidInputError):
            estimate_sep(ch, np.zeros((2, 1)), np.ones((2, 1)), 1.0, SPEC, 1.0, 0, 0)


class TestRunExperiment:
    def test_zf_bookkeeping(self):
        cfg = small_cfg(schemes=("ZF",))
        res = run_experiment(cfg)
        assert len(res) == cfg.n_channels * len(cfg.eps_grid)
        for r in res:
            ch = gen_channel(sim._sub_seed(cfg.seed, 0, r.realization), 2, 3)
            S = draw_symbols(SPEC, sim._sub_seed(cfg.seed, 1, r.realization), 8).reshape(2, 4)
            alpha = gain_constants(1.0, r.eps).alpha
            e = [np.linalg.norm(ch.pseudo_inverse @ (alpha * S[:, t])) ** 2 for t in range(4)]
            assert r.avg_power == pytest.approx(np.mean(e), rel=1e-12)
            assert r.peak_energy == pytest.approx(np.max(e), rel=1e-12)

    def test_all_schemes_and_invariants(self):
        cfg = small_cfg()
        res = run_experiment(cfg)
        assert [r.scheme for r in res[:len(cfg.schemes)]] == list(cfg.schemes)
        assert len(res) == cfg.n_channels * len(cfg.eps_grid) * len(cfg.schemes)
        for r in res:
            assert not r.degraded
            assert r.peak_energy >= r.avg_power * (1 - 1e-12)
            assert np.all((r.empirical_sep >= 0) & (r.empirical_sep <= 1))
        by = {(r.realization, r.eps, r.scheme): r for r in res}
        for rl in range(cfg.n_channels):
            for eps in cfg.eps_grid:
                avg = by[rl, eps, "SlpBlockAvg"].avg_power
                h1 = by[rl, eps, "SlpHeuristic(1)"].avg_power
                zf = by[rl, eps, "ZF"].avg_power
                assert avg <= h1 * (1 + 1e-8) and h1 <= zf * (1 + 1e-12)
                assert by[rl, eps, "SlpBlockPeak"].peak_energy <= \
                    by[rl, eps, "SlpBlockAvg"].peak_energy * (1 + 1e-5)

    def test_deterministic_and_thread_invariant(self):
        cfg = small_cfg(schemes=("ZF", "SlpHeuristic(1)", "SlpBlockAvg"), n_channels=3)
        a = run_experiment(cfg)
        b = run_experiment(cfg, threads=2)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert (x.realization, x.eps, x.scheme) == (y.realization, y.eps, y.scheme)
            assert x.avg_power == y.avg_power and x.peak_energy == y.peak_energy
            np.testing.assert_array_equal(x.empirical_sep, y.empirical_sep)

    def test_degraded_cells_are_recorded(self, monkeypatch):
        real = sim._design

        def failing(cfg, ch, S, kind, zeta, eps):
            if kind == "SlpBlockPeak":
                raise SolverError("forced failure")
            return real(cfg, ch, S, kind, zeta, eps)

        monkeypatch.setattr(sim, "_design", failing)
        cfg = small_cfg(schemes=("ZF", "SlpBlockPeak"))
        res = run_experiment(cfg)
        bad = [r for r in res if r.degraded]
        assert len(bad) == cfg.n_channels * len(cfg.eps_grid)
        assert all(r.scheme == "SlpBlockPeak" and "forced" in r.message for r in bad)
        assert all(math.isnan(r.avg_power) for r in bad)
        rows = summarize(res, cfg)
        peak = [row for row in rows if row["scheme"] == "SlpBlockPeak"]
        assert all(row["n_degraded"] == cfg.n_channels and math.isnan(row["mean_avg_power"])
                   for row in peak)

    def test_progress_callback(self):
        seen = []
        run_experiment(small_cfg(schemes=("ZF",)), progress=lambda d, n: seen.append((d, n)))
        assert seen == [(1, 2), (2, 2)]

    def test_summary_means(self):
        cfg = small_cfg(schemes=("ZF", "SlpHeuristic(1.2)"))
        res = run_experiment(cfg)
        rows = summarize(res, cfg)
        assert [(r["scheme"], r["eps"]) for r in rows] == [
            (s, e) for s in cfg.schemes for e in cfg.eps_grid]
        for row in rows:
            cell = [r for r in res if r.scheme == row["scheme"] and r.eps == row["eps"]]
            assert row["mean_avg_power"] == pytest.approx(np.mean([r.avg_power for r in cell]))
            assert row["max_emp_sep"] == max(r.max_emp_sep for r in cell)
            assert row["n_trials"] == cfg.n_channels

    def test_rejects_bad_threads(self):
        with pytest.raises(InvalidInputError):
            run_experiment(small_cfg(), threads=0)
