import io
import math

import numpy as np
import pytest

from airtnn.channel import (
    ChannelConfig,
    IDEAL_CHANNEL,
    air_shift,
    multi_shift,
    noise_sigma,
    read_realizations,
    sample_realization,
)
from airtnn.seeding import rng_from
from airtnn.topology import Graph, ShiftKind, lift_to_complex, sbm_generate, shift_operator

TRI = lift_to_complex(Graph(3, np.array([[0, 1], [0, 2], [1, 2]])))
TRI_LOWER = shift_operator(TRI, ShiftKind.LOWER_ADJACENCY)


def random_complex(seed=0):
    return lift_to_complex(sbm_generate(12, 3, 0.9, 0.1, rng_from(seed)))


class TestChannelConfig:
    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            ChannelConfig(fading_scale=0.0)

    def test_ideal_overrides_scale(self):
        ChannelConfig(fading_scale=-1.0, ideal=True)  # no error

    def test_rejects_unknown_reference(self):
        with pytest.raises(ValueError):
            ChannelConfig(snr_reference="other")


class TestNoiseSigma:
    def test_zero_db_unit_power(self):
        cfg = ChannelConfig(snr_db=0.0, snr_reference="unit")
        assert noise_sigma(cfg, np.ones((3, 1))) == pytest.approx(1.0)

    def test_twenty_db_unit_power(self):
        cfg = ChannelConfig(snr_db=20.0, snr_reference="unit")
        assert noise_sigma(cfg, np.ones((3, 1))) ** 2 == pytest.approx(0.01)

    def test_empirical_reference(self):
        # signal with empirical power 2 at 40 dB: sigma^2 = 2e-4
        cfg = ChannelConfig(snr_db=40.0)
        signal = np.full((5, 2), math.sqrt(2.0))
        assert noise_sigma(cfg, signal) ** 2 == pytest.approx(2e-4)

    def test_all_zero_falls_back_to_unit(self, caplog):
        cfg = ChannelConfig(snr_db=20.0)
        with caplog.at_level("WARNING"):
            sigma = noise_sigma(cfg, np.zeros((4, 1)))
        assert sigma == pytest.approx(0.1)
        assert any("all-zero" in r.message for r in caplog.records)

    def test_infinite_snr_is_noiseless(self):
        cfg = ChannelConfig(snr_db=math.inf)
        assert noise_sigma(cfg, np.ones((3, 1))) == 0.0

    def test_empty_signal_rejected(self):
        with pytest.raises(ValueError):
            noise_sigma(ChannelConfig(), np.zeros((0, 1)))


class TestSampleRealization:
    def test_ideal_gains_are_binary_support(self):
        r = sample_realization(TRI_LOWER.support, IDEAL_CHANNEL, 0.0, 2,
                               rng_from(0), n_cells=3)
        assert np.array_equal(r.gains, TRI_LOWER.matrix)
        assert not np.any(r.noise)

    def test_gains_zero_off_support_and_nonnegative(self):
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        op = shift_operator(random_complex(), ShiftKind.LOWER_ADJACENCY)
        r = sample_realization(op.support, cfg, 0.1, 3, rng_from(1),
                               n_cells=op.n_cells)
        mask = np.zeros_like(op.matrix, dtype=bool)
        mask[op.support[:, 0], op.support[:, 1]] = True
        assert not np.any(r.gains[~mask])
        assert np.all(r.gains[mask] > 0)

    def test_no_reciprocity(self):
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        r = sample_realization(TRI_LOWER.support, cfg, 0.0, 1, rng_from(2), n_cells=3)
        assert r.gains[0, 1] != r.gains[1, 0]

    def test_rayleigh_mean(self):
        # Moment oracle: Rayleigh(delta) has mean delta * sqrt(pi/2) and
        # variance (4 - pi)/2 * delta^2.
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        support = np.array([[0, 1]])
        n = 100_000
        r = sample_realization(support, cfg, 0.0, 1, rng_from(3), n_cells=2,
                               batch_shape=(n,))
        draws = r.gains[:, 0, 1]
        mean = 1.0 * math.sqrt(math.pi / 2)
        se = math.sqrt((4 - math.pi) / 2) / math.sqrt(n)
        assert abs(draws.mean() - mean) < 3 * se

    def test_noise_variance(self):
        # Chi-square moment oracle: sample variance of N(0, sigma^2) over n
        # draws has standard error sigma^2 * sqrt(2 / (n - 1)).
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        r = sample_realization(np.empty((0, 2)), cfg, 0.1, 4, rng_from(4), n_cells=100)
        n = r.noise.size
        se = 0.01 * math.sqrt(2.0 / (n - 1))
        assert abs(r.noise.var() - 0.01) < 3 * se

    def test_determinism(self):
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        a = sample_realization(TRI_LOWER.support, cfg, 0.1, 2, rng_from(5), n_cells=3)
        b = sample_realization(TRI_LOWER.support, cfg, 0.1, 2, rng_from(5), n_cells=3)
        assert np.array_equal(a.gains, b.gains)
        assert np.array_equal(a.noise, b.noise)


class TestAirShift:
    def test_ideal_adjacency_row_sum(self):
        x = np.array([[1.0], [0.0], [0.0]])
        r = sample_realization(TRI_LOWER.support, IDEAL_CHANNEL, 0.0, 1,
                               rng_from(0), n_cells=3)
        assert np.array_equal(air_shift(x, r), np.array([[0.0], [1.0], [1.0]]))

    def test_zero_signal_returns_noise(self):
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        r = sample_realization(TRI_LOWER.support, cfg, 0.3, 2, rng_from(6), n_cells=3)
        out = air_shift(np.zeros((3, 2)), r)
        assert np.array_equal(out, r.noise)

    def test_matches_per_cell_scalar_form(self):
        # Scalar oracle: output_i = sum_{j in N(i)} h_ij x_j + n_i.
        cc = random_complex(7)
        op = shift_operator(cc, ShiftKind.LOWER_ADJACENCY)
        cfg = ChannelConfig(fading_scale=1.5, snr_db=10.0)
        x = rng_from(8).standard_normal((cc.n_edges, 3))
        r = sample_realization(op.support, cfg, 0.2, 3, rng_from(9),
                               n_cells=cc.n_edges)
        out = air_shift(x, r)
        neighbors = {i: [] for i in range(cc.n_edges)}
        for i, j in op.support:
            neighbors[int(i)].append(int(j))
        for i in range(cc.n_edges):
            for f in range(3):
                expected = sum(r.gains[i, j] * x[j, f] for j in neighbors[i]) + r.noise[i, f]
                assert out[i, f] == pytest.approx(expected, rel=1e-10, abs=1e-12)

    def test_dimension_mismatch_rejected(self):
        r = sample_realization(TRI_LOWER.support, IDEAL_CHANNEL, 0.0, 1,
                               rng_from(0), n_cells=3)
        with pytest.raises(ValueError):
            air_shift(np.zeros((4, 1)), r)


class TestMultiShift:
    def test_order_zero(self):
        x = rng_from(10).standard_normal((3, 2))
        seq = multi_shift(x, TRI_LOWER.support, 0, IDEAL_CHANNEL)
        assert len(seq.shifts) == 1
        assert np.array_equal(seq.shifts[0], x)

    def test_ideal_collapses_to_matrix_powers(self):
        cc = random_complex(11)
        op = shift_operator(cc, ShiftKind.LOWER_ADJACENCY)
        x = rng_from(12).standard_normal((cc.n_edges, 2))
        seq = multi_shift(x, op.support, 2, IDEAL_CHANNEL, n_cells=cc.n_edges)
        a = op.matrix
        assert np.max(np.abs(seq.shifts[1] - a @ x)) <= 1e-12
        assert np.max(np.abs(seq.shifts[2] - a @ (a @ x))) <= 1e-12

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_recursion_matches_expansion(self, order):
        # Independent accumulation oracle for the closed-form expansion:
        # prod_rho S x + sum_i (prod_{rho > i} S) n_i + n_p.
        cc = random_complex(13)
        op = shift_operator(cc, ShiftKind.LOWER_ADJACENCY)
        cfg = ChannelConfig(fading_scale=1.0, snr_db=5.0)
        x = rng_from(14).standard_normal((cc.n_edges, 2))
        seq = multi_shift(x, op.support, order, cfg, rng_from(15), n_cells=cc.n_edges)
        reals = seq.realizations
        expected = x.copy()
        for r in reals:
            expected = r.gains @ expected
        for i in range(1, order):
            term = reals[i - 1].noise.copy()
            for r in reals[i:]:
                term = r.gains @ term
            expected = expected + term
        expected = expected + reals[-1].noise
        rel = np.max(np.abs(seq.shifts[order] - expected)) / np.max(np.abs(expected))
        assert rel <= 1e-10

    def test_fresh_realization_each_round(self):
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        seq = multi_shift(np.ones((3, 1)), TRI_LOWER.support, 3, cfg, rng_from(16))
        gains = [r.gains for r in seq.realizations]
        assert not np.array_equal(gains[0], gains[1])
        assert not np.array_equal(gains[1], gains[2])

    def test_deterministic(self):
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        x = rng_from(17).standard_normal((3, 2))
        a = multi_shift(x, TRI_LOWER.support, 3, cfg, rng_from(18))
        b = multi_shift(x, TRI_LOWER.support, 3, cfg, rng_from(18))
        for sa, sb in zip(a.shifts, b.shifts):
            assert np.array_equal(sa, sb)

    def test_mean_over_realizations_matches_rayleigh_mean(self):
        # E[air_shift(x)] = delta sqrt(pi/2) A x (noise is zero mean).
        cc = random_complex(19)
        op = shift_operator(cc, ShiftKind.LOWER_ADJACENCY)
        cfg = ChannelConfig(fading_scale=1.0, snr_db=20.0)
        x = rng_from(20).standard_normal((cc.n_edges, 1))
        n = 20_000
        xb = np.broadcast_to(x, (n,) + x.shape)
        seq = multi_shift(xb, op.support, 1, cfg, rng_from(21), n_cells=cc.n_edges)
        mean_out = seq.shifts[1].mean(axis=0)
        expected = math.sqrt(math.pi / 2) * (op.matrix @ x)
        scale = np.max(np.abs(expected))
        assert np.max(np.abs(mean_out - expected)) < 0.05 * scale

    def test_negative_order_rejected(self):
        with pytest.raises(ValueError):
            multi_shift(np.ones((3, 1)), TRI_LOWER.support, -1, IDEAL_CHANNEL)

    def test_batched_draws_are_independent_per_episode(self):
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        x = np.ones((2, 3, 1))
        seq = multi_shift(x, TRI_LOWER.support, 1, cfg, rng_from(22))
        r = seq.realizations[0]
        assert r.gains.shape == (2, 3, 3)
        assert not np.array_equal(r.gains[0], r.gains[1])


class TestTrace:
    def test_round_trip_bitwise(self):
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        x = rng_from(23).standard_normal((3, 2))
        buf = io.StringIO()
        seq = multi_shift(x, TRI_LOWER.support, 2, cfg, rng_from(24), trace=buf)
        buf.seek(0)
        reals = read_realizations(buf, 3, 2)
        assert len(reals) == 2
        for a, b in zip(reals, seq.realizations):
            assert np.array_equal(a.gains, b.gains)
            assert np.array_equal(a.noise, b.noise)

    def test_replay_matches_original(self):
        cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
        x = rng_from(25).standard_normal((3, 2))
        buf = io.StringIO()
        seq = multi_shift(x, TRI_LOWER.support, 2, cfg, rng_from(26), trace=buf)
        buf.seek(0)
        replayed = multi_shift(x, TRI_LOWER.support, 2, cfg,
                               realizations=read_realizations(buf, 3, 2))
        for sa, sb in zip(seq.shifts, replayed.shifts):
            assert np.array_equal(sa, sb)
