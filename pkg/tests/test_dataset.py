import math

import numpy as np
import pytest

from airtnn import dataset as ds
from airtnn.errors import DatasetError, FormatError
from airtnn.seeding import rng_from
from airtnn.topology import Graph, edge_partition, lift_to_complex, sbm_generate

TREE = lift_to_complex(Graph(4, np.array([[0, 1], [0, 2], [2, 3]])))


def small_complex(seed=0):
    return lift_to_complex(sbm_generate(12, 3, 0.9, 0.1, rng_from(seed)))


def tiny_config(**overrides):
    defaults = dict(n_nodes=12, n_communities=3, p_intra=0.9, p_inter=0.1,
                    n_train=30, n_val=10, n_test=10, spikes_per_sample=2,
                    spike_variance=4.0, n_classes=4, seed=0)
    defaults.update(overrides)
    return ds.DatasetConfig(**defaults)


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(DatasetError):
            tiny_config(spikes_per_sample=0)
        with pytest.raises(DatasetError):
            tiny_config(spike_variance=0.0)
        with pytest.raises(DatasetError):
            tiny_config(max_diffusion=0)
        with pytest.raises(DatasetError):
            tiny_config(n_classes=7)


class TestBaseSignal:
    def test_tree_has_no_polygon_part(self):
        # N2 = 0, so the polygon term vanishes identically and x1 lives in
        # the column space of B1^T.
        x1 = ds.base_signal(TREE, rng_from(0))
        assert x1.shape == (3,)
        sol, *_ = np.linalg.lstsq(TREE.B1.T.astype(float), x1, rcond=None)
        assert np.allclose(TREE.B1.T @ sol, x1)

    def test_variance_matches_covariance_oracle(self):
        # Covariance propagation: Var[x1] = diag(B1^T B1 + B2 B2^T) / N1.
        cc = small_complex()
        n = 20_000
        rng = rng_from(1)
        draws = np.stack([ds.base_signal(cc, rng) for _ in range(n)])
        expected = np.diag(cc.B1.T @ cc.B1 + cc.B2 @ cc.B2.T) / cc.n_edges
        sample_var = draws.var(axis=0)
        # chi-square spread of a sample variance, with a multiple-comparison
        # margin over the edges
        rel_se = math.sqrt(2.0 / (n - 1))
        assert np.all(np.abs(sample_var - expected) < 5 * rel_se * expected)


class TestInjectSpikes:
    def test_single_spike_in_partition(self):
        cc = small_complex()
        part = edge_partition(cc)
        spikes = ds.inject_spikes(part, 1, 1, 4.0, rng_from(2))
        nz = np.flatnonzero(spikes)
        assert nz.size == 1
        assert part[nz[0]] == 1

    def test_full_partition_support(self):
        cc = small_complex()
        part = edge_partition(cc)
        size = int(np.sum(part == 0))
        spikes = ds.inject_spikes(part, 0, size, 4.0, rng_from(3))
        assert np.array_equal(np.flatnonzero(spikes), np.flatnonzero(part == 0))

    def test_support_always_inside_partition(self):
        cc = small_complex()
        part = edge_partition(cc)
        for seed in range(50):
            spikes = ds.inject_spikes(part, 2, 3, 4.0, rng_from(4, seed))
            assert np.all(part[np.flatnonzero(spikes)] == 2)

    def test_too_few_candidates_rejected(self):
        cc = small_complex()
        part = edge_partition(cc)
        with pytest.raises(DatasetError):
            ds.inject_spikes(part, 0, 10_000, 4.0, rng_from(5))

    def test_selection_frequency_uniform(self):
        # Hypergeometric oracle: each candidate edge is selected with
        # probability eta / |D_c|.
        cc = small_complex()
        part = edge_partition(cc)
        candidates = np.flatnonzero(part == 1)
        eta, n = 2, 10_000
        counts = np.zeros(part.shape[0])
        for i in range(n):
            counts += ds.inject_spikes(part, 1, eta, 4.0, rng_from(6, i)) != 0
        p = eta / candidates.size
        se = math.sqrt(p * (1 - p) / n)
        freqs = counts[candidates] / n
        assert np.all(np.abs(freqs - p) < 4 * se)


class TestDiffuse:
    def test_tau_zero_no_noise_is_identity(self):
        cc = small_complex()
        sbar = ds.normalized_shift(cc, "lower_adjacency")
        x = rng_from(7).standard_normal(cc.n_edges)
        out = ds.diffuse(x, 0, math.inf, sbar, rng_from(8))
        assert np.array_equal(out, x)

    def test_matches_unrolled_matvec_oracle(self):
        cc = small_complex()
        sbar = ds.normalized_shift(cc, "lower_adjacency")
        x = rng_from(9).standard_normal(cc.n_edges)
        out = ds.diffuse(x, 3, math.inf, sbar, rng_from(10))
        expected = sbar @ (sbar @ (sbar @ x))
        assert np.max(np.abs(out - expected)) <= 1e-12

    def test_normalized_shift_is_nonexpansive(self):
        cc = small_complex()
        sbar = ds.normalized_shift(cc, "lower_adjacency")
        rng = rng_from(11)
        for _ in range(10):
            v = rng.standard_normal(cc.n_edges)
            out = v
            for _ in range(5):
                out = sbar @ out
            assert np.linalg.norm(out) <= np.linalg.norm(v) * (1 + 1e-9)

    def test_noise_at_configured_snr(self):
        cc = small_complex()
        sbar = ds.normalized_shift(cc, "lower_adjacency")
        x = rng_from(12).standard_normal(cc.n_edges)
        clean = ds.diffuse(x, 2, math.inf, sbar, rng_from(13))
        noisy = np.stack([ds.diffuse(x, 2, 10.0, sbar, rng_from(14, i))
                          for i in range(400)])
        resid_power = np.mean((noisy - clean) ** 2)
        expected = np.mean(clean ** 2) * 0.1
        assert resid_power == pytest.approx(expected, rel=0.2)


class TestGenerate:
    def test_split_sizes(self):
        splits = ds.generate(tiny_config())
        assert len(splits["train"]) == 30
        assert len(splits["val"]) == 10
        assert len(splits["test"]) == 10

    def test_one_shared_complex(self):
        splits = ds.generate(tiny_config())
        assert splits["train"].complex is splits["test"].complex

    def test_labels_and_tau_ranges(self):
        cfg = tiny_config()
        splits = ds.generate(cfg)
        for split in splits.values():
            assert np.all((0 <= split.y) & (split.y < cfg.n_classes))
            assert np.all((1 <= split.tau) & (split.tau <= cfg.max_diffusion))

    def test_class_histogram_multinomial(self):
        cfg = tiny_config(n_train=10_000, n_val=1, n_test=1)
        splits = ds.generate(cfg)
        counts = np.bincount(splits["train"].y, minlength=cfg.n_classes)
        p = 1 / cfg.n_classes
        se = math.sqrt(p * (1 - p) * 10_000)
        assert np.all(np.abs(counts - 10_000 * p) < 4 * se)

    def test_bitwise_determinism(self):
        a = ds.generate(tiny_config())
        b = ds.generate(tiny_config())
        for split in ds.SPLITS:
            assert np.array_equal(a[split].x, b[split].x)
            assert np.array_equal(a[split].y, b[split].y)
            assert np.array_equal(a[split].tau, b[split].tau)

    def test_insufficient_class_candidates(self):
        with pytest.raises(DatasetError):
            ds.generate(tiny_config(spikes_per_sample=100))

    def test_ten_class_mode_never_uses_inter_class(self):
        cfg = tiny_config(n_classes=3)
        splits = ds.generate(cfg)
        assert np.all(splits["train"].y < 3)


class TestSaveLoad:
    def test_round_trip_bitwise(self, tmp_path):
        splits = ds.generate(tiny_config())
        path = tmp_path / "train.txt"
        ds.save_dataset(splits["train"], path)
        loaded = ds.load_dataset(path)
        assert np.array_equal(loaded.x, splits["train"].x)
        assert np.array_equal(loaded.y, splits["train"].y)
        assert np.array_equal(loaded.tau, splits["train"].tau)
        assert loaded.config == splits["train"].config
        assert np.array_equal(loaded.complex.B2, splits["train"].complex.B2)

    def test_truncated_file_is_parse_error(self, tmp_path):
        splits = ds.generate(tiny_config())
        path = tmp_path / "train.txt"
        ds.save_dataset(splits["train"], path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-3]))
        with pytest.raises(FormatError):
            ds.load_dataset(path)

    def test_version_mismatch_rejected(self, tmp_path):
        splits = ds.generate(tiny_config())
        path = tmp_path / "train.txt"
        ds.save_dataset(splits["train"], path)
        text = path.read_text().replace("airtnn-dataset v1", "airtnn-dataset v9", 1)
        path.write_text(text)
        with pytest.raises(FormatError, match="unsupported"):
            ds.load_dataset(path)

    def test_malformed_sample_line_reports_line(self, tmp_path):
        splits = ds.generate(tiny_config())
        path = tmp_path / "train.txt"
        ds.save_dataset(splits["train"], path)
        lines = path.read_text().splitlines()
        for i, line in enumerate(lines):
            if line.startswith("sample "):
                lines[i] = "sample garbage"
                break
        path.write_text("\n".join(lines))
        with pytest.raises(FormatError, match="line"):
            ds.load_dataset(path)
