"""Tests for synthetic generation, the QBRN/QEMB containers, and ingestion."""

import numpy as np
import pytest

from qbrn.data import (
    Dataset,
    SynthConfig,
    gen_synthetic,
    ingest_embeddings,
    mixing_matrix,
    planted_signal_zscore,
    read_dataset,
    read_embedding_file,
    read_voxel_csv,
    write_dataset,
    write_embedding_file,
)
from qbrn.errors import ConfigError, DataError, FormatError, InvariantError
from qbrn.model import logistic
from qbrn.numerics import Rng

SMALL = SynthConfig(
    voxels=16, embed_dim=8, latent_dim=4, regions=4, n_train=50, n_test=10, seed=3
)


class TestSynthConfig:
    def test_regions_must_divide_voxels(self):
        with pytest.raises(ConfigError):
            SynthConfig(voxels=128, regions=7).validate()

    def test_defaults_valid(self):
        SynthConfig().validate()

    def test_edge_bounds_checked(self):
        with pytest.raises(ConfigError):
            SynthConfig(voxels=16, regions=4, edges=((0, 9),)).validate()


class TestGenSynthetic:
    def test_deterministic_bytes(self, tmp_path):
        a = gen_synthetic(SMALL, split="train")
        b = gen_synthetic(SMALL, split="train")
        pa, pb = tmp_path / "a.qbrn", tmp_path / "b.qbrn"
        write_dataset(a, pa)
        write_dataset(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_train_test_disjoint_draws(self):
        train = gen_synthetic(SMALL, split="train")
        test = gen_synthetic(SMALL, split="test")
        assert not np.array_equal(train.voxels[0], test.voxels[0])

    def test_interaction_off_is_pure_mixing(self):
        cfg = SynthConfig(
            voxels=16,
            embed_dim=8,
            latent_dim=4,
            regions=4,
            interaction_strength=0.0,
            noise_std=0.0,
            n_train=5,
            n_test=2,
            seed=9,
        )
        ds = gen_synthetic(cfg, split="train")
        mix = mixing_matrix(cfg)
        for i in range(5):
            z = Rng(9, stream=i).normal(4)
            np.testing.assert_allclose(ds.voxels[i], logistic(mix @ z).astype(np.float32), atol=0)

    def test_mixing_rows_unit_norm_and_region_local(self):
        cfg = SynthConfig(voxels=32, latent_dim=8, regions=4, seed=5)
        mix = mixing_matrix(cfg)
        np.testing.assert_allclose(np.linalg.norm(mix, axis=1), 1.0, atol=1e-12)
        # region r touches only latents with l % 4 == r % 4
        for r in range(4):
            rows = mix[r * 8 : (r + 1) * 8]
            off_support = [l for l in range(8) if l % 4 != r]
            np.testing.assert_array_equal(rows[:, off_support], 0.0)

    def test_default_edges_form_hub(self):
        cfg = SynthConfig(regions=8)
        assert cfg.resolved_edges() == tuple((r, 0) for r in range(1, 8))

    def test_voxels_strictly_inside_unit_interval(self):
        ds = gen_synthetic(SMALL, split="train")
        assert np.all(ds.voxels > 0.0) and np.all(ds.voxels < 1.0)

    def test_embeddings_unit_norm(self):
        ds = gen_synthetic(SMALL, split="test")
        norms = np.linalg.norm(ds.embeddings.astype(np.float64), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)

    def test_default_file_size_arithmetic(self, tmp_path):
        cfg = SynthConfig()
        ds = gen_synthetic(cfg, split="train")
        path = tmp_path / "d.qbrn"
        write_dataset(ds, path)
        header = 24
        voxels = cfg.n_train * cfg.voxels * 4
        embeddings = cfg.n_train * cfg.embed_dim * 4
        metadata = 4 + 8 * len(cfg.resolved_edges()) + 4
        assert path.stat().st_size == header + voxels + embeddings + metadata

    def test_planted_signal_zscore(self):
        ds = gen_synthetic(SynthConfig(seed=1), split="train")
        assert planted_signal_zscore(ds) > 3.0

    def test_zscore_requires_metadata(self):
        ds = Dataset(voxels=np.zeros((4, 2), dtype=np.float32), embeddings=np.zeros((4, 2), dtype=np.float32))
        with pytest.raises(DataError):
            planted_signal_zscore(ds)


class TestDatasetContainer:
    def test_round_trip(self, tmp_path):
        ds = gen_synthetic(SMALL, split="train")
        path = tmp_path / "d.qbrn"
        write_dataset(ds, path)
        loaded = read_dataset(path)
        np.testing.assert_array_equal(ds.voxels, loaded.voxels)
        np.testing.assert_array_equal(ds.embeddings, loaded.embeddings)
        assert loaded.edges == ds.edges
        assert loaded.regions == ds.regions

    def test_round_trip_without_metadata(self, tmp_path):
        rng = Rng(70)
        emb = rng.normal((6, 4))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        ds = Dataset(voxels=rng.uniform((6, 5)).astype(np.float32), embeddings=emb.astype(np.float32))
        path = tmp_path / "d.qbrn"
        write_dataset(ds, path)
        loaded = read_dataset(path)
        assert loaded.edges is None and loaded.regions is None
        np.testing.assert_array_equal(ds.voxels, loaded.voxels)

    def test_truncated_file(self, tmp_path):
        ds = gen_synthetic(SMALL, split="test")
        path = tmp_path / "d.qbrn"
        write_dataset(ds, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-10])
        with pytest.raises(FormatError):
            read_dataset(path)

    def test_bad_magic(self, tmp_path):
        ds = gen_synthetic(SMALL, split="test")
        path = tmp_path / "d.qbrn"
        write_dataset(ds, path)
        blob = bytearray(path.read_bytes())
        blob[0:4] = b"XBRN"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="magic"):
            read_dataset(path)

    def test_norm_violation_detected(self, tmp_path):
        ds = gen_synthetic(SMALL, split="test")
        ds.embeddings[0] *= 2.0
        path = tmp_path / "d.qbrn"
        write_dataset(ds, path)
        with pytest.raises(FormatError, match="norm"):
            read_dataset(path)


class TestEmbeddingContainer:
    def test_round_trip(self, tmp_path):
        rng = Rng(71)
        rows = rng.normal((7, 5)).astype(np.float32)
        path = tmp_path / "e.qemb"
        write_embedding_file(rows, path)
        np.testing.assert_array_equal(read_embedding_file(path), rows)

    def test_length_mismatch(self, tmp_path):
        path = tmp_path / "e.qemb"
        write_embedding_file(np.eye(3, dtype=np.float32), path)
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(FormatError, match="length"):
            read_embedding_file(path)


class TestIngestEmbeddings:
    def write_csv(self, path, rows):
        path.write_text("\n".join(",".join(f"{v:.8f}" for v in row) for row in rows) + "\n")

    def test_happy_path(self, tmp_path):
        rng = Rng(72)
        voxels = rng.uniform((10, 6))
        csv = tmp_path / "voxels.csv"
        self.write_csv(csv, voxels)
        emb = rng.normal((10, 4))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        qemb = tmp_path / "e.qemb"
        write_embedding_file(emb.astype(np.float32), qemb)
        ds = ingest_embeddings(csv, qemb)
        assert ds.n == 10 and ds.voxel_count == 6 and ds.embed_dim == 4
        assert not ds.has_planted_metadata()
        norms = np.linalg.norm(ds.embeddings.astype(np.float64), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)

    def test_row_count_mismatch(self, tmp_path):
        rng = Rng(73)
        csv = tmp_path / "voxels.csv"
        self.write_csv(csv, rng.uniform((10, 3)))
        emb = rng.normal((9, 4))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        qemb = tmp_path / "e.qemb"
        write_embedding_file(emb.astype(np.float32), qemb)
        with pytest.raises(DataError):
            ingest_embeddings(csv, qemb)

    def test_norm_violation_rejected(self, tmp_path):
        rng = Rng(74)
        csv = tmp_path / "voxels.csv"
        self.write_csv(csv, rng.uniform((3, 3)))
        emb = np.eye(3, dtype=np.float32)
        emb[1] *= 0.5
        qemb = tmp_path / "e.qemb"
        write_embedding_file(emb, qemb)
        with pytest.raises(InvariantError):
            ingest_embeddings(csv, qemb)

    def test_ragged_csv_rejected(self, tmp_path):
        csv = tmp_path / "voxels.csv"
        csv.write_text("1.0,2.0\n3.0\n")
        with pytest.raises(DataError):
            read_voxel_csv(csv)
