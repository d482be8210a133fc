import gzip
import struct

import numpy as np
import pytest

from spikeae.data import (
    DATA_DIR_ENV,
    IMAGE_MAGIC,
    LABEL_MAGIC,
    Dataset,
    batches,
    class_balanced_sample,
    load_idx,
    load_mnist,
    resolve_data_dir,
)
from spikeae.errors import ConsistencyError, ContractError, DataError, FormatError


def idx_bytes(magic, array):
    array = np.asarray(array, dtype=np.uint8)
    return struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()


@pytest.fixture
def tiny(tmp_path, rng):
    images = rng.integers(0, 256, size=(30, 28, 28), dtype=np.uint8)
    labels = np.arange(30) % 10
    (tmp_path / "img").write_bytes(idx_bytes(IMAGE_MAGIC, images))
    (tmp_path / "lab").write_bytes(idx_bytes(LABEL_MAGIC, labels))
    return tmp_path, images, labels


class TestIdx:
    def test_roundtrip(self, tiny):
        root, images, labels = tiny
        ds = load_idx(root / "img", root / "lab")
        assert ds.images.shape == (30, 1, 28, 28) and ds.images.dtype == np.float32
        np.testing.assert_array_equal(ds.images[:, 0], images.astype(np.float32) / 255)
        np.testing.assert_array_equal(ds.labels, labels)

    def test_gzip_fallback(self, tiny):
        root, images, _ = tiny
        for name in ("img", "lab"):
            (root / f"{name}.gz").write_bytes(gzip.compress((root / name).read_bytes()))
            (root / name).unlink()
        assert len(load_idx(root / "img", root / "lab")) == 30

    def test_bad_magic(self, tiny):
        root, images, _ = tiny
        (root / "img").write_bytes(idx_bytes(0x0803 + 1, images))
        with pytest.raises(FormatError, match="offset 0"):
            load_idx(root / "img", root / "lab")

    def test_truncated(self, tiny):
        root, _, _ = tiny
        raw = (root / "img").read_bytes()
        (root / "img").write_bytes(raw[:-5])
        with pytest.raises(FormatError, match=f"offset {len(raw) - 5}"):
            load_idx(root / "img", root / "lab")

    def test_truncated_header(self, tmp_path):
        (tmp_path / "img").write_bytes(b"\x00\x00\x08")
        (tmp_path / "lab").write_bytes(idx_bytes(LABEL_MAGIC, [1]))
        with pytest.raises(FormatError):
            load_idx(tmp_path / "img", tmp_path / "lab")

    def test_trailing_bytes(self, tiny):
        root, _, _ = tiny
        (root / "lab").write_bytes((root / "lab").read_bytes() + b"xx")
        with pytest.raises(FormatError, match="trailing"):
            load_idx(root / "img", root / "lab")

    def test_count_mismatch(self, tiny):
        root, _, labels = tiny
        (root / "lab").write_bytes(idx_bytes(LABEL_MAGIC, labels[:29]))
        with pytest.raises(ConsistencyError):
            load_idx(root / "img", root / "lab")

    def test_missing(self, tmp_path):
        with pytest.raises(DataError):
            load_idx(tmp_path / "nope", tmp_path / "nada")


class TestDataDir:
    def test_env_wins(self, monkeypatch, tmp_path):
        monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path))
        assert resolve_data_dir("/elsewhere") == tmp_path

    def test_config_fallback(self, monkeypatch):
        monkeypatch.delenv(DATA_DIR_ENV, raising=False)
        assert str(resolve_data_dir("/x/y")) == "/x/y"
        with pytest.raises(DataError):
            resolve_data_dir(None)

    def test_unknown_split(self, tmp_path):
        with pytest.raises(DataError):
            load_mnist(tmp_path, "test")


class TestBatches:
    def make(self, n):
        return Dataset(np.zeros((n, 1, 2, 2), np.float32), np.arange(n) % 10)

    def test_counts(self):
        out = batches(self.make(60_000), 64, np.random.default_rng(0))
        assert len(out) == 938 and len(out[-1]) == 32
        assert sum(len(b) for b in out[:-1]) == 937 * 64

    def test_each_index_once(self):
        out = batches(self.make(1000), 64, np.random.default_rng(1))
        np.testing.assert_array_equal(np.sort(np.concatenate(out)), np.arange(1000))

    def test_seeded(self):
        a = batches(self.make(500), 64, np.random.default_rng(2))
        b = batches(self.make(500), 64, np.random.default_rng(2))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_singletons(self):
        assert len(batches(self.make(300), 1)) == 300

    def test_errors(self):
        with pytest.raises(ContractError):
            batches(self.make(0), 4)
        with pytest.raises(ContractError):
            batches(self.make(4), 0)


class TestBalanced:
    def make(self):
        labels = np.random.default_rng(0).integers(0, 10, size=400)
        return Dataset(np.zeros((400, 1, 2, 2), np.float32), labels)

    def test_ten_per_class(self):
        ds = self.make()
        idx = class_balanced_sample(ds, 10, np.random.default_rng(1))
        assert len(idx) == 100
        np.testing.assert_array_equal(np.bincount(ds.labels[idx], minlength=10), 10)
        assert len(set(idx.tolist())) == 100

    def test_one_per_class(self):
        ds = self.make()
        idx = class_balanced_sample(ds, 1)
        np.testing.assert_array_equal(ds.labels[idx], np.arange(10))

    def test_seeded(self):
        ds = self.make()
        a = class_balanced_sample(ds, 10, np.random.default_rng(3))
        b = class_balanced_sample(ds, 10, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_shortage(self):
        ds = Dataset(np.zeros((5, 1, 2, 2), np.float32), np.array([0, 1, 2, 3, 4]))
        with pytest.raises(ContractError):
            class_balanced_sample(ds, 1)


class TestMnist:
    def test_official_files(self, mnist_dir):
        train = load_mnist(mnist_dir, "train")
        val = load_mnist(mnist_dir, "validation")
        assert len(train) == 60_000 and len(val) == 10_000
        assert train.images.min() == 0.0 and train.images.max() == 1.0
        np.testing.assert_array_equal(np.unique(train.labels), np.arange(10))
        assert abs(float(train.images.mean(dtype=np.float64)) - 0.13) < 0.005
