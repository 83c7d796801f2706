import numpy as np
import pytest

from ashkit import (
    ConfigError,
    DataError,
    DatasetManifest,
    FeatureTensor,
    ManifestEntry,
    TensorFormatError,
    load_manifest,
    percentile_threshold,
    read_tensor,
    save_manifest,
    write_tensor,
)
from ashkit.tensors import read_tensor_dims

from oracles import nearest_rank_percentile


def ft(values, dims=None):
    return FeatureTensor.from_values(values, dims)


class TestFeatureTensor:
    def test_dims_length_mismatch(self):
        with pytest.raises(DataError, match="length mismatch"):
            FeatureTensor((2, 3), np.zeros(5, dtype=np.float32))

    def test_rejects_nan_and_inf(self):
        for bad in (float("nan"), float("inf"), -float("inf")):
            with pytest.raises(DataError, match="non-finite"):
                ft([1.0, bad])

    def test_rejects_bad_dims(self):
        with pytest.raises(DataError, match="bad dims"):
            FeatureTensor((0,), np.zeros(0, dtype=np.float32))

    def test_values_are_immutable(self):
        t = ft([1.0, 2.0])
        with pytest.raises(ValueError):
            t.values[0] = 5.0


class TestPercentileThreshold:
    def test_worked_example(self):
        # t = sorted[k-1], k = max(1, ceil(50/100 * 4)) = 2
        assert nearest_rank_percentile([1, 2, 3, 4], 50) == 2
        assert percentile_threshold(ft([1, 2, 3, 4]), 50) == 2.0

    def test_p_zero_is_minimum(self):
        assert percentile_threshold(ft([1, 2, 3, 4]), 0) == 1.0

    def test_constant_tensor(self):
        assert percentile_threshold(ft([5, 5, 5, 5]), 90) == 5.0

    def test_empty_input(self):
        with pytest.raises(DataError, match="empty input"):
            percentile_threshold(np.array([]), 50)

    def test_bad_percentile(self):
        for p in (-1, 100, 100.5, float("nan")):
            with pytest.raises(ConfigError, match="bad percentile"):
                percentile_threshold(ft([1.0]), p)

    def test_matches_sort_oracle_on_random_tensors(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            n = int(rng.integers(1, 200))
            values = rng.normal(size=n).astype(np.float32)
            p = float(rng.uniform(0, 100)) % 100.0
            got = percentile_threshold(ft(values), p)
            want = nearest_rank_percentile(values.tolist(), p)
            assert got == pytest.approx(want, abs=0)

    def test_exclusive_below_count_on_distinct_values(self):
        # With all-distinct values exactly k-1 elements sit strictly below t.
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(rng.integers(1, 100))
            values = rng.permutation(n).astype(np.float32)
            p = float(rng.uniform(0.0001, 99.9999))
            t = percentile_threshold(ft(values), p)
            k = max(1, int(np.ceil(p / 100.0 * n)))
            assert int((values < t).sum()) == k - 1

    def test_permutation_invariance(self):
        rng = np.random.default_rng(13)
        values = rng.normal(size=50).astype(np.float32)
        t = percentile_threshold(ft(values), 37.5)
        for _ in range(10):
            shuffled = rng.permutation(values)
            assert percentile_threshold(ft(shuffled), 37.5) == t


class TestAshtFormat:
    def test_round_trip_is_bit_exact(self, tmp_path):
        x = ft([1.5, -2.0], dims=[2])
        path = tmp_path / "t.asht"
        write_tensor(x, path)
        back = read_tensor(path)
        assert back.dims == x.dims
        assert np.array_equal(
            back.values.view(np.uint32), x.values.view(np.uint32)
        )

    def test_round_trip_random_tensors(self, tmp_path):
        rng = np.random.default_rng(3)
        for i in range(50):
            ndim = int(rng.integers(1, 4))
            dims = tuple(int(d) for d in rng.integers(1, 6, size=ndim))
            values = rng.normal(size=int(np.prod(dims))).astype(np.float32)
            x = FeatureTensor(dims, values)
            path = tmp_path / f"r{i}.asht"
            write_tensor(x, path)
            back = read_tensor(path)
            assert back.dims == dims
            assert np.array_equal(back.values.view(np.uint32), values.view(np.uint32))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.asht"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(TensorFormatError, match="bad magic"):
            read_tensor(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v2.asht"
        good = tmp_path / "good.asht"
        write_tensor(ft([1.0]), good)
        blob = bytearray(good.read_bytes())
        blob[4] = 2  # little-endian u16 version
        path.write_bytes(bytes(blob))
        with pytest.raises(TensorFormatError, match="version mismatch"):
            read_tensor(path)

    def test_truncated_payload(self, tmp_path):
        good = tmp_path / "good.asht"
        write_tensor(ft([1.0, 2.0, 3.0]), good)
        trunc = tmp_path / "trunc.asht"
        trunc.write_bytes(good.read_bytes()[:-4])
        with pytest.raises(TensorFormatError, match="truncated payload"):
            read_tensor(trunc)

    def test_length_mismatch(self, tmp_path):
        # dims=[2,3] but only 5 floats of payload -> distinct from truncation
        # when extra bytes are present instead.
        good = tmp_path / "good.asht"
        write_tensor(ft(np.arange(6, dtype=np.float32), dims=[2, 3]), good)
        long = tmp_path / "long.asht"
        long.write_bytes(good.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(TensorFormatError, match="length mismatch"):
            read_tensor(long)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "tiny.asht"
        path.write_bytes(b"ASH")
        with pytest.raises(TensorFormatError, match="truncated header"):
            read_tensor(path)

    def test_dims_only_read(self, tmp_path):
        path = tmp_path / "d.asht"
        write_tensor(ft(np.zeros(12, dtype=np.float32), dims=[3, 4]), path)
        assert read_tensor_dims(path) == (3, 4)

    def test_non_finite_payload_rejected(self, tmp_path):
        path = tmp_path / "nan.asht"
        good = tmp_path / "good.asht"
        write_tensor(ft([1.0]), good)
        blob = bytearray(good.read_bytes())
        blob[-4:] = np.array([np.nan], dtype="<f4").tobytes()
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="non-finite"):
            read_tensor(path)


class TestManifest:
    def test_save_load_validate(self, tmp_path):
        for i in range(3):
            write_tensor(ft([float(i), 0.0]), tmp_path / f"s{i}.asht")
        manifest = DatasetManifest(
            role="id-eval",
            entries=tuple(ManifestEntry(f"s{i}.asht", i) for i in range(3)),
            base_dir=str(tmp_path),
        )
        mpath = tmp_path / "manifest.json"
        save_manifest(manifest, mpath)
        loaded = load_manifest(mpath)
        assert loaded.role == "id-eval"
        assert len(loaded) == 3
        assert loaded.validate() == (2,)
        pairs = loaded.load()
        assert [label for _, label in pairs] == [0, 1, 2]

    def test_missing_file_detected(self, tmp_path):
        manifest = DatasetManifest(
            role="train", entries=(ManifestEntry("ghost.asht", 0),), base_dir=str(tmp_path)
        )
        with pytest.raises(DataError, match="missing file"):
            manifest.validate()

    def test_dims_mismatch_detected(self, tmp_path):
        write_tensor(ft([1.0, 2.0]), tmp_path / "a.asht")
        write_tensor(ft([1.0, 2.0, 3.0]), tmp_path / "b.asht")
        manifest = DatasetManifest(
            role="train",
            entries=(ManifestEntry("a.asht", 0), ManifestEntry("b.asht", 1)),
            base_dir=str(tmp_path),
        )
        with pytest.raises(DataError, match="dims mismatch"):
            manifest.validate()

    def test_bad_role(self):
        with pytest.raises(DataError, match="bad manifest role"):
            DatasetManifest(role="evaluation", entries=())
