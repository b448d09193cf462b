import numpy as np
import pytest

from ummaso import dataset as ds
from ummaso.errors import DataFormatError


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SOIL_CSV = (
    "N,P,K,pH,EC,fertility\n"
    "40,20,15,5.2,0.35,0\n"
    "75,45,35,6.4,0.7,1\n"
    "110,70,60,7.6,1.2,2\n"
)


class TestLoadCsv:
    def test_soil_schema(self, tmp_path):
        data = ds.load_csv(write(tmp_path, SOIL_CSV))
        assert data.n_features == 5
        assert data.feature_names == ["N", "P", "K", "pH", "EC"]
        assert data.n_classes == 3

    def test_header_only_is_zero_rows(self, tmp_path):
        with pytest.raises(DataFormatError, match="zero data rows"):
            ds.load_csv(write(tmp_path, "a,b,fertility\n"))

    def test_hand_parsed_fixture(self, tmp_path):
        data = ds.load_csv(write(tmp_path, "a,b,fertility\n1.0,2.0,0\n3.0,4.0,1\n"))
        np.testing.assert_array_equal(data.features, [[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(data.labels, [0, 1])

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            ds.load_csv(str(tmp_path / "missing.csv"))

    def test_duplicate_header(self, tmp_path):
        with pytest.raises(DataFormatError, match="duplicate"):
            ds.load_csv(write(tmp_path, "a,a,fertility\n1,2,0\n"))

    def test_missing_label_column(self, tmp_path):
        with pytest.raises(DataFormatError, match="label column"):
            ds.load_csv(write(tmp_path, "a,b\n1,2\n"))

    def test_non_numeric_cell_reports_position(self, tmp_path):
        with pytest.raises(DataFormatError, match=r"row 3.*column 2"):
            ds.load_csv(write(tmp_path, "a,b,fertility\n1,2,0\n1,oops,1\n"))

    def test_label_must_be_integer(self, tmp_path):
        with pytest.raises(DataFormatError, match="not an integer"):
            ds.load_csv(write(tmp_path, "a,fertility\n1,0.5\n"))

    def test_label_must_be_non_negative(self, tmp_path):
        with pytest.raises(DataFormatError, match="negative"):
            ds.load_csv(write(tmp_path, "a,fertility\n1,-1\n"))

    def test_ragged_row(self, tmp_path):
        with pytest.raises(DataFormatError, match="row 2"):
            ds.load_csv(write(tmp_path, "a,b,fertility\n1,0\n"))

    def test_write_read_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        data = ds.Dataset(
            features=rng.normal(size=(20, 3)) * 1e3,
            feature_names=["x", "y", "z"],
            labels=rng.integers(0, 2, size=20),
            class_names=["a", "b"],
        )
        path = str(tmp_path / "round.csv")
        ds.write_csv(data, path)
        back = ds.load_csv(path)
        np.testing.assert_array_equal(back.features, data.features)
        np.testing.assert_array_equal(back.labels, data.labels)


class TestStandardize:
    def test_hand_computed_column(self):
        data = ds.Dataset(
            features=np.array([[2.0], [4.0], [6.0]]),
            feature_names=["x"],
            labels=np.array([0, 0, 1]),
            class_names=["a", "b"],
        )
        out, params = ds.standardize(data)
        assert params.means[0] == pytest.approx(4.0)
        assert params.std_devs[0] == pytest.approx(np.sqrt(8.0 / 3.0))
        np.testing.assert_allclose(
            out.features[:, 0], [-1.224744871, 0.0, 1.224744871], atol=1e-9
        )

    def test_constant_column_maps_to_zeros(self):
        data = ds.Dataset(np.full((3, 1), 5.0), ["x"], np.array([0, 0, 1]), ["a", "b"])
        out, params = ds.standardize(data)
        np.testing.assert_array_equal(out.features, np.zeros((3, 1)))
        assert params.std_devs[0] == 1.0

    def test_idempotent_on_standardized_input(self):
        rng = np.random.default_rng(1)
        data = ds.Dataset(rng.normal(size=(50, 4)), list("abcd"), rng.integers(0, 2, 50), ["x", "y"])
        once, _ = ds.standardize(data)
        twice, _ = ds.standardize(once)
        np.testing.assert_allclose(twice.features, once.features, atol=1e-9)

    def test_columns_have_zero_mean_unit_sd(self):
        rng = np.random.default_rng(2)
        data = ds.Dataset(rng.normal(3, 7, size=(64, 5)), list("abcde"), rng.integers(0, 2, 64), ["x", "y"])
        out, _ = ds.standardize(data)
        assert np.abs(out.features.mean(axis=0)).max() < 1e-9
        assert np.abs(out.features.std(axis=0) - 1.0).max() < 1e-9

    def test_apply_invert_round_trip(self):
        rng = np.random.default_rng(3)
        X = rng.normal(5, 11, size=(30, 4))
        data = ds.Dataset(X, list("abcd"), rng.integers(0, 2, 30), ["x", "y"])
        _, params = ds.standardize(data)
        back = ds.invert_standardization(ds.apply_standardization(X, params), params)
        np.testing.assert_allclose(back, X, rtol=1e-10)

    def test_requires_two_samples(self):
        data = ds.Dataset(np.array([[1.0]]), ["x"], np.array([0]), ["a"])
        with pytest.raises(ValueError):
            ds.standardize(data)


def make_imbalanced(counts=(70, 20, 10), seed=0):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.full(c, i) for i, c in enumerate(counts)])
    return ds.Dataset(
        features=rng.normal(size=(labels.size, 3)),
        feature_names=["a", "b", "c"],
        labels=labels,
        class_names=[f"c{i}" for i in range(len(counts))],
    )


class TestStratifiedSplit:
    def test_per_class_counts(self):
        data = make_imbalanced()
        train, test = ds.stratified_split(data, ds.SplitSpec(0.8, seed=5))
        np.testing.assert_array_equal(train.class_counts(), [56, 16, 8])
        np.testing.assert_array_equal(test.class_counts(), [14, 4, 2])

    def test_half_split_of_pairs(self):
        data = make_imbalanced(counts=(2, 2, 2))
        train, test = ds.stratified_split(data, ds.SplitSpec(0.5, seed=1))
        np.testing.assert_array_equal(train.class_counts(), [1, 1, 1])
        np.testing.assert_array_equal(test.class_counts(), [1, 1, 1])

    def test_deterministic_per_seed(self):
        data = make_imbalanced()
        a = ds.stratified_split(data, ds.SplitSpec(0.8, seed=7))
        b = ds.stratified_split(data, ds.SplitSpec(0.8, seed=7))
        np.testing.assert_array_equal(a[0].features, b[0].features)
        np.testing.assert_array_equal(a[1].labels, b[1].labels)

    def test_partition_without_overlap(self):
        data = make_imbalanced()
        train, test = ds.stratified_split(data, ds.SplitSpec(0.8, seed=2))
        merged = np.vstack([train.features, test.features])
        assert merged.shape[0] == data.n_samples
        # every original row appears exactly once
        original = {tuple(row) for row in data.features}
        assert {tuple(row) for row in merged} == original

    def test_proportions_preserved(self):
        data = make_imbalanced(counts=(53, 17, 11), seed=4)
        train, test = ds.stratified_split(data, ds.SplitSpec(0.7, seed=3))
        for c in range(3):
            lhs = train.class_counts()[c] / train.n_samples
            rhs = data.class_counts()[c] / data.n_samples
            assert abs(lhs - rhs) <= 1.0 / train.n_samples + 1.0 / data.n_samples

    def test_small_class_rejected(self):
        data = make_imbalanced(counts=(5, 1))
        with pytest.raises(ValueError, match="class 1"):
            ds.stratified_split(data, ds.SplitSpec(0.8, seed=0))


class TestOversample:
    def test_counts_equalized(self):
        out = ds.oversample(make_imbalanced(), seed=3)
        np.testing.assert_array_equal(out.class_counts(), [70, 70, 70])
        assert out.n_samples == 210

    def test_balanced_input_unchanged(self):
        data = make_imbalanced(counts=(50, 50, 50))
        assert ds.oversample(data, seed=1) is data

    def test_single_class_unchanged(self):
        data = make_imbalanced(counts=(12,))
        assert ds.oversample(data, seed=1) is data

    def test_existing_rows_untouched(self):
        data = make_imbalanced()
        out = ds.oversample(data, seed=9)
        np.testing.assert_array_equal(out.features[: data.n_samples], data.features)
        np.testing.assert_array_equal(out.labels[: data.n_samples], data.labels)
        # appended rows are duplicates of existing minority rows
        originals = {tuple(row) for row in data.features}
        assert all(tuple(row) in originals for row in out.features[data.n_samples :])

    def test_deterministic(self):
        data = make_imbalanced()
        a = ds.oversample(data, seed=11)
        b = ds.oversample(data, seed=11)
        np.testing.assert_array_equal(a.features, b.features)

    def test_empty_class_rejected(self):
        data = ds.Dataset(
            np.zeros((2, 1)), ["x"], np.array([0, 0]), ["a", "b"]
        )
        with pytest.raises(ValueError, match="class 1"):
            ds.oversample(data, seed=0)


class TestSynthGenerate:
    def config(self, **kw):
        base = dict(
            samples_per_class=[700, 200, 100],
            class_centers=np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]]),
            noise_std=1.0,
            seed=7,
        )
        base.update(kw)
        return ds.SynthConfig(**base)

    def test_exact_counts(self):
        data = ds.synth_generate(self.config())
        assert data.n_samples == 1000
        np.testing.assert_array_equal(data.class_counts(), [700, 200, 100])

    def test_degenerate_noise_sticks_to_centers(self):
        config = self.config(noise_std=1e-9, samples_per_class=[10, 10, 10])
        data = ds.synth_generate(config)
        for c in range(3):
            rows = data.features[data.labels == c]
            assert np.abs(rows - config.class_centers[c]).max() < 1e-6

    def test_seeds_differ_but_counts_match(self):
        a = ds.synth_generate(self.config(seed=1))
        b = ds.synth_generate(self.config(seed=2))
        assert not np.array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.class_counts(), b.class_counts())

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ds.SynthConfig(
                samples_per_class=[1, 2],
                class_centers=np.array([[0.0, 0.0]]),
                noise_std=1.0,
                seed=0,
            )
