"""
Unit tests for dataset_service module.
"""
import numpy as np
import pytest

from src.errors import DataError
from src.models.run_config import RunConfig
from src.services.dataset_service import (
    Dataset,
    batches,
    head,
    load_iris,
    load_mnist,
    prepare_dataset,
    read_idx_images,
    read_idx_labels,
    standardize,
    stratified_split,
)
from src.utils.numkit import Rng

from tests.conftest import idx_images_bytes, idx_labels_bytes, write_iris_like


def test_read_idx_pair(idx_pair):
    """Test byte-level IDX decoding of images and labels."""
    img_path, lbl_path, images, labels = idx_pair
    pixels = read_idx_images(img_path)
    assert pixels.shape == (2, 6)
    assert pixels[0].tolist() == [0, 255, 128, 1, 2, 3]
    assert read_idx_labels(lbl_path).tolist() == labels


def test_load_mnist_scales_pixels(idx_pair):
    """Test that pixels are divided by 255 and nothing else."""
    img_path, lbl_path, _, labels = idx_pair
    ds = load_mnist(img_path, lbl_path)
    assert ds.X.shape == (2, 6)
    assert ds.X[0, 1] == 1.0
    assert ds.X[0, 2] == pytest.approx(128 / 255)
    assert ds.y.tolist() == labels
    assert ds.class_count == 10


def test_idx_bad_magic(tmp_path):
    """Test that a wrong magic number is rejected."""
    path = tmp_path / "bad"
    path.write_bytes(idx_images_bytes(np.zeros((1, 2, 2)), magic=2049))
    with pytest.raises(DataError, match="magic"):
        read_idx_images(path)


def test_idx_truncated(tmp_path):
    """Test that a file shorter than its header claims is rejected."""
    path = tmp_path / "short"
    path.write_bytes(idx_images_bytes(np.zeros((2, 2, 2)))[:-1])
    with pytest.raises(DataError, match="truncated"):
        read_idx_images(path)


def test_idx_trailing_bytes(tmp_path):
    """Test that extra bytes after the payload are rejected."""
    path = tmp_path / "long"
    path.write_bytes(idx_labels_bytes([1, 2]) + b"\x00")
    with pytest.raises(DataError, match="trailing"):
        read_idx_labels(path)


def test_mnist_count_mismatch(tmp_path):
    """Test that image and label counts must agree."""
    img, lbl = tmp_path / "img", tmp_path / "lbl"
    img.write_bytes(idx_images_bytes(np.zeros((2, 2, 2))))
    lbl.write_bytes(idx_labels_bytes([1]))
    with pytest.raises(DataError):
        load_mnist(img, lbl)


def test_missing_file(tmp_path):
    """Test that a missing file is a DataError."""
    with pytest.raises(DataError):
        read_idx_labels(tmp_path / "absent")
    with pytest.raises(DataError):
        load_iris(tmp_path / "absent.csv")


def test_load_iris_with_header(iris_csv):
    """Test Iris loading with a header line."""
    ds = load_iris(iris_csv)
    assert ds.X.shape == (150, 4)
    assert ds.class_names == ["setosa", "versicolor", "virginica"]
    assert np.bincount(ds.y).tolist() == [50, 50, 50]


def test_load_iris_without_header(tmp_path):
    """Test that a headerless file keeps its first row."""
    ds = load_iris(write_iris_like(tmp_path / "plain.csv", per_class=5, header=False))
    assert ds.n_samples == 15


def test_load_iris_malformed_row(tmp_path):
    """Test that a non-numeric feature names the offending line."""
    path = tmp_path / "broken.csv"
    path.write_text("5.1,3.5,1.4,0.2,setosa\n4.9,abc,1.4,0.2,setosa\n")
    with pytest.raises(DataError, match="row 2"):
        load_iris(path)


def test_load_iris_unknown_label(tmp_path):
    """Test that a fourth species is rejected."""
    path = tmp_path / "four.csv"
    path.write_text("\n".join(f"1,2,3,4,{name}" for name in ["a", "b", "c", "d"]) + "\n")
    with pytest.raises(DataError, match="unknown label 'd'"):
        load_iris(path)


def test_stratified_split_counts(iris_csv):
    """Test that every class contributes round(frac * n) test samples."""
    train, test = stratified_split(load_iris(iris_csv), 0.2, seed=1)
    assert np.bincount(test.y).tolist() == [10, 10, 10]
    assert np.bincount(train.y).tolist() == [40, 40, 40]


def test_stratified_split_is_seeded(iris_csv):
    """Test that the same seed gives the same split and another seed differs."""
    ds = load_iris(iris_csv)
    a, _ = stratified_split(ds, 0.2, seed=1, scale=False)
    b, _ = stratified_split(ds, 0.2, seed=1, scale=False)
    c, _ = stratified_split(ds, 0.2, seed=2, scale=False)
    np.testing.assert_array_equal(a.X, b.X)
    assert not np.array_equal(a.X, c.X)


def test_stratified_split_standardizes_with_train_stats(iris_csv):
    """Test that train features are centered with unit variance."""
    train, test = stratified_split(load_iris(iris_csv), 0.2, seed=1)
    np.testing.assert_allclose(train.X.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(train.X.std(axis=0), 1.0, rtol=1e-12)
    assert test.feature_stats is train.feature_stats


def test_stratified_split_needs_two_per_class():
    """Test that a singleton class cannot be split."""
    ds = Dataset(X=np.zeros((3, 1)), y=np.array([0, 0, 1]), class_count=2)
    with pytest.raises(DataError):
        stratified_split(ds, 0.5, seed=0)


def test_standardize_constant_feature():
    """Test that a zero-variance feature keeps std 1."""
    ds = Dataset(X=np.array([[1.0, 2.0], [1.0, 4.0]]), y=np.array([0, 1]), class_count=2)
    train, _, stats = standardize(ds, ds)
    assert stats.std[0] == 1.0
    assert train.X[:, 0].tolist() == [0.0, 0.0]


def test_batches_cover_every_sample():
    """Test that batches visit each sample once with a short last block."""
    ds = Dataset(X=np.arange(10.0)[:, None], y=np.arange(10), class_count=10)
    blocks = list(batches(ds, 4, shuffle=True, rng=Rng(0)))
    assert [len(y) for _, y in blocks] == [4, 4, 2]
    assert sorted(np.concatenate([y for _, y in blocks]).tolist()) == list(range(10))


def test_batches_in_order_without_shuffle():
    """Test that unshuffled batches keep file order."""
    ds = Dataset(X=np.arange(5.0)[:, None], y=np.arange(5), class_count=5)
    assert [y.tolist() for _, y in batches(ds, 2)] == [[0, 1], [2, 3], [4]]


def test_head():
    """Test first-n subsetting."""
    ds = Dataset(X=np.arange(5.0)[:, None], y=np.arange(5), class_count=5)
    assert head(ds, 3).y.tolist() == [0, 1, 2]
    assert head(ds, 10).n_samples == 5


def test_prepare_dataset_iris(iris_config_dict):
    """Test the config-driven Iris pipeline."""
    train, test = prepare_dataset(RunConfig(**iris_config_dict))
    assert train.n_samples + test.n_samples == 150
    assert train.n_features == 4


def test_prepare_dataset_mnist(tmp_path):
    """Test the config-driven MNIST pipeline with a training subset."""
    images = np.arange(4 * 2 * 2).reshape(4, 2, 2)
    for prefix in ("train", "t10k"):
        (tmp_path / f"{prefix}-images-idx3-ubyte").write_bytes(idx_images_bytes(images))
        (tmp_path / f"{prefix}-labels-idx1-ubyte").write_bytes(idx_labels_bytes([0, 1, 2, 3]))
    config = RunConfig(
        kind="ffnn", layer_widths=[4, 10], lr0=1e-3, dataset="mnist", mnist_dir=str(tmp_path), train_subset=3,
    )
    train, test = prepare_dataset(config)
    assert train.n_samples == 3
    assert test.n_samples == 4
