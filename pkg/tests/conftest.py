"""
Pytest configuration and fixtures for the uGMM-NN project.
"""
import json
import struct

import numpy as np
import pytest

from src.models.params import UgmmLayerParams
from src.utils.numkit import Rng

IRIS_SPECIES = ["setosa", "versicolor", "virginica"]
IRIS_CENTERS = [
    [5.0, 3.4, 1.5, 0.2],
    [5.9, 2.8, 4.3, 1.3],
    [6.6, 3.0, 5.6, 2.0],
]


@pytest.fixture
def rng():
    """Seeded generator."""
    return Rng(1234)


@pytest.fixture
def small_layer(rng):
    """Random uGMM layer, 4 inputs -> 5 neurons."""
    return UgmmLayerParams(
        mu=rng.normal((5, 4)),
        log_sigma=rng.uniform((5, 4), -0.5, 0.5),
        pi_logit=rng.normal((5, 4)),
    )


def write_iris_like(path, per_class=50, header=True, seed=0):
    """Three well separated 4-feature clusters in Iris CSV layout."""
    gen = np.random.default_rng(seed)
    lines = ["sepal_length,sepal_width,petal_length,petal_width,species"] if header else []
    for name, center in zip(IRIS_SPECIES, IRIS_CENTERS):
        for row in gen.normal(center, 0.15, size=(per_class, 4)):
            lines.append(",".join(f"{v:.2f}" for v in row) + f",{name}")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def iris_csv(tmp_path):
    """Synthetic 150-row Iris-like CSV with a header."""
    return write_iris_like(tmp_path / "iris.csv")


def idx_images_bytes(images, magic=2051):
    count, rows, cols = images.shape
    return struct.pack(">IIII", magic, count, rows, cols) + bytes(images.astype(np.uint8).reshape(-1).tolist())


def idx_labels_bytes(labels, magic=2049):
    return struct.pack(">II", magic, len(labels)) + bytes(list(labels))


@pytest.fixture
def idx_pair(tmp_path):
    """Two 2×3 images and their labels, built byte by byte."""
    images = np.array([[[0, 255, 128], [1, 2, 3]], [[10, 20, 30], [40, 50, 60]]], dtype=np.uint8)
    labels = [7, 3]
    img_path = tmp_path / "images-idx3-ubyte"
    lbl_path = tmp_path / "labels-idx1-ubyte"
    img_path.write_bytes(idx_images_bytes(images))
    lbl_path.write_bytes(idx_labels_bytes(labels))
    return img_path, lbl_path, images, labels


@pytest.fixture
def iris_config_dict(iris_csv, tmp_path):
    """Small, fast uGMM run on the synthetic Iris file."""
    return {
        "name": "iris-test",
        "kind": "ugmm",
        "mode": "generative",
        "layer_widths": [4, 6, 3],
        "dropout": [{"layer": 1, "p": 0.3}],
        "lr0": 0.01,
        "milestones": [2],
        "gamma": 0.1,
        "clip_norm": 10.0,
        "epochs": 3,
        "batch_size": None,
        "seed": 5,
        "dataset": "iris",
        "iris_path": str(iris_csv),
        "test_fraction": 0.2,
        "output_dir": str(tmp_path / "runs"),
    }


@pytest.fixture
def write_config(tmp_path):
    """Factory writing a config dict to JSON and returning its path."""
    def _write(config, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(config))
        return path

    return _write
