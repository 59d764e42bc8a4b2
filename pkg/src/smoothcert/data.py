"""Synthetic Gaussian-blob datasets and the dataset CSV format.

CSV layout: header ``label,x0,x1,...`` then one row per example.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Dataset", "blob_centers", "make_blobs", "write_dataset_csv", "read_dataset_csv"]


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def head(self, m: int) -> "Dataset":
        return Dataset(self.X[:m], self.y[:m])


def blob_centers(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """Class centers with neighbouring classes ``separation`` apart.

    Centers sit on a regular polygon in the first two coordinates (all pairs
    equidistant for C <= 3); in one dimension they are evenly spaced on a line.
    """
    centers = np.zeros((num_classes, dim))
    if dim == 1:
        centers[:, 0] = separation * (np.arange(num_classes) - 0.5 * (num_classes - 1))
        return centers
    radius = separation / (2.0 * math.sin(math.pi / num_classes))
    angles = 2.0 * math.pi * np.arange(num_classes) / num_classes
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def make_blobs(num_classes: int, dim: int, per_class: int, separation: float,
               rng: np.random.Generator) -> Dataset:
    """Unit-variance isotropic blobs around :func:`blob_centers`, shuffled."""
    if num_classes < 2 or dim < 1 or per_class < 1 or separation < 0.0:
        raise ValueError("need classes >= 2, dim >= 1, per_class >= 1, separation >= 0")
    centers = blob_centers(num_classes, dim, separation)
    y = np.repeat(np.arange(num_classes), per_class)
    X = centers[y] + rng.standard_normal((y.shape[0], dim))
    order = rng.permutation(y.shape[0])
    return Dataset(X[order], y[order])


def write_dataset_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"x{i}" for i in range(ds.dim)])
        for xi, yi in zip(ds.X, ds.y):
            w.writerow([int(yi)] + [repr(float(v)) for v in xi])


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "label":
        raise ValueError(f"{path}: missing 'label,...' header")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"{path}: no examples")
    width = len(rows[0])
    if width < 2 or any(len(r) != width for r in body):
        raise ValueError(f"{path}: rows must have {width} fields")
    y = np.array([int(r[0]) for r in body], dtype=np.int64)
    X = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64)
    if y.min() < 0:
        raise ValueError(f"{path}: negative label")
    return Dataset(X, y)
