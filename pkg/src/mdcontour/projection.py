"""PCA projection of a normalized dataset onto its top two principal axes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset


class VarianceZero(Exception):
    """All columns constant: no principal directions exist."""


@dataclass(frozen=True)
class ProjectionModel:
    """Column mean plus the two leading eigenvectors of the sample covariance."""

    mean: np.ndarray          # (d,)
    axes: np.ndarray          # (2, d), orthonormal rows
    eigenvalues: np.ndarray   # (2,), descending

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) @ self.axes.T


@dataclass(frozen=True)
class PointCloud2D:
    """Projected points with their padded bounding viewport."""

    positions: np.ndarray     # (n, 2)
    viewport: tuple[float, float, float, float]  # (x0, y0, x1, y1)


def expand_bounds(points: np.ndarray, margin: float = 0.05) -> tuple[float, float, float, float]:
    """Axis-aligned bounds grown by ``margin`` of each extent per side."""
    x0, y0 = points.min(axis=0)
    x1, y1 = points.max(axis=0)
    dx = (x1 - x0) or 1.0
    dy = (y1 - y0) or 1.0
    return (
        float(x0 - margin * dx),
        float(y0 - margin * dy),
        float(x1 + margin * dx),
        float(y1 + margin * dy),
    )


def pca_project(ds: Dataset) -> tuple[ProjectionModel, PointCloud2D]:
    """Project dataset rows onto the top-2 principal axes.

    Axis signs are fixed so each eigenvector's largest-magnitude component is
    positive, making the output deterministic across eigen-solver variations.
    """
    if ds.row_count < 2 or (ds.constant and all(ds.constant)):
        raise VarianceZero("dataset has no varying column")

    mean = ds.data.mean(axis=0)
    centered = ds.data - mean
    cov = centered.T @ centered / (ds.row_count - 1)
    if not np.any(cov):
        raise VarianceZero("covariance is identically zero")

    evals, evecs = np.linalg.eigh(cov)      # ascending
    order = np.argsort(evals)[::-1][:2]
    eigenvalues = np.maximum(evals[order], 0.0)
    axes = evecs[:, order].T.copy()
    if axes.shape[0] < 2:
        raise VarianceZero("need at least two dimensions for a 2D projection")
    for k in range(2):
        j = int(np.argmax(np.abs(axes[k])))
        if axes[k, j] < 0:
            axes[k] = -axes[k]

    positions = centered @ axes.T
    return (
        ProjectionModel(mean=mean, axes=axes, eigenvalues=eigenvalues),
        PointCloud2D(positions=positions, viewport=expand_bounds(positions)),
    )
