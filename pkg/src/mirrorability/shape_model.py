"""Linear (PCA) point distribution model in a canonical frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateShapes, InsufficientData, LengthMismatch
from .shapes import as_shape


def canonicalize(shape: np.ndarray) -> np.ndarray:
    """Translate to the centroid and scale so the tight box has max side 1."""
    centered = shape - shape.mean(axis=0)
    size = float(np.max(shape.max(axis=0) - shape.min(axis=0)))
    if not size > 0:
        raise DegenerateShapes("shape has a zero-size bounding box")
    return centered / size


@dataclass(frozen=True)
class ShapeModel:
    """Mean shape plus orthonormal variation directions.

    ``basis`` has one flattened ``(2K,)`` direction per row (x/y interleaved
    per landmark); ``scales`` are the population standard deviations of the
    training shapes along each direction.
    """

    mean_shape: np.ndarray
    basis: np.ndarray
    scales: np.ndarray

    @property
    def num_points(self) -> int:
        return len(self.mean_shape)

    def reconstruct(self, coefficients) -> np.ndarray:
        coefficients = np.asarray(coefficients, dtype=np.float64)
        flat = self.mean_shape.ravel() + coefficients @ self.basis[: len(coefficients)]
        return flat.reshape(-1, 2)

    def project(self, shape) -> np.ndarray:
        return (canonicalize(as_shape(shape)).ravel() - self.mean_shape.ravel()) @ self.basis.T

    def sample(self, rng: np.random.Generator, spread: float = 1.0) -> np.ndarray:
        return self.reconstruct(rng.standard_normal(len(self.scales)) * self.scales * spread)


def fit_shape_model(shapes, n_components: int) -> ShapeModel:
    shapes = [as_shape(s) for s in shapes]
    if len(shapes) < 2:
        raise InsufficientData("a shape model needs at least two shapes")
    k = len(shapes[0])
    if any(len(s) != k for s in shapes):
        raise LengthMismatch("training shapes disagree on landmark count")
    if not 0 <= n_components <= 2 * k:
        raise ValueError(f"n_components must lie in [0, {2 * k}]")
    data = np.stack([canonicalize(s).ravel() for s in shapes])
    mean = data.mean(axis=0)
    _, sv, vt = np.linalg.svd(data - mean, full_matrices=True)
    scales = np.zeros(vt.shape[0])
    scales[: len(sv)] = sv / np.sqrt(len(shapes))
    return ShapeModel(mean.reshape(k, 2), vt[:n_components].copy(), scales[:n_components].copy())
