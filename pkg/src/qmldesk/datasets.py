"""Synthetic dataset generators shared by the benchmarks and the test suite.

Every generator is a pure function of an explicit ``numpy.random.Generator``,
so the same seed always reproduces the same dataset down to the last bit.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "gaussian_blobs",
    "concentric_circles",
    "half_moons",
    "toy_shapes",
    "gen_dataset",
    "write_csv",
    "read_csv",
]


def _force_norm_ratio(points: np.ndarray, ratio: float) -> np.ndarray:
    """Radially nudge extreme points so max/min row norm is exactly ``ratio``.

    Only the tails move: either the longest rows are clipped down, or the
    single longest row is pushed out.  Cluster membership is unaffected since
    every adjustment is a pure radial rescale of a few percent.
    """
    norms = np.linalg.norm(points, axis=1)
    lo = float(norms.min())
    hi = float(norms.max())
    if lo <= 0.0:
        raise ValueError("norm ratio undefined for zero-norm rows")
    if hi > lo * ratio:
        scale = np.minimum(1.0, (lo * ratio) / norms)
    else:
        scale = np.ones(len(norms))
        scale[int(np.argmax(norms))] = (lo * ratio) / hi
    return points * scale[:, None]


def gaussian_blobs(
    rng: np.random.Generator,
    n_samples: int = 2000,
    n_features: int = 10,
    n_clusters: int = 4,
    cluster_std: float = 2.5,
    center_radius: float = 23.5,
    norm_ratio: float | None = 2.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian clusters around mutually orthogonal directions.

    Centers sit at ``center_radius`` along orthonormal random directions, so
    all clusters are equally far from the origin and from each other.  With
    ``norm_ratio`` set, the norm spread is forced to that exact ratio; after
    min-norm normalization the squared spread is then exactly ``ratio**2``.
    """
    if n_clusters > n_features:
        raise ValueError("orthogonal centers need n_clusters <= n_features")
    if n_samples < n_clusters:
        raise ValueError("need at least one sample per cluster")
    raw = rng.standard_normal((n_features, n_clusters))
    q, r = np.linalg.qr(raw)
    q = q * np.sign(np.diag(r))  # fix the sign ambiguity of the factorization
    centers = center_radius * q.T

    counts = np.full(n_clusters, n_samples // n_clusters)
    counts[: n_samples % n_clusters] += 1
    blocks = []
    labels = []
    for j in range(n_clusters):
        blocks.append(centers[j] + cluster_std * rng.standard_normal((counts[j], n_features)))
        labels.append(np.full(counts[j], j, dtype=np.int64))
    points = np.vstack(blocks)
    if norm_ratio is not None:
        points = _force_norm_ratio(points, norm_ratio)
    return points, np.concatenate(labels)


def concentric_circles(
    rng: np.random.Generator,
    n_samples: int = 600,
    radii: tuple[float, ...] = (1.0, 2.5),
    noise: float = 0.03,
) -> tuple[np.ndarray, np.ndarray]:
    """Nested rings in the plane, one class per radius, equally populated."""
    n_rings = len(radii)
    if n_samples % n_rings != 0:
        raise ValueError("n_samples must split evenly across the rings")
    per_ring = n_samples // n_rings
    blocks = []
    labels = []
    for j, radius in enumerate(radii):
        angles = np.linspace(0.0, 2.0 * np.pi, per_ring, endpoint=False)
        ring = radius * np.column_stack([np.cos(angles), np.sin(angles)])
        blocks.append(ring + noise * rng.standard_normal(ring.shape))
        labels.append(np.full(per_ring, j, dtype=np.int64))
    return np.vstack(blocks), np.concatenate(labels)


def half_moons(
    rng: np.random.Generator,
    n_samples: int = 400,
    noise: float = 0.05,
) -> tuple[np.ndarray, np.ndarray]:
    """Two interleaved half circles, the classic non-convex pair."""
    if n_samples % 2 != 0:
        raise ValueError("n_samples must be even")
    half = n_samples // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    points = np.vstack([upper, lower]) + noise * rng.standard_normal((n_samples, 2))
    labels = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    return points, labels


def _stamp_square(image: np.ndarray, row: int, col: int) -> None:
    image[row : row + 4, col : col + 4] = 1.0


def _stamp_cross(image: np.ndarray, row: int, col: int) -> None:
    image[row + 2, col : col + 5] = 1.0
    image[row : row + 5, col + 2] = 1.0


def toy_shapes(
    rng: np.random.Generator,
    n_samples: int = 200,
    size: int = 8,
    noise: float = 0.05,
) -> tuple[np.ndarray, np.ndarray]:
    """Small grayscale images of two shape classes: filled squares and crosses.

    Each image places one shape at a random offset and adds pixel noise.
    Returned as an (n, size, size) stack; flatten rows for tabular consumers.
    """
    if size < 5:
        raise ValueError("shapes need at least a 5x5 canvas")
    images = noise * rng.standard_normal((n_samples, size, size))
    labels = rng.integers(0, 2, size=n_samples)
    for i in range(n_samples):
        extent = 4 if labels[i] == 0 else 5
        row = int(rng.integers(0, size - extent + 1))
        col = int(rng.integers(0, size - extent + 1))
        if labels[i] == 0:
            _stamp_square(images[i], row, col)
        else:
            _stamp_cross(images[i], row, col)
    return images, labels.astype(np.int64)


def gen_dataset(kind: str, rng: np.random.Generator, **params) -> tuple[np.ndarray, np.ndarray]:
    """Dispatch to a generator by name, returning flat rows plus labels."""
    generators = {
        "gaussian_blobs": gaussian_blobs,
        "concentric_circles": concentric_circles,
        "half_moons": half_moons,
        "toy_shapes": toy_shapes,
    }
    if kind not in generators:
        raise ValueError(f"unknown dataset kind {kind!r}")
    points, labels = generators[kind](rng, **params)
    if points.ndim > 2:
        points = points.reshape(len(points), -1)
    return points, labels


def write_csv(path, rows: np.ndarray, labels: np.ndarray | None = None) -> None:
    """Write rows to CSV, appending the integer label column when given."""
    fmt = ["%.17g"] * rows.shape[1]
    data = rows
    if labels is not None:
        if len(labels) != len(rows):
            raise ValueError("label count does not match row count")
        data = np.column_stack([rows, labels.astype(float)])
        fmt.append("%d")
    np.savetxt(path, data, delimiter=",", fmt=fmt)


def read_csv(path, with_labels: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Read back a dataset written by :func:`write_csv`."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if with_labels:
        return data[:, :-1], data[:, -1].astype(np.int64)
    return data, None
