"""Basis point set encoding: a point cloud becomes a fixed-length vector of
nearest-neighbor distances to 1024 reference points in the unit ball.

The basis is sampled uniformly in the ball from numpy's PCG64 generator,
so a (seed, size) pair pins it bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud

BPS_SIZE = 1024


@dataclass(frozen=True, eq=False)
class BasisPointSet:
    points: np.ndarray
    seed: int

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("basis points must be (N, 3)")
        norms = np.linalg.norm(points, axis=1)
        if np.any(norms > 1.0 + 1e-12):
            raise ValueError("basis points must lie inside the unit ball")
        points = points.copy()
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return self.points.shape[0]


def make_basis(seed: int, size: int = BPS_SIZE) -> BasisPointSet:
    """Uniform sample of `size` points in the unit ball, deterministic per seed.

    A point is a unit direction (normalized Gaussian) scaled by U^(1/3),
    which is uniform in volume.
    """
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((size, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.random(size) ** (1.0 / 3.0)
    return BasisPointSet(points=directions * radii[:, None], seed=int(seed))


def bps_encode(cloud: np.ndarray, basis: BasisPointSet, scale: float) -> np.ndarray:
    """Nearest-neighbor distance from each basis point to the scaled cloud.

    Entry k is min over cloud points p of |basis_k - p / scale|. The scale
    is the shared normalization radius so all objects live in one spatial
    frame; it must be positive.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 3 or cloud.shape[0] == 0:
        raise EmptyCloud("cloud must be a non-empty (N, 3) array")
    if not scale > 0:
        raise ValueError("scale must be positive")
    tree = cKDTree(cloud / scale)
    distances, _ = tree.query(basis.points)
    return np.asarray(distances, dtype=np.float64)
