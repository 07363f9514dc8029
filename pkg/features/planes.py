"""
Ground planes: fitting, transforms and the plane distance metrics.

A plane keeps its centroid, unit normal and two tangent directions, so that
plane-to-plane distances can compare three non-collinear points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

import config
from errors import DegenerateGeometry, InsufficientPoints
from geometry import RigidTransform


@dataclass(frozen=True)
class Plane:
    """Plane with centroid point, unit normal and orthonormal tangents (u x v = n)."""
    point: np.ndarray
    normal: np.ndarray
    tangent_u: np.ndarray
    tangent_v: np.ndarray

    def __post_init__(self):
        for name in ("point", "normal", "tangent_u", "tangent_v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))

    @classmethod
    def from_point_normal(cls, point: Sequence[float], normal: Sequence[float]) -> "Plane":
        """Build a plane with an arbitrary right-handed tangent basis."""
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = helper - np.dot(helper, n) * n
        u = u / np.linalg.norm(u)
        v = np.cross(n, u)
        return cls(np.asarray(point, dtype=float), n, u, v)


GROUND_PLANE = Plane(
    point=np.zeros(3),
    normal=np.array([0.0, 0.0, 1.0]),
    tangent_u=np.array([1.0, 0.0, 0.0]),
    tangent_v=np.array([0.0, 1.0, 0.0]),
)


def _orient_normal(normal: np.ndarray) -> np.ndarray:
    if abs(normal[2]) > 1e-6:
        return normal if normal[2] > 0 else -normal
    return normal if normal[0] >= 0 else -normal


def fit_plane(points: np.ndarray, min_points: int | None = None,
              planarity_ratio: float | None = None) -> Plane:
    """
    Fit a plane by spectral decomposition of the centered point covariance.

    Raises:
        InsufficientPoints: fewer than min_points points
        DegenerateGeometry: points collinear, or second-smallest / smallest
            eigenvalue ratio below planarity_ratio
    """
    min_points = config.MIN_PLANE_POINTS if min_points is None else min_points
    planarity_ratio = config.PLANARITY_RATIO if planarity_ratio is None else planarity_ratio

    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise InsufficientPoints(f"{len(pts)} points, need at least {max(min_points, 3)}")

    centroid = pts.mean(axis=0)
    centered = pts - centroid
    eigvals, eigvecs = np.linalg.eigh(centered.T @ centered / len(pts))
    smallest, middle, largest = eigvals

    # rank before count: collinear input is degenerate however many points it has
    if largest <= 0 or middle <= 1e-12 * largest:
        raise DegenerateGeometry("points are collinear or coincident")
    if len(pts) < min_points:
        raise InsufficientPoints(f"{len(pts)} points, need at least {min_points}")
    if smallest > 0 and middle / smallest < planarity_ratio:
        raise DegenerateGeometry(
            f"planarity ratio {middle / smallest:.2f} below {planarity_ratio:.2f}"
        )

    normal = _orient_normal(eigvecs[:, 0])
    tangent_u = eigvecs[:, 2]
    tangent_v = np.cross(normal, tangent_u)
    return Plane(centroid, normal, tangent_u, tangent_v)


def transform_plane(transform: RigidTransform, plane: Plane) -> Plane:
    rotation = transform.rotation_matrix
    return Plane(
        transform.apply(plane.point),
        rotation @ plane.normal,
        rotation @ plane.tangent_u,
        rotation @ plane.tangent_v,
    )


def plane_point_distance(plane: Plane, point: Sequence[float]) -> float:
    """Signed offset of a point along the plane normal."""
    n = plane.normal / np.linalg.norm(plane.normal)
    return float(np.dot(n, np.asarray(point, dtype=float) - plane.point))


def tangent_points(plane: Plane, tangent_step: float | None = None) -> np.ndarray:
    """Centroid and the centroid moved along both tangents, shape (3, 3)."""
    step = config.TANGENT_STEP if tangent_step is None else tangent_step
    return np.stack([
        plane.point,
        plane.point + step * plane.tangent_u,
        plane.point + step * plane.tangent_v,
    ])


def plane_plane_distance(a: Plane, b: Plane, tangent_step: float | None = None) -> float:
    """Sum of |distance| from a's three tangent points to plane b."""
    return float(sum(abs(plane_point_distance(b, q)) for q in tangent_points(a, tangent_step)))


def plane_angular_distance(a: Plane, b: Plane) -> float:
    """1 - |cos angle| between the normals: 0 when parallel, 1 when perpendicular."""
    na = a.normal / np.linalg.norm(a.normal)
    nb = b.normal / np.linalg.norm(b.normal)
    return float(np.clip(1.0 - abs(np.dot(na, nb)), 0.0, 1.0))
