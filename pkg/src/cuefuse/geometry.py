"""Domain types and 3D geometry shared by all modules.

World frame convention: right-handed, +y up; yaw rotates about +y
(counterclockwise when viewed from above). All coordinates in meters,
double precision. Geometric assertions use a 1e-9 tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRay, MissingJoints, NoIntersection

GEOM_TOL = 1e-9
COPLANAR_TOL = 1e-6
CENTROID_TOL = 1e-6


def as_point(p) -> np.ndarray:
    """Coerce to a finite (3,) float64 array."""
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("point has non-finite components")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def yaw_matrix(yaw_deg: float) -> np.ndarray:
    """Rotation about +y by yaw_deg degrees (column-vector convention)."""
    r = np.radians(yaw_deg)
    c, s = np.cos(r), np.sin(r)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True, eq=False)
class Ray:
    """Selection ray from the viewer's head through the wrist."""

    origin: np.ndarray
    through: np.ndarray

    def __post_init__(self):
        origin = as_point(self.origin)
        through = as_point(self.through)
        if np.linalg.norm(through - origin) <= GEOM_TOL:
            raise DegenerateRay("ray origin and through-point coincide")
        object.__setattr__(self, "origin", _frozen(origin))
        object.__setattr__(self, "through", _frozen(through))

    @property
    def direction(self) -> np.ndarray:
        d = self.through - self.origin
        return d / np.linalg.norm(d)


@dataclass(frozen=True, eq=False)
class Plane:
    """Plane given by a point on it and a unit normal."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        point = as_point(self.point)
        normal = as_point(self.normal)
        n = np.linalg.norm(normal)
        if abs(n - 1.0) > GEOM_TOL:
            raise ValueError(f"plane normal must have unit length, got |n|={n}")
        object.__setattr__(self, "point", _frozen(point))
        object.__setattr__(self, "normal", _frozen(normal))

    def signed_distance(self, p) -> float:
        return float(np.dot(as_point(p) - self.point, self.normal))


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Canonical point cloud of an object, centered at the origin.

    The constructor recenters the cloud so its centroid sits at the
    origin; the applied offset is kept for load reporting.
    """

    id: str
    canonical_cloud: np.ndarray
    cluster_id: int
    recenter_offset: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        cloud = np.asarray(self.canonical_cloud, dtype=np.float64)
        if cloud.ndim != 2 or cloud.shape[1] != 3 or cloud.shape[0] == 0:
            raise ValueError("canonical_cloud must be a non-empty (N, 3) array")
        if not np.all(np.isfinite(cloud)):
            raise ValueError("canonical_cloud has non-finite points")
        offset = cloud.mean(axis=0)
        cloud = cloud - offset
        assert np.linalg.norm(cloud.mean(axis=0)) < CENTROID_TOL
        object.__setattr__(self, "canonical_cloud", _frozen(cloud))
        object.__setattr__(self, "recenter_offset", _frozen(offset))
        object.__setattr__(self, "cluster_id", int(self.cluster_id))

    @property
    def radius(self) -> float:
        """Max distance of any cloud point from the centroid."""
        return float(np.linalg.norm(self.canonical_cloud, axis=1).max())


@dataclass(frozen=True, eq=False)
class ObjectInstance:
    """A placed object: model reference, world position of its center, yaw."""

    model: ObjectModel
    position: np.ndarray
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(as_point(self.position)))
        object.__setattr__(self, "yaw", float(self.yaw) % 360.0)


@dataclass(frozen=True, eq=False)
class Scene:
    """Candidate set: placed objects on a common reference plane, plus the eye."""

    objects: tuple[ObjectInstance, ...]
    reference_plane: Plane
    eye: np.ndarray

    def __post_init__(self):
        objects = tuple(self.objects)
        if not objects:
            raise ValueError("scene needs at least one object")
        for inst in objects:
            if abs(self.reference_plane.signed_distance(inst.position)) > COPLANAR_TOL:
                raise ValueError(
                    f"object {inst.model.id!r} lies off the reference plane"
                )
        object.__setattr__(self, "objects", objects)
        object.__setattr__(self, "eye", _frozen(as_point(self.eye)))

    def __len__(self) -> int:
        return len(self.objects)

    def centers(self) -> np.ndarray:
        return np.array([inst.position for inst in self.objects])


@dataclass(frozen=True, eq=False)
class HandPose:
    """21 hand joints in the world frame; joint 0 is the wrist."""

    joints: np.ndarray

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        if joints.shape != (21, 3):
            raise MissingJoints(f"expected 21 joints, got shape {joints.shape}")
        if not np.all(np.isfinite(joints)):
            raise ValueError("hand joints have non-finite coordinates")
        object.__setattr__(self, "joints", _frozen(joints))

    @property
    def wrist(self) -> np.ndarray:
        return self.joints[0]


@dataclass(frozen=True, eq=False)
class NormalizedHand:
    """Wrist-relative joints expressed in an object's canonical axes, flattened to 63."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.shape != (63,):
            raise ValueError(f"expected 63 coords, got shape {coords.shape}")
        if np.any(coords[:3] != 0.0):
            raise ValueError("wrist must sit exactly at the origin")
        if not np.all(np.isfinite(coords)):
            raise ValueError("non-finite coords")
        object.__setattr__(self, "coords", _frozen(coords))

    def as_joints(self) -> np.ndarray:
        return self.coords.reshape(21, 3)


def ray_from_head_wrist(head, wrist) -> Ray:
    """Selection ray anchored at the head and passing through the wrist."""
    return Ray(origin=as_point(head), through=as_point(wrist))


def ray_plane_endpoint(ray: Ray, plane: Plane) -> np.ndarray:
    """Forward intersection of the ray with a plane.

    Raises NoIntersection when the ray is parallel to the plane or the
    intersection lies behind the origin.
    """
    d = ray.direction
    denom = float(np.dot(d, plane.normal))
    if abs(denom) <= GEOM_TOL:
        raise NoIntersection("ray is parallel to the plane")
    t = float(np.dot(plane.point - ray.origin, plane.normal)) / denom
    if t < 0.0:
        raise NoIntersection("plane lies behind the ray origin")
    p = ray.origin + t * d
    assert abs(plane.signed_distance(p)) < GEOM_TOL
    return p


def angular_distance(ray: Ray, p) -> float:
    """Angle in degrees, in [0, 180], between the ray direction and origin→p."""
    v = as_point(p) - ray.origin
    n = np.linalg.norm(v)
    if n <= GEOM_TOL:
        raise DegenerateRay("query point coincides with the ray origin")
    cosang = float(np.clip(np.dot(ray.direction, v / n), -1.0, 1.0))
    return float(np.degrees(np.arccos(cosang)))


def to_canonical_hand(hand: HandPose, instance: ObjectInstance) -> NormalizedHand:
    """Express the hand in the instance's canonical axes, wrist at the origin.

    Each joint maps to R_yaw^-1 (joint - wrist), where R_yaw rotates the
    object from canonical to world orientation.
    """
    rel = hand.joints - hand.wrist
    rot = yaw_matrix(-instance.yaw)
    coords = (rel @ rot.T).reshape(-1)
    coords[:3] = 0.0  # wrist maps exactly to the origin
    return NormalizedHand(coords=coords)


def to_canonical_cloud(instance: ObjectInstance) -> np.ndarray:
    """Model cloud rotated by the instance yaw, centered at the origin."""
    rot = yaw_matrix(instance.yaw)
    return instance.model.canonical_cloud @ rot.T
