"""Synthetic object library, grasp prototypes, and dataset generation.

Everything here is deterministic given (config, seed): sub-streams are
derived with numpy SeedSequence spawn keys, so the library, the per-cluster
prototype gestures, and the record stream can each be regenerated
independently.

Objects are parametric point clouds in four shape families (cylinders,
elongated boxes, spheres, flat disks); clusters pair a family with a size
regime whose ranges overlap across regimes, so unseen objects of a cluster
are genuinely ambiguous while seen objects can be memorized. That gives
the within-subject / cross-subject / cross-object difficulty ordering some
teeth at desk scale.

The hand model is a 21-joint kinematic chain (wrist + five 4-joint
fingers). A pose is five per-finger curl angles plus a spread and a size
scale; a flat hand is the zero-curl pose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bps import BasisPointSet, bps_encode
from .data import Compat, Dataset, OrgRecord
from .errors import InvalidConfig
from .geometry import (
    HandPose,
    NormalizedHand,
    ObjectInstance,
    ObjectModel,
    to_canonical_cloud,
    yaw_matrix,
)
from .graspnet import Condition, LabeledPair
from .library import ObjectLibrary

# knuckle positions (meters, wrist at origin, fingers along +z, palm up +y)
_KNUCKLES = {
    "thumb": (0.035, 0.0, 0.025),
    "index": (0.028, 0.0, 0.088),
    "middle": (0.009, 0.0, 0.094),
    "ring": (-0.010, 0.0, 0.088),
    "pinky": (-0.028, 0.0, 0.078),
}
_SEGMENTS = {
    "thumb": (0.040, 0.032, 0.026),
    "index": (0.042, 0.026, 0.021),
    "middle": (0.046, 0.029, 0.022),
    "ring": (0.042, 0.027, 0.021),
    "pinky": (0.034, 0.021, 0.018),
}
_FINGER_ORDER = ("thumb", "index", "middle", "ring", "pinky")


def hand_from_curls(
    curls, spread: float = 0.0, scale: float = 1.0
) -> NormalizedHand:
    """Build a canonical 21-joint pose from five per-finger curl angles.

    Curl is radians of flexion applied cumulatively at each finger joint,
    bending toward the palm (-y). Spread fans the fingers in the x-z
    plane. Curl zero with zero spread is the flat hand.
    """
    curls = np.asarray(curls, dtype=np.float64)
    if curls.shape != (5,):
        raise ValueError("need one curl angle per finger")
    joints = np.zeros((21, 3))
    for f, name in enumerate(_FINGER_ORDER):
        base = np.array(_KNUCKLES[name]) * scale
        direction = base / np.linalg.norm(base)
        fan = spread * (f - 2.5) / 2.5
        rot = yaw_matrix(np.degrees(fan))
        direction = rot @ direction
        pos = base
        joints[1 + 4 * f] = pos
        bent = 0.0
        for s, seg_len in enumerate(_SEGMENTS[name]):
            bent += curls[f]
            seg_dir = np.cos(bent) * direction + np.sin(bent) * np.array([0.0, -1.0, 0.0])
            pos = pos + scale * seg_len * seg_dir
            joints[2 + 4 * f + s] = pos
    return NormalizedHand(coords=joints.reshape(-1))


def flat_hand(scale: float = 1.0) -> NormalizedHand:
    """Open flat hand: zero curl, mild spread; carries no grasp semantics."""
    return hand_from_curls(np.zeros(5), spread=0.15, scale=scale)


@dataclass(frozen=True)
class SyntheticConfig:
    clusters: int = 8
    objects_per_cluster: int = 4
    subjects: int = 10
    records_per_subject: int = 200
    joint_noise_sigma: float = 0.005
    subject_offset_sigma: float = 0.005
    style_blend_prob: float = 0.8
    style_blend_max: float = 0.65
    label_flip_noise: float = 0.0
    unsure_rate: float = 0.0
    positive_rate: float = 0.5
    cloud_points: int = 256
    geometry_mix: float = 0.6
    size_informative: bool = False

    def __post_init__(self):
        if self.clusters < 1 or self.objects_per_cluster < 1:
            raise InvalidConfig("need at least one cluster and one object per cluster")
        if self.subjects < 1 or self.records_per_subject < 1:
            raise InvalidConfig("need at least one subject and one record per subject")
        if not 0.0 <= self.label_flip_noise <= 1.0:
            raise InvalidConfig("label_flip_noise must be in [0, 1]")
        if not 0.0 <= self.unsure_rate < 1.0:
            raise InvalidConfig("unsure_rate must be in [0, 1)")
        if not 0.0 < self.positive_rate < 1.0:
            raise InvalidConfig("positive_rate must be in (0, 1)")
        if self.joint_noise_sigma < 0 or self.subject_offset_sigma < 0:
            raise InvalidConfig("noise sigmas must be non-negative")
        if self.cloud_points < 8:
            raise InvalidConfig("cloud_points must be at least 8")
        if not 0.0 <= self.geometry_mix <= 1.0:
            raise InvalidConfig("geometry_mix must be in [0, 1]")
        if not 0.0 <= self.style_blend_prob <= 1.0:
            raise InvalidConfig("style_blend_prob must be in [0, 1]")
        if not 0.0 <= self.style_blend_max < 1.0:
            raise InvalidConfig("style_blend_max must be in [0, 1)")


def _rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _sample_cylinder(rng, radius, height, n):
    theta = rng.uniform(0.0, 2 * np.pi, n)
    which = rng.random(n)
    pts = np.empty((n, 3))
    side = which < 0.7
    pts[side, 0] = radius * np.cos(theta[side])
    pts[side, 2] = radius * np.sin(theta[side])
    pts[side, 1] = rng.uniform(-height / 2, height / 2, side.sum())
    caps = ~side
    r = radius * np.sqrt(rng.random(caps.sum()))
    pts[caps, 0] = r * np.cos(theta[caps])
    pts[caps, 2] = r * np.sin(theta[caps])
    pts[caps, 1] = np.where(rng.random(caps.sum()) < 0.5, -height / 2, height / 2)
    return pts


def _sample_box(rng, wx, wy, wz, n):
    dims = np.array([wx, wy, wz])
    areas = np.array([wy * wz, wx * wz, wx * wy])
    face_axis = rng.choice(3, size=n, p=areas / areas.sum())
    face_sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    pts = rng.uniform(-0.5, 0.5, (n, 3)) * dims
    pts[np.arange(n), face_axis] = face_sign * dims[face_axis] / 2
    return pts


def _sample_sphere(rng, radius, n):
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius


def _sample_disk(rng, radius, thickness, n):
    pts = _sample_cylinder(rng, radius, thickness, n)
    return pts


def _make_cloud(rng, family: int, size: float, n: int) -> np.ndarray:
    # wide per-object stretch keeps seen objects geometrically memorable
    stretch = rng.uniform(0.78, 1.28, 3)
    if family == 0:  # cylindrical (cups, bottles)
        cloud = _sample_cylinder(rng, 0.04 * size, 0.14 * size, n)
    elif family == 1:  # elongated (tools)
        cloud = _sample_box(rng, 0.22 * size, 0.03 * size, 0.035 * size, n)
    elif family == 2:  # spherical (balls, fruit)
        cloud = _sample_sphere(rng, 0.05 * size, n)
    else:  # flat (plates, lids)
        cloud = _sample_disk(rng, 0.10 * size, 0.015 * size, n)
    return cloud * stretch


_SIZE_GAP = 0.07


def _draw_size(rng, lo: float, hi: float, taken: list[float]) -> float:
    """Size in [lo, hi] at least _SIZE_GAP away from sizes already taken.

    Falls back to the most isolated candidate if the range is crowded, so
    generation always terminates deterministically.
    """
    best, best_gap = None, -1.0
    for _ in range(200):
        cand = rng.uniform(lo, hi)
        gap = min((abs(cand - t) for t in taken), default=np.inf)
        if gap >= _SIZE_GAP:
            return cand
        if gap > best_gap:
            best, best_gap = cand, gap
    return best


def synthetic_object_library(cfg: SyntheticConfig, seed: int) -> ObjectLibrary:
    """Parametric clouds; a cluster pairs a native shape family with a size regime.

    Grasp clusters are geometrically heterogeneous in the wild (cylinders,
    boxes, and fruit can all afford the same grasp), so with probability
    `geometry_mix` an object takes a random other family instead of its
    cluster's native one. Seen objects stay identifiable (sizes keep a
    minimum pairwise gap within each family, and regime ranges overlap),
    while an unseen object's cluster is genuinely ambiguous from geometry
    alone, which is what makes held-out-object generalization hard.
    """
    rng = _rng_for(seed, 0)
    models = []
    taken_by_family: dict[int, list[float]] = {}
    for cluster in range(cfg.clusters):
        native_family = cluster % 4
        for j in range(cfg.objects_per_cluster):
            family = native_family
            if cfg.geometry_mix > 0 and rng.random() < cfg.geometry_mix:
                family = int(rng.integers(3))
                if family >= native_family:
                    family += 1
            taken = taken_by_family.setdefault(family, [])
            if cfg.size_informative:
                # separable mode: size regime pins the cluster within a family
                regime = (cluster // 4) % 2
                lo, hi = (0.55, 1.0) if regime == 0 else (1.1, 1.65)
            else:
                # size deliberately carries no cluster information
                lo, hi = 0.55, 1.65
            size = _draw_size(rng, lo, hi, taken)
            taken.append(size)
            cloud = _make_cloud(rng, family, size, cfg.cloud_points)
            models.append(
                ObjectModel(
                    id=f"c{cluster}_o{j}", canonical_cloud=cloud, cluster_id=cluster
                )
            )
    return ObjectLibrary(models=tuple(models))


_PROTO_MIN_SEP = 0.11


def cluster_prototypes(cfg: SyntheticConfig, seed: int) -> dict[int, NormalizedHand]:
    """One characteristic grasp pose per cluster, well separated in pose space.

    Poses are resampled until each keeps a minimum 63-d distance from the
    ones already accepted (best candidate wins if the space is crowded),
    so per-record joint noise cannot collapse two clusters.
    """
    rng = _rng_for(seed, 1)
    prototypes: dict[int, NormalizedHand] = {}
    accepted: list[np.ndarray] = []
    for cluster in range(cfg.clusters):
        best, best_sep = None, -1.0
        for _ in range(200):
            curls = rng.uniform(0.25, 1.45, 5)
            spread = rng.uniform(-0.2, 0.35)
            scale = rng.uniform(0.9, 1.1)
            cand = hand_from_curls(curls, spread=spread, scale=scale)
            sep = min(
                (float(np.linalg.norm(cand.coords - a)) for a in accepted),
                default=np.inf,
            )
            if sep >= _PROTO_MIN_SEP:
                best = cand
                break
            if sep > best_sep:
                best, best_sep = cand, sep
        prototypes[cluster] = best
        accepted.append(best.coords)
    return prototypes


def _noisy_canonical(
    proto: NormalizedHand, offset: np.ndarray, rng, sigma: float
) -> np.ndarray:
    joints = proto.as_joints().copy()
    joints += offset
    if sigma > 0:
        joints += rng.normal(0.0, sigma, (21, 3))
    joints[0] = 0.0
    return joints


def _world_hand(canonical_joints: np.ndarray, yaw: float, wrist: np.ndarray) -> HandPose:
    rot = yaw_matrix(yaw)
    return HandPose(joints=canonical_joints @ rot.T + wrist)


# radial pull-back of the mid and distal joints approximates the measured
# 1.5-3 cm in-reach vs out-of-reach deviation pattern (largest at fingertips)
_INREACH_PULL = np.zeros(21)
_INREACH_PULL[3::4] = 0.015  # DIP-level joints
_INREACH_PULL[np.arange(4, 21, 4)] = 0.025  # fingertips
_INREACH_PULL[2::4] = 0.008  # PIP-level joints


def _inreach_variant(canonical_joints: np.ndarray, rng) -> np.ndarray:
    joints = canonical_joints.copy()
    radii = np.linalg.norm(joints, axis=1)
    safe = radii > 1e-9
    pull = np.clip(_INREACH_PULL + rng.normal(0.0, 0.004, 21), 0.0, None)
    joints[safe] -= (pull[safe] / radii[safe])[:, None] * joints[safe]
    joints[0] = 0.0
    return joints


def gen_synthetic_dataset(
    cfg: SyntheticConfig, seed: int
) -> tuple[Dataset, ObjectLibrary]:
    """Generate a full synthetic dataset plus its object library.

    Each record: a subject performs the grasp prototype of a source
    cluster (plus subject offset and joint noise) against a probed object;
    the judgment is yes iff the probe belongs to the source cluster,
    then optionally flipped or blurred to unsure.
    """
    library = synthetic_object_library(cfg, seed)
    prototypes = cluster_prototypes(cfg, seed)
    rng = _rng_for(seed, 2)
    members = {
        c: [m.id for m in library.cluster_members(c)] for c in range(cfg.clusters)
    }
    records = []
    for s in range(cfg.subjects):
        subject_id = f"s{s:02d}"
        # each subject grasps each cluster their own way: a mild personal
        # tweak, sometimes blended toward another cluster's prototype
        # (grasp vocabularies overlap across people). Blends are
        # memorizable for seen subjects but ambiguous for unseen ones,
        # which is exactly what makes cross-subject generalization harder
        # than within-subject.
        offsets = rng.normal(0.0, cfg.subject_offset_sigma, (cfg.clusters, 21, 3))
        for c in range(cfg.clusters):
            if cfg.clusters > 1 and rng.random() < cfg.style_blend_prob:
                toward = int(rng.integers(cfg.clusters - 1))
                if toward >= c:
                    toward += 1
                beta = rng.uniform(0.3, cfg.style_blend_max)
                offsets[c] += beta * (
                    prototypes[toward].as_joints() - prototypes[c].as_joints()
                )
        offsets[:, 0] = 0.0
        for t in range(cfg.records_per_subject):
            source = int(rng.integers(cfg.clusters))
            if cfg.clusters == 1 or rng.random() < cfg.positive_rate:
                object_id = members[source][int(rng.integers(len(members[source])))]
                compatible = True
            else:
                other = int(rng.integers(cfg.clusters - 1))
                if other >= source:
                    other += 1
                object_id = members[other][int(rng.integers(len(members[other])))]
                compatible = False
            if cfg.label_flip_noise > 0 and rng.random() < cfg.label_flip_noise:
                compatible = not compatible
            judgment = Compat.YES if compatible else Compat.NO
            if cfg.unsure_rate > 0 and rng.random() < cfg.unsure_rate:
                judgment = Compat.UNSURE
            yaw = float(rng.choice((0.0, 120.0, 240.0)) + rng.uniform(-60.0, 60.0))
            wrist = np.array([0.2, 1.3, 0.6]) + rng.normal(0.0, 0.2, 3)
            canon_out = _noisy_canonical(
                prototypes[source], offsets[source], rng, cfg.joint_noise_sigma
            )
            canon_in = _inreach_variant(canon_out, rng)
            records.append(
                OrgRecord(
                    subject_id=subject_id,
                    trial_id=f"{subject_id}-{t:04d}",
                    object_id=object_id,
                    object_yaw=yaw,
                    hand_out_of_reach=_world_hand(canon_out, yaw, wrist),
                    hand_in_reach=_world_hand(canon_in, yaw, wrist),
                    compat_in_reach=judgment,
                    compat_out_of_reach=judgment,
                )
            )
    return Dataset(records=tuple(records), library=library), library


def augment_with_null_gestures(
    pairs: list[LabeledPair],
    fraction: float,
    library: ObjectLibrary,
    basis: BasisPointSet,
    scale: float,
    seed: int = 0,
    joint_noise_sigma: float = 0.01,
) -> list[LabeledPair]:
    """Append flat-hand pairs at soft label 0.5 against random posed objects.

    Training on these drives the model toward an object-independent output
    for gestures that carry no grasp semantics, so a flat hand yields a
    near-uniform gestural likelihood.
    """
    if fraction <= 0:
        return list(pairs)
    rng = _rng_for(seed, 9)
    base = flat_hand()
    n = int(round(fraction * len(pairs)))
    out = list(pairs)
    for i in range(n):
        joints = _noisy_canonical(base, np.zeros((21, 3)), rng, joint_noise_sigma)
        model = library.models[int(rng.integers(len(library)))]
        yaw = float(rng.uniform(0.0, 360.0))
        inst = ObjectInstance(model=model, position=np.zeros(3), yaw=yaw)
        out.append(
            LabeledPair(
                hand=NormalizedHand(coords=joints.reshape(-1)),
                object_bps=bps_encode(to_canonical_cloud(inst), basis, scale),
                label=0.5,
                subject_id="null",
                object_id=model.id,
                condition=Condition.OUT_OF_REACH,
            )
        )
    return out
