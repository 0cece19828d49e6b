"""Monte-Carlo reproduction of the selection studies.

Scenes put five candidates on a vertical plane in front of the eye with
exact 1 or 5 degree adjacent separation; a simulated user produces noisy
rays and grasp gestures; five techniques select objects under a retry
budget standing in for the 10-second trial limit (one budget unit per
attempt, and per stage for the two-stage technique).

Trials are independent given per-trial seeds spawned from the experiment
seed, so runs are bitwise reproducible and trivially parallelizable.
"""

from __future__ import annotations

import csv
import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bps import BasisPointSet
from .directional import DirectionalConfig, default_config, directional_likelihoods
from .errors import InsufficientLibrary, NoIntersection
from .fusion import (
    CueAgreement,
    LikelihoodVector,
    classify_cue_agreement,
    posterior,
    select_map,
    uniform_prior,
)
from .geometry import (
    HandPose,
    NormalizedHand,
    ObjectInstance,
    Plane,
    Ray,
    Scene,
    angular_distance,
    ray_plane_endpoint,
    yaw_matrix,
)
from .graspnet import (
    GraspNet,
    gesture_likelihoods,
    scene_encodings,
    uniform_gesture_likelihoods,
)
from .library import ObjectLibrary

SCENE_SIZE = 5


class SpatialAmbiguity(enum.Enum):
    LOW = "low"  # 5 degree separation
    HIGH = "high"  # 1 degree separation

    @property
    def separation_deg(self) -> float:
        return 5.0 if self is SpatialAmbiguity.LOW else 1.0


class SemanticAmbiguity(enum.Enum):
    LOW = "low"  # five distinct clusters
    HIGH = "high"  # three same-cluster objects plus two distinct


@dataclass(frozen=True)
class AmbiguityCondition:
    spatial: SpatialAmbiguity
    semantic: SemanticAmbiguity

    @property
    def label(self) -> str:
        return f"spatial_{self.spatial.value}-semantic_{self.semantic.value}"


ALL_CONDITIONS = tuple(
    AmbiguityCondition(spatial=sp, semantic=se)
    for sp in SpatialAmbiguity
    for se in SemanticAmbiguity
)


@dataclass
class UserModel:
    """Simulated participant: pointing jitter plus gesture variability.

    Pointing noise is a rotation of the exact eye-to-target direction by a
    N(0, sigma) angle about a uniformly random perpendicular axis; the
    RMS of the resulting angular errors therefore estimates sigma. The
    per-subject offset is drawn once per trial, standing in for a
    population of users.
    """

    gesture_prototypes: dict[int, NormalizedHand]
    pointing_noise_sigma: float = 4.0
    gesture_joint_noise_sigma: float = 0.01
    per_subject_offset_sigma: float = 0.005
    wrist_distance: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.pointing_noise_sigma < 0:
            raise ValueError("pointing_noise_sigma must be non-negative")
        if self.gesture_joint_noise_sigma < 0 or self.per_subject_offset_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")


class TechniqueKind(enum.Enum):
    POINT = "point"
    GRASP = "grasp"
    POINT_AND_GRASP = "point_and_grasp"
    BUBBLERAY = "bubbleray"
    EXPAND = "expand"


@dataclass(frozen=True)
class Technique:
    kind: TechniqueKind
    directional: DirectionalConfig = field(default_factory=default_config)
    expand_threshold: float = 0.10
    expand_error_rate: float = 0.02

    def __post_init__(self):
        if self.expand_threshold <= 0:
            raise ValueError("expand_threshold must be positive")
        if not 0.0 <= self.expand_error_rate <= 1.0:
            raise ValueError("expand_error_rate must be in [0, 1]")

    @property
    def needs_gesture(self) -> bool:
        return self.kind in (TechniqueKind.GRASP, TechniqueKind.POINT_AND_GRASP)


STUDY1_TECHNIQUES = (
    Technique(TechniqueKind.POINT),
    Technique(TechniqueKind.GRASP),
    Technique(TechniqueKind.POINT_AND_GRASP),
)
STUDY2_TECHNIQUES = (
    Technique(TechniqueKind.BUBBLERAY),
    Technique(TechniqueKind.EXPAND),
    Technique(TechniqueKind.POINT_AND_GRASP),
)


# -- scene generation ------------------------------------------------------------


def gen_scene(
    cond: AmbiguityCondition,
    library: ObjectLibrary,
    eye,
    distance: float,
    seed,
) -> tuple[Scene, int]:
    """Five instances on a vertical plane with exact angular separations.

    Candidates sit at eye height so adjacent separations as seen from the
    eye equal the condition's nominal angle exactly. Identity draws follow
    the semantic level; the target is uniform among the five.
    """
    rng = np.random.default_rng(seed)
    eye = np.asarray(eye, dtype=np.float64)
    clusters = library.cluster_ids

    if cond.semantic is SemanticAmbiguity.HIGH:
        rich = [c for c in clusters if len(library.cluster_members(c)) >= 3]
        if not rich or len(clusters) < 3:
            raise InsufficientLibrary(
                "high semantic ambiguity needs a cluster with >= 3 objects and >= 3 clusters"
            )
        main = rich[int(rng.integers(len(rich)))]
        members = library.cluster_members(main)
        trio = [members[i] for i in rng.choice(len(members), size=3, replace=False)]
        others = [c for c in clusters if c != main]
        two = [others[i] for i in rng.choice(len(others), size=2, replace=False)]
        singles = [
            library.cluster_members(c)[int(rng.integers(len(library.cluster_members(c))))]
            for c in two
        ]
        models = trio + singles
    else:
        if len(clusters) < SCENE_SIZE:
            raise InsufficientLibrary(
                f"low semantic ambiguity needs >= {SCENE_SIZE} clusters"
            )
        chosen = [clusters[i] for i in rng.choice(len(clusters), size=SCENE_SIZE, replace=False)]
        models = [
            library.cluster_members(c)[int(rng.integers(len(library.cluster_members(c))))]
            for c in chosen
        ]

    order = rng.permutation(SCENE_SIZE)
    models = [models[i] for i in order]

    sep = np.radians(cond.spatial.separation_deg)
    forward = np.array([0.0, 0.0, -1.0])
    plane = Plane(point=eye + distance * forward, normal=np.array([0.0, 0.0, 1.0]))
    instances = []
    for i, model in enumerate(models):
        alpha = (i - (SCENE_SIZE - 1) / 2.0) * sep
        position = eye + np.array(
            [distance * np.tan(alpha), 0.0, -distance]
        )
        yaw = float(rng.choice((0.0, 120.0, 240.0)) + rng.uniform(-60.0, 60.0))
        instances.append(ObjectInstance(model=model, position=position, yaw=yaw))
    scene = Scene(objects=tuple(instances), reference_plane=plane, eye=eye)
    target = int(rng.integers(SCENE_SIZE))
    return scene, target


# -- simulated user ----------------------------------------------------------------


def _perpendicular_basis(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0])
    if abs(d @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return e1, e2


def _rotate_about(v: np.ndarray, axis: np.ndarray, angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return v * c + np.cross(axis, v) * s + axis * (axis @ v) * (1.0 - c)


def simulate_user(
    target: int,
    scene: Scene,
    user: UserModel,
    rng: np.random.Generator,
    subject_offset: np.ndarray | None = None,
) -> tuple[Ray, HandPose]:
    """A noisy pointing ray and a grasp pose aimed at the target."""
    target_inst = scene.objects[target]
    exact = target_inst.position - scene.eye
    exact = exact / np.linalg.norm(exact)
    if user.pointing_noise_sigma > 0:
        delta = np.radians(rng.normal(0.0, user.pointing_noise_sigma))
        psi = rng.uniform(0.0, 2 * np.pi)
        e1, e2 = _perpendicular_basis(exact)
        axis = np.cos(psi) * e1 + np.sin(psi) * e2
        direction = _rotate_about(exact, axis, delta)
    else:
        direction = exact
    wrist = scene.eye + user.wrist_distance * direction
    ray = Ray(origin=scene.eye, through=wrist)

    proto = user.gesture_prototypes[target_inst.model.cluster_id]
    joints = proto.as_joints().copy()
    if subject_offset is None and user.per_subject_offset_sigma > 0:
        subject_offset = rng.normal(0.0, user.per_subject_offset_sigma, (21, 3))
    if subject_offset is not None:
        joints = joints + subject_offset
    if user.gesture_joint_noise_sigma > 0:
        joints = joints + rng.normal(0.0, user.gesture_joint_noise_sigma, (21, 3))
    joints[0] = 0.0
    rot = yaw_matrix(target_inst.yaw)
    hand = HandPose(joints=joints @ rot.T + wrist)
    return ray, hand


# -- techniques -------------------------------------------------------------------


def technique_point(ray: Ray, scene: Scene, cfg: DirectionalConfig | None = None) -> int:
    """MAP selection from the directional cue alone."""
    lik = directional_likelihoods(ray, scene, cfg)
    return select_map(posterior(uniform_prior(len(scene)), [lik]))


def technique_grasp(
    hand: HandPose,
    scene: Scene,
    net: GraspNet,
    basis: BasisPointSet,
    *,
    encodings: np.ndarray | None = None,
) -> int:
    """MAP selection from the gestural cue alone."""
    lik = gesture_likelihoods(net, hand, scene, basis, encodings=encodings)
    return select_map(posterior(uniform_prior(len(scene)), [lik]))


def technique_point_and_grasp(
    ray: Ray,
    hand: HandPose | None,
    scene: Scene,
    net: GraspNet | None,
    basis: BasisPointSet | None,
    cfg: DirectionalConfig | None = None,
    *,
    uniform_gesture: bool = False,
    encodings: np.ndarray | None = None,
) -> tuple[int, LikelihoodVector, LikelihoodVector]:
    """Fused MAP selection; returns both cue vectors for agreement analysis.

    `uniform_gesture` is the null-gesture bypass: the gestural cue becomes
    a flat vector, so direction alone drives the posterior.
    """
    dvec = directional_likelihoods(ray, scene, cfg)
    if uniform_gesture:
        gvec = uniform_gesture_likelihoods(len(scene))
    else:
        gvec = gesture_likelihoods(net, hand, scene, basis, encodings=encodings)
    post = posterior(uniform_prior(len(scene)), [dvec, gvec])
    return select_map(post), dvec, gvec


def technique_bubbleray(ray: Ray, scene: Scene) -> int:
    """Nearest object by angular distance from the ray; lowest index on ties."""
    angles = [angular_distance(ray, inst.position) for inst in scene.objects]
    return int(np.argmin(angles))


def technique_expand(
    ray: Ray,
    scene: Scene,
    target: int,
    rng: np.random.Generator,
    threshold: float = 0.10,
    second_stage_error_rate: float = 0.02,
) -> tuple[int | None, int]:
    """Two-stage selection: endpoint-threshold gather, then grid refinement.

    Returns (selection, stages); selection is None when no object lies
    within the threshold of the plane endpoint (a miss, one stage). With
    several candidates the simulated user picks the target from the grid
    with probability 1 - second_stage_error_rate when it was gathered,
    otherwise a uniformly wrong candidate (two stages).
    """
    endpoint = ray_plane_endpoint(ray, scene.reference_plane)
    dists = np.linalg.norm(scene.centers() - endpoint, axis=1)
    candidates = np.flatnonzero(dists <= threshold)
    if candidates.size == 0:
        return None, 1
    if candidates.size == 1:
        return int(candidates[0]), 1
    in_grid = target in candidates
    if in_grid and rng.random() >= second_stage_error_rate:
        return target, 2
    wrong = candidates[candidates != target]
    return int(wrong[rng.integers(wrong.size)]), 2


# -- trials and experiments ----------------------------------------------------------


@dataclass(frozen=True)
class TrialLimits:
    max_attempts: int = 4

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


@dataclass
class TrialRecord:
    condition: AmbiguityCondition | None
    technique: TechniqueKind
    target: int
    attempts: int
    success: bool
    cue_agreement: CueAgreement | None
    selections: tuple[int | None, ...]

    def __post_init__(self):
        assert self.attempts >= 1
        if self.success:
            assert self.selections and self.selections[-1] == self.target


def run_trial(
    technique: Technique,
    scene: Scene,
    target: int,
    user: UserModel,
    limits: TrialLimits,
    rng: np.random.Generator,
    *,
    net: GraspNet | None = None,
    basis: BasisPointSet | None = None,
    condition: AmbiguityCondition | None = None,
) -> TrialRecord:
    """Retry with fresh cue noise until success or the budget runs out.

    Every attempt consumes one budget unit per interaction stage (one for
    single-shot techniques, up to two for the two-stage one). The
    agreement class reflects the final attempt's cue vectors.
    """
    if technique.needs_gesture and (net is None or basis is None):
        raise ValueError(f"{technique.kind.value} requires a trained net and basis")
    encodings = None
    if technique.needs_gesture:
        encodings = scene_encodings(scene, basis, net.bps_scale)
    subject_offset = None
    if user.per_subject_offset_sigma > 0:
        subject_offset = rng.normal(0.0, user.per_subject_offset_sigma, (21, 3))

    used = 0
    success = False
    selections: list[int | None] = []
    agreement = None
    while used < limits.max_attempts and not success:
        ray, hand = simulate_user(target, scene, user, rng, subject_offset=subject_offset)
        kind = technique.kind
        if kind is TechniqueKind.POINT:
            selection, cost = technique_point(ray, scene, technique.directional), 1
        elif kind is TechniqueKind.GRASP:
            selection, cost = (
                technique_grasp(hand, scene, net, basis, encodings=encodings),
                1,
            )
        elif kind is TechniqueKind.POINT_AND_GRASP:
            selection, dvec, gvec = technique_point_and_grasp(
                ray, hand, scene, net, basis, technique.directional, encodings=encodings
            )
            agreement = classify_cue_agreement(target, dvec, gvec)
            cost = 1
        elif kind is TechniqueKind.BUBBLERAY:
            selection, cost = technique_bubbleray(ray, scene), 1
        else:
            try:
                selection, cost = technique_expand(
                    ray,
                    scene,
                    target,
                    rng,
                    threshold=technique.expand_threshold,
                    second_stage_error_rate=technique.expand_error_rate,
                )
            except NoIntersection:
                selection, cost = None, 1
        used += cost
        selections.append(selection)
        success = selection == target
    return TrialRecord(
        condition=condition,
        technique=technique.kind,
        target=target,
        attempts=used,
        success=success,
        cue_agreement=agreement if technique.kind is TechniqueKind.POINT_AND_GRASP else None,
        selections=tuple(selections),
    )


# -- experiment harness ---------------------------------------------------------


@dataclass(frozen=True)
class ExperimentDesign:
    conditions: tuple[AmbiguityCondition, ...] = ALL_CONDITIONS
    techniques: tuple[Technique, ...] = STUDY1_TECHNIQUES
    reps: int = 1000
    distance: float = 2.0
    eye: tuple[float, float, float] = (0.0, 1.6, 0.0)
    limits: TrialLimits = field(default_factory=TrialLimits)
    bootstrap_samples: int = 1000

    def __post_init__(self):
        if self.reps < 0:
            raise ValueError("reps must be non-negative")
        if self.distance <= 0:
            raise ValueError("distance must be positive")


@dataclass
class CellStats:
    condition: AmbiguityCondition
    technique: TechniqueKind
    n_trials: int
    completion_rate: float | None
    completion_ci: tuple[float, float] | None
    mean_attempts: float | None
    attempts_ci: tuple[float, float] | None
    attempt_histogram: dict[int, int] = field(default_factory=dict)
    agreement_success: dict[str, int] = field(default_factory=dict)
    agreement_failure: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.completion_rate is not None:
            assert 0.0 <= self.completion_rate <= 1.0


@dataclass
class ExperimentReport:
    seed: int
    design: ExperimentDesign
    cells: list[CellStats]
    trials: list[TrialRecord]

    def cell(self, condition: AmbiguityCondition, kind: TechniqueKind) -> CellStats:
        for c in self.cells:
            if c.condition == condition and c.technique == kind:
                return c
        raise KeyError(f"no cell for {condition.label} x {kind.value}")


def _bootstrap_ci(
    values: np.ndarray, rng: np.random.Generator, n_resamples: int
) -> tuple[float, float]:
    if values.size == 0:
        return (0.0, 0.0)
    means = np.empty(n_resamples)
    for i in range(n_resamples):
        means[i] = values[rng.integers(0, values.size, values.size)].mean()
    return (float(np.quantile(means, 0.025)), float(np.quantile(means, 0.975)))


def run_experiment(
    design: ExperimentDesign,
    library: ObjectLibrary,
    user: UserModel,
    seed: int,
    *,
    net: GraspNet | None = None,
    basis: BasisPointSet | None = None,
) -> ExperimentReport:
    """Full factorial sweep with per-trial seed spawning and bootstrap CIs.

    Trial t of each run draws its scene and its user noise from
    SeedSequence(seed, spawn_key=(t, 0)) and (t, 1), so the report is a
    pure function of (design, seed) and trials never share streams.
    """
    cells: list[CellStats] = []
    trials: list[TrialRecord] = []
    boot_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1, 0, 0)))
    trial_index = 0
    for condition in design.conditions:
        for technique in design.techniques:
            records: list[TrialRecord] = []
            for _ in range(design.reps):
                scene_seed = np.random.SeedSequence(entropy=seed, spawn_key=(0, trial_index, 0))
                user_seed = np.random.SeedSequence(entropy=seed, spawn_key=(0, trial_index, 1))
                trial_index += 1
                scene, target = gen_scene(
                    condition, library, design.eye, design.distance, scene_seed
                )
                record = run_trial(
                    technique,
                    scene,
                    target,
                    user,
                    design.limits,
                    np.random.default_rng(user_seed),
                    net=net,
                    basis=basis,
                    condition=condition,
                )
                records.append(record)
            trials += records
            if records:
                success = np.array([r.success for r in records], dtype=float)
                attempts = np.array([r.attempts for r in records], dtype=float)
                completion = float(success.mean())
                completion_ci = _bootstrap_ci(success, boot_rng, design.bootstrap_samples)
                mean_attempts = float(attempts.mean())
                attempts_ci = _bootstrap_ci(attempts, boot_rng, design.bootstrap_samples)
                histogram = dict(sorted(Counter(r.attempts for r in records).items()))
            else:
                completion = completion_ci = mean_attempts = attempts_ci = None
                histogram = {}
            agreement_success: Counter[str] = Counter()
            agreement_failure: Counter[str] = Counter()
            for r in records:
                if r.cue_agreement is not None:
                    bucket = agreement_success if r.success else agreement_failure
                    bucket[r.cue_agreement.value] += 1
            cells.append(
                CellStats(
                    condition=condition,
                    technique=technique.kind,
                    n_trials=len(records),
                    completion_rate=completion,
                    completion_ci=completion_ci,
                    mean_attempts=mean_attempts,
                    attempts_ci=attempts_ci,
                    attempt_histogram=histogram,
                    agreement_success=dict(agreement_success),
                    agreement_failure=dict(agreement_failure),
                )
            )
    return ExperimentReport(seed=seed, design=design, cells=cells, trials=trials)


# -- report serialization -----------------------------------------------------------


def write_report_csv(report: ExperimentReport, path) -> None:
    """One row per condition-technique cell."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "spatial",
                "semantic",
                "technique",
                "n_trials",
                "completion_rate",
                "completion_lo",
                "completion_hi",
                "mean_attempts",
                "attempts_lo",
                "attempts_hi",
                "agreement_success",
                "agreement_failure",
            ]
        )
        for c in report.cells:
            writer.writerow(
                [
                    c.condition.spatial.value,
                    c.condition.semantic.value,
                    c.technique.value,
                    c.n_trials,
                    "" if c.completion_rate is None else f"{c.completion_rate:.6f}",
                    "" if c.completion_ci is None else f"{c.completion_ci[0]:.6f}",
                    "" if c.completion_ci is None else f"{c.completion_ci[1]:.6f}",
                    "" if c.mean_attempts is None else f"{c.mean_attempts:.6f}",
                    "" if c.attempts_ci is None else f"{c.attempts_ci[0]:.6f}",
                    "" if c.attempts_ci is None else f"{c.attempts_ci[1]:.6f}",
                    json.dumps(c.agreement_success, sort_keys=True),
                    json.dumps(c.agreement_failure, sort_keys=True),
                ]
            )


def write_trials_jsonl(trials: list[TrialRecord], path) -> None:
    with Path(path).open("w") as fh:
        for t in trials:
            fh.write(
                json.dumps(
                    {
                        "condition": None if t.condition is None else t.condition.label,
                        "technique": t.technique.value,
                        "target": t.target,
                        "attempts": t.attempts,
                        "success": t.success,
                        "cue_agreement": (
                            None if t.cue_agreement is None else t.cue_agreement.value
                        ),
                        "selections": list(t.selections),
                    }
                )
                + "\n"
            )
