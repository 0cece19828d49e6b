"""Dataset schema, JSON-lines ingestion, and the three split protocols.

A dataset row pairs one elicited grasp gesture with one probed object and
the subject's compatibility judgments under the in-reach and out-of-reach
conditions. The on-disk format is JSON lines, one record per line:

    {"subject_id": "s01", "trial_id": "s01-0007", "object_id": "mug_2",
     "object_yaw": 118.4,
     "hand_out_of_reach": [[x, y, z], ... 21 rows],
     "hand_in_reach": null | [[x, y, z], ... 21 rows],
     "compat_in_reach": "yes" | "no" | "unsure" | "missing",
     "compat_out_of_reach": "yes" | "no" | "unsure"}
"""

from __future__ import annotations

import enum
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bps import BasisPointSet, bps_encode
from .errors import (
    MissingJoints,
    ParseError,
    TooFewRecords,
    TooFewSubjects,
    UnknownObject,
)
from .geometry import HandPose, ObjectInstance, to_canonical_cloud, to_canonical_hand
from .graspnet import Condition, LabeledPair
from .library import ObjectLibrary


class Compat(enum.Enum):
    YES = "yes"
    NO = "no"
    UNSURE = "unsure"
    MISSING = "missing"


class UnsurePolicy(enum.Enum):
    DROP = "drop"
    SOFT05 = "soft05"


class SplitKind(enum.Enum):
    WITHIN_SUBJECT = "within-subject"
    CROSS_SUBJECT = "cross-subject"
    CROSS_OBJECT = "cross-object"


@dataclass(frozen=True, eq=False)
class OrgRecord:
    subject_id: str
    trial_id: str
    object_id: str
    object_yaw: float
    hand_out_of_reach: HandPose
    hand_in_reach: HandPose | None = None
    compat_in_reach: Compat = Compat.MISSING
    compat_out_of_reach: Compat = Compat.NO

    def __post_init__(self):
        if self.compat_out_of_reach is Compat.MISSING:
            raise ValueError("out-of-reach judgment cannot be missing")


@dataclass(frozen=True, eq=False)
class Dataset:
    records: tuple[OrgRecord, ...]
    library: ObjectLibrary

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for rec in self.records:
            if rec.object_id not in self.library:
                raise UnknownObject(f"record {rec.trial_id!r}: {rec.object_id!r}")

    def __len__(self) -> int:
        return len(self.records)

    def subject_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.subject_id)
        return list(seen)

    def replace_records(self, records) -> "Dataset":
        return Dataset(records=tuple(records), library=self.library)


@dataclass(frozen=True)
class SplitSpec:
    kind: SplitKind
    ratio: float = 0.8
    holdout: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind is not SplitKind.CROSS_OBJECT and not 0.0 < self.ratio < 1.0:
            raise ValueError("split ratio must lie in (0, 1)")


@dataclass
class LoadReport:
    path: str
    n_records: int
    label_counts: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


_COMPAT_IN = {c.value: c for c in Compat}
_COMPAT_OUT = {c.value: c for c in Compat if c is not Compat.MISSING}


def _parse_hand(raw, line: int, key: str) -> HandPose:
    arr = np.asarray(raw, dtype=np.float64)
    if arr.shape != (21, 3):
        raise MissingJoints(f"line {line}: {key} has shape {arr.shape}, expected (21, 3)")
    return HandPose(joints=arr)


def load_org(path, library: ObjectLibrary) -> tuple[Dataset, LoadReport]:
    """Parse an org JSON-lines file against the given object library."""
    path = Path(path)
    records: list[OrgRecord] = []
    counts: Counter[str] = Counter()
    warnings: list[str] = []
    with path.open() as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), line=line_no) from exc
            try:
                object_id = str(row["object_id"])
                if object_id not in library:
                    raise UnknownObject(f"line {line_no}: unknown object {object_id!r}")
                hand_in = row.get("hand_in_reach")
                record = OrgRecord(
                    subject_id=str(row["subject_id"]),
                    trial_id=str(row["trial_id"]),
                    object_id=object_id,
                    object_yaw=float(row["object_yaw"]),
                    hand_out_of_reach=_parse_hand(
                        row["hand_out_of_reach"], line_no, "hand_out_of_reach"
                    ),
                    hand_in_reach=(
                        None if hand_in is None else _parse_hand(hand_in, line_no, "hand_in_reach")
                    ),
                    compat_in_reach=_COMPAT_IN[str(row.get("compat_in_reach", "missing"))],
                    compat_out_of_reach=_COMPAT_OUT[str(row["compat_out_of_reach"])],
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad record: {exc!r}", line=line_no) from exc
            records.append(record)
            counts[
                f"{record.compat_in_reach.value}/{record.compat_out_of_reach.value}"
            ] += 1
    if not records:
        warnings.append("file contained no records")
    dataset = Dataset(records=tuple(records), library=library)
    report = LoadReport(
        path=str(path),
        n_records=len(records),
        label_counts=dict(sorted(counts.items())),
        warnings=warnings,
    )
    return dataset, report


# -- splits --------------------------------------------------------------------


def split_within_subject(
    ds: Dataset, ratio: float = 0.8, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Per-subject shuffle and partition; floor(ratio*n) to train, both sides >= 1."""
    by_subject: dict[str, list[int]] = defaultdict(list)
    for i, rec in enumerate(ds.records):
        by_subject[rec.subject_id].append(i)
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for subject in sorted(by_subject):
        idx = by_subject[subject]
        if len(idx) < 2:
            raise TooFewRecords(f"subject {subject!r} has {len(idx)} record(s)")
        order = rng.permutation(len(idx))
        n_train = int(np.floor(ratio * len(idx)))
        n_train = min(max(n_train, 1), len(idx) - 1)
        shuffled = [idx[j] for j in order]
        train_idx += shuffled[:n_train]
        test_idx += shuffled[n_train:]
    train_idx.sort()
    test_idx.sort()
    return (
        ds.replace_records(ds.records[i] for i in train_idx),
        ds.replace_records(ds.records[i] for i in test_idx),
    )


def split_cross_subject(
    ds: Dataset, ratio: float = 0.7, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Disjoint subject sets: ceil(ratio*S) subjects train, the rest test."""
    subjects = sorted({rec.subject_id for rec in ds.records})
    if len(subjects) < 2:
        raise TooFewSubjects(f"need at least 2 subjects, have {len(subjects)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(subjects))
    n_train = int(np.ceil(ratio * len(subjects)))
    train_subjects = {subjects[i] for i in order[:n_train]}
    if len(train_subjects) == len(subjects):
        raise TooFewSubjects("test side would be empty at this ratio")
    train = [r for r in ds.records if r.subject_id in train_subjects]
    test = [r for r in ds.records if r.subject_id not in train_subjects]
    return ds.replace_records(train), ds.replace_records(test)


def split_cross_object(
    ds: Dataset, holdout: list[str]
) -> tuple[Dataset, Dataset]:
    """Records of held-out objects go to test; those objects never reach train."""
    for object_id in holdout:
        if object_id not in ds.library:
            raise UnknownObject(f"holdout id {object_id!r} not in library")
    held = set(holdout)
    train = [r for r in ds.records if r.object_id not in held]
    test = [r for r in ds.records if r.object_id in held]
    return ds.replace_records(train), ds.replace_records(test)


def apply_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    if spec.kind is SplitKind.WITHIN_SUBJECT:
        return split_within_subject(ds, spec.ratio, spec.seed)
    if spec.kind is SplitKind.CROSS_SUBJECT:
        return split_cross_subject(ds, spec.ratio, spec.seed)
    return split_cross_object(ds, list(spec.holdout))


# -- pair conversion -------------------------------------------------------------


def to_labeled_pairs(
    ds: Dataset,
    condition: Condition,
    unsure_policy: UnsurePolicy,
    basis: BasisPointSet,
    scale: float,
) -> list[LabeledPair]:
    """Normalize hands, encode objects, and map judgments to labels.

    Yes -> 1, No -> 0; Unsure is dropped or mapped to 0.5 per policy.
    Records without data for the requested condition are skipped.
    BPS encodings are cached per (object, yaw) since scenes repeat poses.
    """
    label_map = {Compat.YES: 1.0, Compat.NO: 0.0}
    pairs: list[LabeledPair] = []
    cache: dict[tuple[str, float], np.ndarray] = {}
    for rec in ds.records:
        if condition is Condition.IN_REACH:
            hand, compat = rec.hand_in_reach, rec.compat_in_reach
        else:
            hand, compat = rec.hand_out_of_reach, rec.compat_out_of_reach
        if hand is None or compat is Compat.MISSING:
            continue
        if compat is Compat.UNSURE:
            if unsure_policy is UnsurePolicy.DROP:
                continue
            label = 0.5
        else:
            label = label_map[compat]
        instance = ObjectInstance(
            model=ds.library.get(rec.object_id),
            position=np.zeros(3),
            yaw=rec.object_yaw,
        )
        key = (rec.object_id, instance.yaw)
        if key not in cache:
            cache[key] = bps_encode(to_canonical_cloud(instance), basis, scale)
        pairs.append(
            LabeledPair(
                hand=to_canonical_hand(hand, instance),
                object_bps=cache[key],
                label=label,
                subject_id=rec.subject_id,
                object_id=rec.object_id,
                condition=condition,
            )
        )
    return pairs
