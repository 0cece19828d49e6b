"""Object library: named canonical point clouds with cluster ids.

File format: a JSON document holding an array of
``{"id": str, "cluster_id": int, "canonical_cloud": [[x, y, z], ...]}``.
Clouds are recentered on load (centroid to origin); the applied offset per
object is recorded in the load report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, UnknownObject
from .geometry import ObjectModel


@dataclass(frozen=True, eq=False)
class ObjectLibrary:
    """Ordered collection of object models, addressable by id."""

    models: tuple[ObjectModel, ...]

    def __post_init__(self):
        ids = [m.id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate object ids in library")
        object.__setattr__(self, "_by_id", {m.id: m for m in self.models})

    def __len__(self) -> int:
        return len(self.models)

    def __contains__(self, object_id: str) -> bool:
        return object_id in self._by_id  # type: ignore[attr-defined]

    def __iter__(self):
        return iter(self.models)

    def get(self, object_id: str) -> ObjectModel:
        try:
            return self._by_id[object_id]  # type: ignore[attr-defined]
        except KeyError:
            raise UnknownObject(f"object id {object_id!r} not in library") from None

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.models]

    @property
    def cluster_ids(self) -> list[int]:
        return sorted({m.cluster_id for m in self.models})

    def cluster_members(self, cluster_id: int) -> list[ObjectModel]:
        return [m for m in self.models if m.cluster_id == cluster_id]

    @property
    def max_radius(self) -> float:
        """Largest canonical-cloud radius; the shared BPS normalization scale."""
        return max(m.radius for m in self.models)


@dataclass
class LibraryLoadReport:
    """What the loader did: per-object recentering offsets and counts."""

    path: str
    n_objects: int
    recenter_offsets: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    @property
    def max_offset(self) -> float:
        if not self.recenter_offsets:
            return 0.0
        return max(float(np.linalg.norm(v)) for v in self.recenter_offsets.values())


def load_object_library(path) -> tuple[ObjectLibrary, LibraryLoadReport]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in object library {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"object library {path} must be a JSON array")
    models = []
    offsets = {}
    for i, entry in enumerate(raw):
        try:
            model = ObjectModel(
                id=str(entry["id"]),
                canonical_cloud=np.asarray(entry["canonical_cloud"], dtype=np.float64),
                cluster_id=int(entry["cluster_id"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad library entry #{i}: {exc}") from exc
        models.append(model)
        offsets[model.id] = tuple(float(x) for x in model.recenter_offset)
    library = ObjectLibrary(models=tuple(models))
    report = LibraryLoadReport(
        path=str(path), n_objects=len(models), recenter_offsets=offsets
    )
    return library, report


def save_object_library(library: ObjectLibrary, path) -> None:
    entries = [
        {
            "id": m.id,
            "cluster_id": m.cluster_id,
            "canonical_cloud": [[float(c) for c in p] for p in m.canonical_cloud],
        }
        for m in library.models
    ]
    Path(path).write_text(json.dumps(entries))
