"""Bayesian integration of per-cue likelihoods over candidate objects.

The posterior over candidates is ``prior * prod(likelihoods)`` normalized;
accumulation happens in log space with max-subtraction so that many cues
cannot underflow. Exact zeros in likelihoods are allowed (pruning-style
cues produce them); only an all-zero evidence vector is an error.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroEvidence, LengthMismatch

NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LikelihoodVector:
    """One non-negative likelihood value per scene object, in scene order."""

    cue_name: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("likelihood values must be a non-empty 1-D vector")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"cue {self.cue_name!r} has non-finite likelihoods")
        if np.any(values < 0):
            raise ValueError(f"cue {self.cue_name!r} has negative likelihoods")
        if not np.any(values > 0):
            raise ValueError(f"cue {self.cue_name!r} is identically zero")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class Prior:
    """Strictly positive prior over candidates, summing to 1."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("prior must be a non-empty 1-D vector")
        if np.any(values <= 0):
            raise ValueError("prior values must be strictly positive")
        if abs(values.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError("prior must sum to 1")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


def uniform_prior(n: int) -> Prior:
    return Prior(values=np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class Posterior:
    """Normalized posterior over candidates."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("posterior must be a non-empty 1-D vector")
        if np.any(values < 0):
            raise ValueError("posterior values must be non-negative")
        if abs(values.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError("posterior must sum to 1")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


class CueAgreement(enum.Enum):
    """Which individual cue alone ranked the target highest."""

    BOTH = "both"
    GESTURE_ONLY = "gesture_only"
    DIRECTION_ONLY = "direction_only"
    NEITHER = "neither"


def posterior(prior: Prior, cues: list[LikelihoodVector]) -> Posterior:
    """Fuse per-cue likelihood vectors with the prior via Bayes' rule.

    values[i] = prior[i] * prod_m cues_m[i], normalized over candidates.
    """
    n = len(prior)
    for cue in cues:
        if len(cue) != n:
            raise LengthMismatch(
                f"cue {cue.cue_name!r} has {len(cue)} values, prior has {n}"
            )
    with np.errstate(divide="ignore"):
        logs = np.log(prior.values)
        for cue in cues:
            logs = logs + np.log(cue.values)
    m = logs.max()
    if m == -np.inf:
        raise AllZeroEvidence("every candidate has zero evidence")
    p = np.exp(logs - m)
    return Posterior(values=p / p.sum())


def select_map(post: Posterior) -> int:
    """Index of the maximum-posterior object; ties go to the lowest index."""
    return int(np.argmax(post.values))


def classify_cue_agreement(
    target: int, directional: LikelihoodVector, gestural: LikelihoodVector
) -> CueAgreement:
    """Per-trial agreement class: which cue's argmax hit the target."""
    if len(directional) != len(gestural):
        raise LengthMismatch(
            f"directional has {len(directional)} values, gestural has {len(gestural)}"
        )
    dir_hit = int(np.argmax(directional.values)) == target
    ges_hit = int(np.argmax(gestural.values)) == target
    if dir_hit and ges_hit:
        return CueAgreement.BOTH
    if ges_hit:
        return CueAgreement.GESTURE_ONLY
    if dir_hit:
        return CueAgreement.DIRECTION_ONLY
    return CueAgreement.NEITHER
