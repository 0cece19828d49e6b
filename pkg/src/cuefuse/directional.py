"""Directional-cue likelihoods: a Gaussian in the deviation between the
ray and each candidate object.

Two deviation metrics are supported:

* ``ANGULAR`` (default): degrees between the ray direction and the
  eye-to-center direction; sigma_d is in degrees. The default
  sigma_d = 0.4 matches targets spanning roughly 1-2 degrees of
  visual angle.
* ``PLANAR_EUCLIDEAN``: meters between the ray's endpoint on the
  reference plane and the object center; sigma_d is in meters.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .fusion import LikelihoodVector
from .geometry import Ray, Scene, angular_distance, ray_plane_endpoint

# Far-off objects would otherwise underflow exp() to exactly 0; the floor
# keeps every value strictly positive so downstream log-space fusion stays
# finite. It is ~8 orders of magnitude below any deviation that matters.
UNDERFLOW_FLOOR = 1e-300


class DeviationMetric(enum.Enum):
    PLANAR_EUCLIDEAN = "planar_euclidean"
    ANGULAR = "angular"


@dataclass(frozen=True)
class DirectionalConfig:
    sigma_d: float = 0.4
    metric: DeviationMetric = DeviationMetric.ANGULAR

    def __post_init__(self):
        if not self.sigma_d > 0:
            raise ValueError("sigma_d must be positive")


def default_config() -> DirectionalConfig:
    """sigma_d = 0.4 on the angular metric."""
    return DirectionalConfig(sigma_d=0.4, metric=DeviationMetric.ANGULAR)


def directional_likelihoods(
    ray: Ray, scene: Scene, cfg: DirectionalConfig | None = None
) -> LikelihoodVector:
    """exp(-d^2 / (2 sigma_d^2)) per object, unnormalized in (0, 1].

    d is the configured deviation of each object center from the ray.
    """
    if cfg is None:
        cfg = default_config()
    if cfg.metric is DeviationMetric.PLANAR_EUCLIDEAN:
        endpoint = ray_plane_endpoint(ray, scene.reference_plane)
        deviations = [
            float(((inst.position - endpoint) ** 2).sum() ** 0.5)
            for inst in scene.objects
        ]
    else:
        deviations = [angular_distance(ray, inst.position) for inst in scene.objects]
    denom = 2.0 * cfg.sigma_d * cfg.sigma_d
    values = [max(math.exp(-(d * d) / denom), UNDERFLOW_FLOOR) for d in deviations]
    return LikelihoodVector(cue_name="direction", values=values)
