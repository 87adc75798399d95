"""Per-view object tags.

The recognition model is replaced by a ground-truth tagger that reads the
world's labelled objects. Anything exposing ``tag(world, pose,
heading_offset, intr, view_id)`` can stand in for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Union

from .perception import CameraIntrinsics
from .simworld import AgentPose, WorldMap, segment_blocked, signed_angle

ViewId = Union[str, int]


@dataclass(frozen=True)
class ObjectList:
    view_id: ViewId
    tags: tuple = ()

    def __post_init__(self):
        if len(set(self.tags)) != len(self.tags):
            raise ValueError(f"duplicate tags in view {self.view_id}: {self.tags}")
        for t in self.tags:
            if not t or t != t.lower():
                raise ValueError(f"tag {t!r} must be a non-empty lowercase string")


class Tagger(Protocol):
    def tag(
        self,
        world: WorldMap,
        pose: AgentPose,
        heading_offset: float,
        intr: CameraIntrinsics,
        view_id: ViewId,
    ) -> ObjectList: ...


def visible_objects(
    world: WorldMap,
    pose: AgentPose,
    heading_offset: float,
    hfov: float,
    max_range: float = 8.0,
) -> list[tuple[str, float, float]]:
    """``(tag, azimuth, distance)`` for every object centre in view.

    ``heading_offset`` and the returned azimuths are right-positive, matching
    the perception module.
    """
    axis = pose.heading - heading_offset
    walls = world.wall_array
    found = []
    for obj in world.objects:
        dx, dz = obj.center[0] - pose.x, obj.center[1] - pose.z
        dist = math.hypot(dx, dz)
        if dist > max_range:
            continue
        if dist == 0:
            az = 0.0
        else:
            az = -signed_angle(math.degrees(math.atan2(dz, dx)) - axis)
        if abs(az) > hfov / 2:
            continue
        if segment_blocked(pose.position, obj.center, walls):
            continue
        found.append((obj.tag, az, dist))
    return found


def tag_objects_fixture(
    world: WorldMap,
    pose: AgentPose,
    heading_offset: float,
    intr: CameraIntrinsics,
    max_range: float = 8.0,
    view_id: ViewId = "F",
) -> ObjectList:
    """Nearest-first, de-duplicated tags of visible objects."""
    seen = sorted(visible_objects(world, pose, heading_offset, intr.hfov, max_range), key=lambda v: (v[2], v[0]))
    tags: list[str] = []
    for tag, _, _ in seen:
        if tag not in tags:
            tags.append(tag)
    return ObjectList(view_id, tuple(tags))


@dataclass(frozen=True)
class FixtureTagger:
    max_range: float = 8.0

    def tag(self, world, pose, heading_offset, intr, view_id="F") -> ObjectList:
        return tag_objects_fixture(world, pose, heading_offset, intr, self.max_range, view_id)


TAGGERS = {"fixture": FixtureTagger}


def make_tagger(kind: str = "fixture", **kwargs) -> Tagger:
    try:
        return TAGGERS[kind](**kwargs)
    except KeyError:
        raise ValueError(f"unknown tagger {kind!r}; available: {sorted(TAGGERS)}") from None
