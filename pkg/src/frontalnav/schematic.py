"""Flat-shaded schematic RGB views used as image attachments."""

from __future__ import annotations

import io
import math
import zlib

import numpy as np
from PIL import Image, ImageDraw

from .perception import CameraIntrinsics
from .semantics import visible_objects
from .simworld import AgentPose, WorldMap, column_ranges

CAMERA_HEIGHT = 1.25
WALL_HEIGHT = 2.5
SKY = (205, 215, 225)
FLOOR = (150, 130, 110)


def tag_color(tag: str) -> tuple[int, int, int]:
    h = zlib.crc32(tag.encode("utf-8"))
    return (60 + h % 180, 60 + (h >> 8) % 180, 60 + (h >> 16) % 180)


def render_schematic(
    world: WorldMap,
    pose: AgentPose,
    heading_offset: float,
    intr: CameraIntrinsics,
    size: tuple[int, int] = (128, 96),
    max_range: float = 10.0,
    object_range: float = 8.0,
) -> bytes:
    """PNG bytes: gray walls shaded by distance, objects as labelled boxes."""
    w, h = size
    view = CameraIntrinsics.from_fov(w, h, intr.hfov)
    ranges = column_ranges(world, pose, heading_offset, view, max_range)
    depth = ranges * np.cos(np.radians(view.column_angles()))

    img = np.empty((h, w, 3), dtype=np.uint8)
    img[: h // 2] = SKY
    img[h // 2 :] = FLOOR
    rows = np.arange(h)[:, None]
    top = view.cy - (WALL_HEIGHT - CAMERA_HEIGHT) * view.fy / depth
    bottom = view.cy + CAMERA_HEIGHT * view.fy / depth
    wall = (rows >= top[None, :]) & (rows <= bottom[None, :]) & (ranges < max_range)[None, :]
    shade = np.clip(200 - 12 * depth, 70, 200).astype(np.uint8)
    img[wall] = np.broadcast_to(shade[None, :, None], (h, w, 3))[wall]

    pil = Image.fromarray(img, "RGB")
    draw = ImageDraw.Draw(pil)
    objs = visible_objects(world, pose, heading_offset, intr.hfov, object_range)
    for tag, az, dist in sorted(objs, key=lambda o: -o[2]):
        u = view.cx + view.fx * math.tan(math.radians(az))
        half = max(2.0, 0.5 * view.fx / max(dist, 0.1))
        v_floor = view.cy + CAMERA_HEIGHT * view.fy / max(dist, 0.1)
        box = (u - half, v_floor - 2 * half, u + half, v_floor)
        draw.rectangle(box, fill=tag_color(tag))
        draw.text((u - half, v_floor - 2 * half - 10), tag, fill=(0, 0, 0))
    buf = io.BytesIO()
    pil.save(buf, format="PNG", optimize=False)
    return buf.getvalue()
