import io

from PIL import Image

from frontalnav.perception import CameraIntrinsics
from frontalnav.schematic import render_schematic
from frontalnav.simworld import AgentPose


def test_schematic_is_png_of_requested_size(worlds):
    data = render_schematic(worlds["three_room"], AgentPose(2, 3.6, 0), 0.0, CameraIntrinsics.from_fov(128, 96, 60), (64, 48))
    img = Image.open(io.BytesIO(data))
    assert img.format == "PNG" and img.size == (64, 48) and img.mode == "RGB"


def test_schematic_deterministic_and_view_dependent(worlds):
    intr = CameraIntrinsics.from_fov(256, 192, 90)
    pose = AgentPose(2, 3.6, 0)
    a = render_schematic(worlds["three_room"], pose, 0.0, intr)
    assert a == render_schematic(worlds["three_room"], pose, 0.0, intr)
    assert a != render_schematic(worlds["three_room"], pose, 180.0, intr)
