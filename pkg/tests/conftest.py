from pathlib import Path

import pytest

from frontalnav.simworld import load_world

DATA = Path(__file__).resolve().parents[1] / "src" / "frontalnav" / "data"
WORLDS = DATA / "worlds"
SUITES = DATA / "suites"


@pytest.fixture(scope="session")
def worlds():
    return {p.stem: load_world(p) for p in sorted(WORLDS.glob("*.json"))}


@pytest.fixture(scope="session")
def data_dir():
    return DATA


def suite_episode(suite, episode_id):
    """(spec, world, scripted provider) for one bundled suite episode."""
    from frontalnav.backend import ScriptedProvider
    from frontalnav.simworld import load_episode

    root = SUITES / suite
    spec = load_episode(root / "episodes" / f"{episode_id}.json")
    world = load_world(WORLDS / f"{spec.world}.json")
    return spec, world, ScriptedProvider.from_file(root / "script.json")
