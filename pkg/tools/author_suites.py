"""Expand compact navigation plans into the bundled scripted suites.

Each plan entry is one provider decision. The tool writes episode files,
a script keyed by (episode, ordinal, kind, attempt) and a run config per
suite. Output is checked in; rerun only when a plan changes:

    python3 tools/author_suites.py
"""

from __future__ import annotations

import json
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "frontalnav" / "data"

OPTION_VIEW = {"A": 1, "B": 1, "C": 2, "D": 3, "E": 3, "F": 2}
OPTION_DEGREE = {"A": 60, "B": 30, "D": 30, "E": 60}
OPTION_WORDS = {
    "A": "turn left 60 degrees and move forward",
    "B": "turn left 30 degrees and move forward",
    "C": "keep straight",
    "D": "turn right 30 degrees and move forward",
    "E": "turn right 60 degrees and move forward",
    "F": "stop here",
}


def I(image, dist, **kw):
    return dict(kind="initial", image=image, dist=dist, **kw)


def S(option, dist, **kw):
    return dict(kind="step", option=option, dist=dist, **kw)


def D(image, dist, **kw):
    return dict(kind="disambiguation", image=image, dist=dist, **kw)


def _progress(subgoals, done, initial=False):
    out = []
    for i, g in enumerate(subgoals):
        if initial:
            status = "In Progress" if i == 0 else "Not Started"
        elif i < done:
            status = "Completed"
        elif i == done:
            status = "In Progress"
        else:
            status = "Not Started"
        out.append({"subgoal": g, "status": status})
    return out


def _summary(moves):
    return "; ".join(moves) if moves else "I have not moved yet"


def expand(ep_id, subgoals, plan):
    """Turn a plan into script entries; ``done`` carries forward between decisions."""
    entries, moves, done = [], [], 0
    for ordinal, step in enumerate(plan):
        done = step.get("done", done)
        kind = step["kind"]
        if kind == "initial":
            words = f"face view {step['image']} and move {step['dist']} m"
            reply = {
                "Thought": step.get("thought", f"The route starts toward view {step['image']}."),
                "Selected Image": step["image"],
                "Safe Distance": step["dist"],
                "Trajectory Summary": _summary(moves + [words]),
                "Instruction Progress": _progress(subgoals, 0, initial=True),
            }
        elif kind == "step":
            opt = step["option"]
            words = OPTION_WORDS[opt] + (f" {step['dist']} m" if opt != "F" else "")
            reply = {
                "Thought": step.get("thought", f"Best move now: {OPTION_WORDS[opt]}."),
                "Selected Image": OPTION_VIEW[opt],
                "Action Options": opt,
                "Degree": OPTION_DEGREE.get(opt),
                "Safe Distance": step["dist"],
                "Confuse": step.get("confuse", False),
                "Updated History": {
                    "Trajectory Summary": _summary(moves + [words]),
                    "Instruction Progress": _progress(subgoals, done),
                },
            }
        else:
            words = f"rescanned and chose view {step['image']} for {step['dist']} m"
            reply = {
                "Thought": step.get("thought", f"After looking around, view {step['image']} fits best."),
                "Selected Image": step["image"],
                "Safe Distance": step["dist"],
                "Updated History": {
                    "Trajectory Summary": _summary(moves + [words]),
                    "Instruction Progress": _progress(subgoals, done),
                },
            }
        moves.append(words)
        attempt = 0
        for bad in step.get("garbage", []):
            entries.append(dict(episode=ep_id, ordinal=ordinal, kind=kind, attempt=attempt, response=bad))
            attempt += 1
        entries.append(dict(episode=ep_id, ordinal=ordinal, kind=kind, attempt=attempt, response=reply))
    return entries


def episode(ep_id, world, start, goal, instruction, subgoals, reference, plan, radius=3.0):
    return dict(
        spec={
            "id": ep_id,
            "world": world,
            "start": {"x": start[0], "z": start[1], "heading": start[2]},
            "goal": list(goal),
            "instruction": instruction,
            "success_radius": radius,
            "reference_path": [list(p) for p in reference],
            "subgoals": subgoals,
        },
        plan=plan,
    )


# --------------------------------------------------------------------------
# ideal: near-optimal scripts, every episode should succeed

IDEAL = [
    episode(
        "hall_east", "open_hall", (2, 2, 0), (11, 2),
        "Walk past the table and stop beyond it.",
        ["Walk past the table", "Stop beyond the table"],
        [(2, 2), (5, 2), (8, 2), (11, 2)],
        [I(1, 3), S("C", 3, done=1), S("C", 2.5), S("F", 0, done=2)],
    ),
    episode(
        "hall_sofa", "open_hall", (2, 6, 0), (11, 8),
        "Head toward the sofa and wait near it.",
        ["Head toward the sofa", "Wait near the sofa"],
        [(2, 6), (5, 7), (8, 7.5), (11, 8)],
        [I(1, 3), S("B", 2), S("D", 2.5, done=1), S("F", 0, done=2)],
    ),
    episode(
        "rooms_through", "three_room", (1.5, 3.6, 0), (10.5, 3.6),
        "Go through both doorways into the bedroom.",
        ["Go through the first doorway", "Go through the second doorway", "Enter the bedroom"],
        [(1.5, 3.6), (4, 3.6), (8, 3.6), (10.5, 3.6)],
        [I(1, 2), S("C", 2, done=1), S("C", 2), S("C", 2, done=2), S("F", 0, done=3)],
    ),
    episode(
        "rooms_back", "three_room", (10.5, 3.6, 180), (1.5, 3.6),
        "Leave the bedroom and walk back to the table room.",
        ["Leave the bedroom", "Cross the living room", "Stop in the table room"],
        [(10.5, 3.6), (8, 3.6), (4, 3.6), (1.5, 3.6)],
        [I(1, 2), S("C", 2, done=1), S("C", 2), S("C", 2, done=2), S("F", 0, done=3)],
    ),
    episode(
        "corridor_upper", "two_corridor", (1, 1.5, 0), (12.5, 5.5),
        "Follow the lower corridor to its end and turn left toward the painting.",
        ["Follow the lower corridor", "Turn left at the end", "Stop below the painting"],
        [(1, 1.5), (6, 1.5), (12.5, 1.5), (12.5, 5.5)],
        [I(1, 3), S("C", 3, done=1), S("C", 3), S("C", 2), S("A", 2, done=2), S("B", 2), S("F", 0, done=3)],
    ),
    episode(
        "corridor_chair", "two_corridor", (1, 1.5, 0), (6, 1.5),
        "Walk down the corridor and stop at the chair.",
        ["Walk down the corridor", "Stop at the chair"],
        [(1, 1.5), (3.5, 1.5), (6, 1.5)],
        [I(1, 3), S("F", 0, done=2)],
    ),
    episode(
        "junction_left", "t_junction", (6, 1, 90), (2, 8),
        "Walk up the hallway and turn left at the junction toward the plant.",
        ["Walk up the hallway", "Turn left at the junction", "Stop at the plant"],
        [(6, 1), (6, 8), (2, 8)],
        [I(1, 3), S("C", 3, done=1), S("A", 1.2, done=2), S("B", 2.5), S("F", 0, done=3)],
    ),
    episode(
        "junction_right", "t_junction", (6, 1, 90), (10, 8),
        "Walk up the hallway and turn right at the junction toward the television.",
        ["Walk up the hallway", "Turn right at the junction", "Stop at the television"],
        [(6, 1), (6, 8), (10, 8)],
        [I(1, 3), S("C", 3, done=1), S("E", 1.2, done=2), S("D", 2.5), S("F", 0, done=3)],
    ),
    episode(
        "l_turn", "l_corridor", (1, 1, 0), (7, 7),
        "Follow the corridor and turn left up toward the stairs.",
        ["Follow the corridor", "Turn left", "Approach the stairs"],
        [(1, 1), (7, 1), (7, 7)],
        [I(1, 3), S("C", 2.5, done=1), S("A", 2, done=2), S("B", 2), S("F", 0, done=3)],
    ),
    episode(
        "dead_end_cabinet", "dead_end", (0.5, 2, 0), (4.2, 2),
        "Walk to the cabinet at the end of the corridor.",
        ["Walk to the cabinet"],
        [(0.5, 2), (4.2, 2)],
        [I(1, 2), S("F", 0, done=1)],
    ),
]

# --------------------------------------------------------------------------
# adversarial: wrong turns and confusion, all moves unclamped so the
# resulting poses can be worked out by hand

ADVERSARIAL = [
    episode(
        "adv_wrong_turn", "open_hall", (2, 6, 0), (13, 6),
        "Walk straight across the hall to the far side.",
        ["Cross the hall", "Stop at the far side"],
        [(2, 6), (7, 6), (13, 6)],
        [I(4, 2), S("C", 2), S("F", 0)],
    ),
    episode(
        "adv_confused", "open_hall", (2, 6, 0), (12, 6),
        "Walk straight across the hall and stop near the far wall.",
        ["Cross the hall", "Stop near the far wall"],
        [(2, 6), (7, 6), (12, 6)],
        [I(1, 2), S("C", 2, confuse=True), D(1, 3), S("C", 2, done=1), S("F", 0, done=1)],
    ),
    episode(
        "adv_reverse", "open_hall", (6, 6, 0), (12, 6),
        "Continue ahead to the sofa side of the hall.",
        ["Continue ahead"],
        [(6, 6), (9, 6), (12, 6)],
        [I(7, 2), S("F", 0)],
    ),
    episode(
        "adv_zigzag", "open_hall", (2, 6, 0), (12, 6),
        "Walk across the hall in a straight line.",
        ["Walk across the hall"],
        [(2, 6), (7, 6), (12, 6)],
        [I(1, 2), S("B", 2), S("D", 2), S("F", 0)],
    ),
    episode(
        "adv_confused_wrong", "open_hall", (8, 6, 0), (14, 6),
        "Go a little further toward the east wall.",
        ["Go toward the east wall"],
        [(8, 6), (11, 6), (14, 6)],
        [I(1, 1), S("C", 1, confuse=True), D(4, 2), S("C", 1), S("F", 0)],
    ),
]

# --------------------------------------------------------------------------
# conformance: one episode per controller behaviour

_BUDGET_PLAN = [I(1, 1)] + [S("A" if k % 2 == 0 else "E", 0.3) for k in range(24)]

CONFORMANCE = [
    episode(
        "immediate_stop", "open_hall", (8, 6, 0), (9, 6),
        "You are already there; stop.",
        ["Stop"],
        [(8, 6), (9, 6)],
        [I(1, 0), S("F", 0, done=1)],
    ),
    episode(
        "straight_corridor", "two_corridor", (1, 1.5, 0), (7, 1.5),
        "Walk straight down the corridor past the chair.",
        ["Walk down the corridor", "Pass the chair"],
        [(1, 1.5), (4, 1.5), (7, 1.5)],
        [I(1, 2), S("C", 2), S("C", 2, done=1), S("F", 0, done=2)],
    ),
    episode(
        "confuse_rescan", "three_room", (1.5, 3.6, 0), (6, 3.6),
        "Go through the doorway into the living room.",
        ["Go through the doorway", "Stop in the living room"],
        [(1.5, 3.6), (4, 3.6), (6, 3.6)],
        [I(1, 1), S("C", 1, confuse=True), D(1, 1.5), S("C", 1.5, done=1), S("F", 0, done=2)],
    ),
    episode(
        "stuck_shift", "dead_end", (3.5, 2, 0), (4.5, 2),
        "Walk to the end of the corridor.",
        ["Walk to the end"],
        [(3.5, 2), (4.5, 2)],
        [I(1, 0), S("C", 0), S("C", 0), S("F", 0, done=1)],
    ),
    episode(
        "budget_exhaustion", "open_hall", (2, 6, 0), (14, 6),
        "Wander east across the hall.",
        ["Wander east"],
        [(2, 6), (8, 6), (14, 6)],
        _BUDGET_PLAN,
    ),
    episode(
        "parse_retry", "open_hall", (2, 6, 0), (7, 6),
        "Walk forward a few meters and stop.",
        ["Walk forward", "Stop"],
        [(2, 6), (7, 6)],
        [
            I(1, 2, garbage=["I think I should go forward."]),
            S("C", 2, garbage=['```json\n{"Thought": "go", "Action Options": "Z"}\n```']),
            S("F", 0, done=2),
        ],
    ),
]

SUITES = {"ideal": IDEAL, "adversarial": ADVERSARIAL, "conformance": CONFORMANCE}


def write_suite(name, episodes):
    root = DATA / "suites" / name
    (root / "episodes").mkdir(parents=True, exist_ok=True)
    for old in (root / "episodes").glob("*.json"):
        old.unlink()
    script = []
    for ep in episodes:
        spec = ep["spec"]
        (root / "episodes" / f"{spec['id']}.json").write_text(json.dumps(spec, indent=2) + "\n")
        script.extend(expand(spec["id"], spec["subgoals"], ep["plan"]))
    (root / "script.json").write_text(json.dumps(script, indent=1, ensure_ascii=False) + "\n")
    config = {
        "episodes": ["episodes"],
        "worlds_dir": "../../worlds",
        "provider": {"kind": "scripted", "script": "script.json"},
        "out": f"runs/{name}",
    }
    (root / "config.json").write_text(json.dumps(config, indent=2) + "\n")


def main():
    for name, episodes in SUITES.items():
        write_suite(name, episodes)
        print(f"{name}: {len(episodes)} episodes")


if __name__ == "__main__":
    main()
