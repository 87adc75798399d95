import json
import math

import pytest

from frontalnav.backend import ScriptedProvider, ScriptEntry, ScriptKeyError
from frontalnav.navigator import (
    NavConfig,
    StopSignal,
    TraceGrammarError,
    apply_initial_decision,
    apply_step_decision,
    bin_clearance,
    check_trace_grammar,
    detect_stuck,
    observe_frontal,
    observe_panoramic,
    panoramic_offset,
    run_episode,
)
from frontalnav.perception import BIN_CENTERS, DirectionalBin, Thresholds, render_frontal_text
from frontalnav.prompting import (
    DisambiguationDecision,
    History,
    InitialDecision,
    Status,
    StepDecision,
    SubgoalStatus,
)
from frontalnav.semantics import FixtureTagger
from frontalnav.simworld import AgentPose, EpisodeSpec

from conftest import suite_episode

CFG = NavConfig(attach_images=False)
HIST = History("s", (SubgoalStatus("go", Status.IN_PROGRESS),))


def run(suite, episode_id, cfg=CFG):
    spec, world, provider = suite_episode(suite, episode_id)
    outcome, trace = run_episode(spec, world, provider, cfg)
    check_trace_grammar(trace.events)
    return outcome, trace, provider


def types(trace):
    return [e["type"] for e in trace.events]


def step(option="C", dist=1.0, confuse=False, image=2):
    return StepDecision("t", image, option, None, dist, confuse, HIST)


def bins(clear):
    return [DirectionalBin(c, clear, 10) for c in BIN_CENTERS]


# decision to command ---------------------------------------------------------------


@pytest.mark.parametrize("image,turn", [(1, 0.0), (4, 90.0), (7, 180.0), (10, -90.0), (12, -30.0)])
def test_initial_decision_turns(image, turn):
    d = InitialDecision("t", image, 1.0, "s", HIST.instruction_progress)
    cmd = apply_initial_decision(d, [5.0] * 12, CFG)
    assert cmd.turn == turn and cmd.forward == 1.0


def test_initial_decision_clamped_by_view_mean():
    d = InitialDecision("t", 3, 4.0, "s", HIST.instruction_progress)
    means = [5.0] * 12
    means[2] = 1.5
    assert apply_initial_decision(d, means, CFG).forward == pytest.approx(1.2)
    means[2] = None
    assert apply_initial_decision(d, means, CFG).forward == 0.0


def test_step_decision_provider_bound_binds():
    cmd = apply_step_decision(step("C", 2.0), bins(5.0), CFG)
    assert cmd.turn == 0 and cmd.forward == 2.0


def test_step_decision_clearance_binds():
    assert apply_step_decision(step("C", 4.0), bins(1.0), CFG).forward == pytest.approx(0.7)
    assert apply_step_decision(step("C", 4.0), bins(0.1), CFG).forward == 0.0


def test_step_decision_reads_bin_in_turn_direction():
    b = [DirectionalBin(c, d, 1) for c, d in zip(BIN_CENTERS, [1.0, 2.0, 3.0, 4.0, 5.0])]
    # option A turns 60° left, whose bin is centred at -60 (right-positive)
    assert apply_step_decision(step("A", 9.0), b, CFG).forward == pytest.approx(0.7)
    assert apply_step_decision(step("E", 9.0), b, CFG).forward == pytest.approx(4.7)
    assert bin_clearance(-30.0, b) == 4.0


def test_stop_option():
    assert apply_step_decision(step("F", 0.0), bins(3.0), CFG) == StopSignal()


def test_panoramic_offsets():
    assert panoramic_offset(1) == 0 and panoramic_offset(4) == -90 and panoramic_offset(10) == 90


def test_detect_stuck():
    th = Thresholds()
    a = render_frontal_text(bins(2.0), th)
    b = render_frontal_text([DirectionalBin(c, 2.0 if c else 2.1, 10) for c in BIN_CENTERS], th)
    assert detect_stuck(a, render_frontal_text(bins(2.0), th))
    assert not detect_stuck(a, b)


# observation -----------------------------------------------------------------------------


def test_observations_have_fixed_cardinality(worlds):
    pose = AgentPose(2, 3.6, 0)
    front = observe_frontal(worlds["three_room"], pose, NavConfig(), FixtureTagger())
    assert len(front.bins) == 5 and len(front.objects) == 3 and len(front.images) == 3
    assert all(img.data.startswith(b"\x89PNG") for img in front.images)
    pano = observe_panoramic(worlds["three_room"], pose, CFG, FixtureTagger())
    assert pano.depth_renders == 12 and len(pano.means) == 12 and len(pano.spatial.texts) == 12


# episodes -----------------------------------------------------------------------------------


def test_immediate_stop():
    outcome, trace, _ = run("conformance", "immediate_stop")
    assert outcome.stop_reason == "AgentStop"
    assert all(p == outcome.path[0] for p in outcome.path)
    assert trace.metrics["TL"] == 0.0
    assert types(trace) == ["InitialScan", "Decision", "ActionExecuted", "StepObservation", "Decision", "Stop"]


def test_straight_corridor_endpoint():
    outcome, trace, _ = run("conformance", "straight_corridor")
    decisions = [e for e in trace.events if e["type"] == "Decision"]
    assert len(decisions) == 4
    # start (1, 1.5) heading east, moves of 2 + 2 + 2 m
    assert math.dist(outcome.final_pose.position, (7.0, 1.5)) < 0.05
    assert outcome.stop_reason == "AgentStop"


def test_confuse_triggers_one_rescan():
    outcome, trace, _ = run("conformance", "confuse_rescan")
    rescans = [e for e in trace.events if e["type"] == "ConfuseRescan"]
    assert len(rescans) == 1 and rescans[0]["depth_renders"] == 12
    scans = [e for e in trace.events if e["type"] == "InitialScan"]
    assert len(scans) == 1 and scans[0]["depth_renders"] == 12
    t = types(trace)
    i = t.index("ConfuseRescan")
    assert t[i - 1] == "Decision" and trace.events[i - 1]["parsed"]["Confuse"] is True
    assert trace.events[i + 1]["kind"] == "disambiguation"


def test_no_rescan_without_confuse():
    for ep in ("straight_corridor", "immediate_stop", "stuck_shift"):
        _, trace, _ = run("conformance", ep)
        assert "ConfuseRescan" not in types(trace)


def test_disambiguation_to_image_four_turns_left():
    _, trace, _ = run("adversarial", "adv_confused_wrong")
    t = types(trace)
    i = t.index("ConfuseRescan")
    move = trace.events[i + 2]
    assert move["type"] == "ActionExecuted"
    assert move["post"]["heading"] == pytest.approx((move["pre"]["heading"] + 90) % 360)


def test_stuck_shift_in_dead_end():
    outcome, trace, _ = run("conformance", "stuck_shift")
    shifts = [e for e in trace.events if e["type"] == "StuckShift"]
    assert len(shifts) == 1
    assert shifts[0]["command"] == {"turn": -30.0, "forward": 0.25}
    obs = [e for e in trace.events if e["type"] == "StepObservation"]
    assert obs[0]["spatial"] == obs[1]["spatial"]
    i = trace.events.index(shifts[0])
    assert trace.events[i - 1]["type"] == "Decision"


def test_budget_exhaustion_counts_every_decision():
    outcome, trace, _ = run("conformance", "budget_exhaustion")
    assert outcome.stop_reason == "BudgetExhausted"
    assert sum(1 for e in trace.events if e["type"] == "Decision") == CFG.max_steps
    assert trace.events[-1] == {"type": "BudgetExhausted", "decisions": 25, "max_steps": 25}


def test_smaller_budget(worlds):
    cfg = NavConfig(attach_images=False, max_steps=5)
    outcome, trace, _ = run("conformance", "budget_exhaustion", cfg)
    assert sum(1 for e in trace.events if e["type"] == "Decision") == 5


def test_parse_retry_recorded():
    outcome, trace, provider = run("conformance", "parse_retry")
    decisions = [e for e in trace.events if e["type"] == "Decision"]
    assert [d["retries"] for d in decisions] == [1, 1, 0]
    assert ("parse_retry", 0, "initial", 1) in provider.calls
    assert outcome.stop_reason == "AgentStop"


def _spec(world, start=(2, 6, 0)):
    return EpisodeSpec("ep", world.name, AgentPose(*start), (10, 6), "go east", 3.0, ((2, 6), (10, 6)))


def _initial(dist=1.0):
    return json.dumps({
        "Thought": "t", "Selected Image": 1, "Safe Distance": dist, "Trajectory Summary": "s",
        "Instruction Progress": [{"subgoal": "go", "status": "In Progress"}],
    })


def _step(option, dist=1.0, confuse=False, status="In Progress"):
    return json.dumps({
        "Thought": "t", "Selected Image": 2, "Action Options": option, "Degree": None,
        "Safe Distance": dist, "Confuse": confuse,
        "Updated History": {"Trajectory Summary": "s", "Instruction Progress": [{"subgoal": "go", "status": status}]},
    })


def test_provider_failure_ends_episode(worlds):
    entries = [ScriptEntry("ep", 0, "initial", _initial())]
    entries += [ScriptEntry("ep", 1, "step", "garbage", attempt=a) for a in range(3)]
    outcome, trace = run_episode(_spec(worlds["open_hall"]), worlds["open_hall"], ScriptedProvider(entries), CFG)
    assert outcome.stop_reason == "ProviderFailure"
    assert trace.events[-1]["type"] == "Stop" and trace.events[-1]["reason"] == "ProviderFailure"
    assert trace.events[-1]["raw"] == ["garbage"] * 3
    assert trace.metrics["stop_reason"] == "ProviderFailure"
    check_trace_grammar(trace.events)


def test_missing_script_entry_propagates(worlds):
    provider = ScriptedProvider([ScriptEntry("ep", 0, "initial", _initial())])
    with pytest.raises(ScriptKeyError):
        run_episode(_spec(worlds["open_hall"]), worlds["open_hall"], provider, CFG)


def test_confuse_takes_precedence_over_stop(worlds):
    entries = [
        ScriptEntry("ep", 0, "initial", _initial()),
        ScriptEntry("ep", 1, "step", _step("F", 0, confuse=True)),
        ScriptEntry("ep", 2, "disambiguation", json.dumps({
            "Selected Image": 1, "Safe Distance": 1.0,
            "Updated History": {"Trajectory Summary": "s", "Instruction Progress": [{"subgoal": "go", "status": "In Progress"}]},
        })),
        ScriptEntry("ep", 3, "step", _step("F", 0)),
    ]
    _, trace = run_episode(_spec(worlds["open_hall"]), worlds["open_hall"], ScriptedProvider(entries), CFG)
    assert types(trace).count("ConfuseRescan") == 1 and trace.events[-1]["reason"] == "AgentStop"


def test_confuse_on_last_budget_unit_exhausts(worlds):
    entries = [ScriptEntry("ep", 0, "initial", _initial()), ScriptEntry("ep", 1, "step", _step("C", confuse=True))]
    cfg = NavConfig(attach_images=False, max_steps=2)
    outcome, trace = run_episode(_spec(worlds["open_hall"]), worlds["open_hall"], ScriptedProvider(entries), cfg)
    assert outcome.stop_reason == "BudgetExhausted" and "ConfuseRescan" not in types(trace)


def test_history_regression_is_reprompted(worlds):
    entries = [
        ScriptEntry("ep", 0, "initial", _initial()),
        ScriptEntry("ep", 1, "step", _step("C", status="Completed")),
        ScriptEntry("ep", 2, "step", _step("C", status="Not Started")),
        ScriptEntry("ep", 2, "step", _step("F", status="Completed"), attempt=1),
    ]
    _, trace = run_episode(_spec(worlds["open_hall"]), worlds["open_hall"], ScriptedProvider(entries), CFG)
    last = [e for e in trace.events if e["type"] == "Decision"][-1]
    assert last["retries"] == 1 and "regressed" in last["violations"][0]


def test_trace_header_and_metrics(worlds):
    _, trace, _ = run("ideal", "hall_east")
    head, tail = trace.records[0], trace.records[-1]
    assert head["type"] == "Episode" and head["max_steps"] == 25 and head["shortest_path"] > 0
    assert tail["type"] == "Metrics" and tail["success"] == 1
    json.dumps(trace.records)


# grammar --------------------------------------------------------------------------------------


def test_grammar_rejects_bad_sequences():
    scan = {"type": "InitialScan"}
    dec = {"type": "Decision", "kind": "initial", "parsed": {}}
    act = {"type": "ActionExecuted"}
    stop = {"type": "Stop", "reason": "AgentStop"}
    check_trace_grammar([scan, dec, act, stop])
    with pytest.raises(TraceGrammarError):
        check_trace_grammar([dec, act, stop])
    with pytest.raises(TraceGrammarError):
        check_trace_grammar([scan, dec, act])
    with pytest.raises(TraceGrammarError):
        check_trace_grammar([scan, dec, {"type": "StepObservation"}, stop])
    confused = {"type": "Decision", "kind": "step", "parsed": {"Confuse": True}}
    with pytest.raises(TraceGrammarError):
        check_trace_grammar([scan, dec, act, {"type": "StepObservation"}, confused, act, stop])
    with pytest.raises(TraceGrammarError):
        check_trace_grammar([scan, dec, act, {"type": "ConfuseRescan"}, dec, act, stop])
