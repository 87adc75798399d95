"""Episode state machine.

One panoramic scan and initial decision, then a loop of frontal
observation, step decision, stuck check, confuse check and action until the
agent stops, the decision budget runs out, or the provider fails.

Turns are counter-clockwise positive here, like the world frame. Frontal
bins are right-positive, so a turn of ``t`` degrees reads the bin centred
at ``-t``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from . import metrics
from .backend import DecisionProvider, ProviderFailure, with_parse_retry
from .perception import (
    FRONTAL_OFFSETS,
    DescriptionMode,
    DirectionalBin,
    SpatialDescriptionSet,
    Thresholds,
    bin_frontal,
    column_ground_distances,
    direction_label,
    panoramic_column_range,
    panoramic_view_distance,
    project_depth,
    render_frontal_text,
    render_panoramic_text,
)
from .prompting import (
    DEFAULT_OPTIONS,
    ActionOptionSet,
    DisambiguationDecision,
    ImageAttachment,
    InitialDecision,
    Instruction,
    NavContext,
    PromptBundle,
    StepDecision,
    build_disambiguation_prompt,
    build_initial_prompt,
    build_step_prompt,
    decision_to_json,
    merge_history,
    parse_disambiguation_decision,
    parse_initial_decision,
    parse_step_decision,
)
from .schematic import render_schematic
from .semantics import FixtureTagger, ObjectList, Tagger
from .simworld import (
    ActionCommand,
    AgentPose,
    EpisodeSpec,
    RenderSettings,
    WorldMap,
    execute_action,
    geodesic_distance,
    render_depth,
    signed_angle,
)

logger = logging.getLogger(__name__)

AGENT_STOP = "AgentStop"
BUDGET_EXHAUSTED = "BudgetExhausted"
PROVIDER_FAILURE = "ProviderFailure"

FRONTAL_VIEW_IDS = ("L", "F", "R")
TERMINAL_EVENTS = ("Stop", "BudgetExhausted")


@dataclass(frozen=True)
class NavConfig:
    max_steps: int = 25
    safety_margin: float = 0.3
    collision_margin: float = 0.2
    shift_turn: float = -30.0
    shift_forward: float = 0.25
    center_crop_fraction: float = 0.8
    thresholds: Thresholds = field(default_factory=Thresholds)
    render: RenderSettings = field(default_factory=RenderSettings)
    tagger_range: float = 8.0
    geodesic_resolution: float = 0.1
    attach_images: bool = True
    image_size: tuple = (128, 96)
    max_reprompts: int = 2

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.safety_margin < 0 or self.collision_margin < 0:
            raise ValueError("margins must be >= 0")


@dataclass(frozen=True)
class StopSignal:
    reason: str = AGENT_STOP


@dataclass
class NavState:
    pose: AgentPose
    step_index: int = 0
    ctx: NavContext = field(default_factory=NavContext)
    previous_spatial: Optional[SpatialDescriptionSet] = None
    budget_remaining: int = 25


@dataclass(frozen=True)
class EpisodeOutcome:
    final_pose: AgentPose
    path: tuple
    stop_reason: str


# --------------------------------------------------------------------------
# observations


@dataclass(frozen=True)
class FrontalObservation:
    bins: tuple
    spatial: SpatialDescriptionSet
    objects: tuple
    images: tuple


@dataclass(frozen=True)
class PanoramicObservation:
    means: tuple
    spatial: SpatialDescriptionSet
    objects: tuple
    images: tuple
    depth_renders: int


def panoramic_offset(view_index: int) -> float:
    """Right-positive offset of panoramic view ``view_index`` (views rotate leftward)."""
    return -signed_angle(30.0 * (view_index - 1))


def _image(world, pose, offset, intr, cfg: NavConfig, view_id) -> ImageAttachment:
    data = render_schematic(
        world, pose, offset, intr, cfg.image_size, cfg.render.max_range, cfg.tagger_range
    )
    return ImageAttachment(view_id, data)


def observe_frontal(world: WorldMap, pose: AgentPose, cfg: NavConfig, tagger: Tagger) -> FrontalObservation:
    intr = cfg.render.frontal
    views, objects, images = [], [], []
    for offset, vid in zip(FRONTAL_OFFSETS, FRONTAL_VIEW_IDS):
        frame = render_depth(world, pose, offset, cfg.render)
        grid = project_depth(frame, intr, cfg.center_crop_fraction)
        views.append(column_ground_distances(grid, offset))
        objects.append(tagger.tag(world, pose, offset, intr, vid))
        if cfg.attach_images:
            images.append(_image(world, pose, offset, intr, cfg, vid))
    bins = bin_frontal(views, intr)
    spatial = render_frontal_text(bins, cfg.thresholds)
    if not cfg.attach_images:
        images = [ImageAttachment(vid, b"") for vid in FRONTAL_VIEW_IDS]
    return FrontalObservation(tuple(bins), spatial, tuple(objects), tuple(images))


def observe_panoramic(world: WorldMap, pose: AgentPose, cfg: NavConfig, tagger: Tagger) -> PanoramicObservation:
    intr = cfg.render.panoramic
    cols = panoramic_column_range(intr.width)
    means, objects, images = [], [], []
    renders = 0
    for i in range(1, 13):
        offset = panoramic_offset(i)
        frame = render_depth(world, pose, offset, cfg.render, panoramic=True)
        renders += 1
        grid = project_depth(frame, intr, cfg.center_crop_fraction)
        means.append(panoramic_view_distance(column_ground_distances(grid, offset), cols))
        objects.append(tagger.tag(world, pose, offset, intr, i))
        images.append(
            _image(world, pose, offset, intr, cfg, i) if cfg.attach_images else ImageAttachment(i, b"")
        )
    spatial = render_panoramic_text(means, cfg.thresholds)
    return PanoramicObservation(tuple(means), spatial, tuple(objects), tuple(images), renders)


# --------------------------------------------------------------------------
# decisions to commands


def _clamp_forward(requested: float, clearance: Optional[float], margin: float) -> float:
    room = 0.0 if clearance is None else clearance - margin
    return max(0.0, min(requested, room))


def apply_initial_decision(
    d: InitialDecision | DisambiguationDecision, view_means: Sequence[Optional[float]], cfg: NavConfig
) -> ActionCommand:
    """Face the selected panoramic view and drive within its measured clearance."""
    turn = signed_angle(30.0 * (d.selected_image - 1))
    forward = _clamp_forward(d.safe_distance, view_means[d.selected_image - 1], cfg.safety_margin)
    return ActionCommand(turn, forward)


def bin_clearance(turn: float, bins: Sequence[DirectionalBin]) -> Optional[float]:
    target = -signed_angle(turn)
    for b in bins:
        if math.isclose(b.center_angle, target, abs_tol=1e-9):
            return b.mean_distance if b.point_count > 0 else None
    raise ValueError(f"no frontal bin for a turn of {turn}°")


def apply_step_decision(
    d: StepDecision,
    bins: Sequence[DirectionalBin],
    cfg: NavConfig,
    options: ActionOptionSet = DEFAULT_OPTIONS,
) -> ActionCommand | StopSignal:
    opt = options[d.action_option]
    if opt.stop:
        return StopSignal(AGENT_STOP)
    forward = _clamp_forward(d.safe_distance, bin_clearance(opt.turn, bins), cfg.safety_margin)
    return ActionCommand(opt.turn, forward)


def detect_stuck(prev: SpatialDescriptionSet, cur: SpatialDescriptionSet) -> bool:
    if prev.mode is not DescriptionMode.FRONTAL5 or cur.mode is not DescriptionMode.FRONTAL5:
        raise ValueError("stuck detection compares frontal description sets")
    return prev.texts == cur.texts


# --------------------------------------------------------------------------
# trace


class EpisodeTrace:
    """Ordered trace records; ``sink`` receives each record as it is appended."""

    def __init__(self, episode_id: str, sink: Optional[Callable[[dict], None]] = None):
        self.episode_id = episode_id
        self.records: list[dict] = []
        self._sink = sink

    def append(self, type_: str, **data) -> dict:
        rec = {"type": type_, **data}
        self.records.append(rec)
        if self._sink is not None:
            self._sink(rec)
        return rec

    @property
    def events(self) -> list[dict]:
        return [r for r in self.records if r["type"] not in ("Episode", "Metrics")]

    @property
    def metrics(self) -> Optional[dict]:
        for r in reversed(self.records):
            if r["type"] == "Metrics":
                return r
        return None


class TraceGrammarError(ValueError):
    pass


def check_trace_grammar(events: Sequence[dict]) -> None:
    """Raise if the event sequence breaks the episode grammar."""
    types = [e["type"] for e in events]
    if not types or types[0] != "InitialScan" or types.count("InitialScan") != 1:
        raise TraceGrammarError("trace must open with exactly one InitialScan")
    terminals = [i for i, t in enumerate(types) if t in TERMINAL_EVENTS]
    if terminals != [len(types) - 1]:
        raise TraceGrammarError("trace must end with exactly one terminal event")
    for i, t in enumerate(types):
        if t == "Decision":
            nxt = types[i + 1] if i + 1 < len(types) else None
            if nxt == "StuckShift":
                nxt = types[i + 2] if i + 2 < len(types) else None
            allowed = {"ActionExecuted", *TERMINAL_EVENTS}
            if events[i]["kind"] == "step" and events[i]["parsed"]["Confuse"]:
                allowed = {"ConfuseRescan", *TERMINAL_EVENTS}
            if nxt not in allowed:
                raise TraceGrammarError(f"event {i}: Decision followed by {nxt}")
        if t == "ConfuseRescan":
            nxt = types[i + 1] if i + 1 < len(types) else None
            if nxt not in ("Decision", *TERMINAL_EVENTS) or (
                nxt == "Decision" and events[i + 1]["kind"] != "disambiguation"
            ):
                raise TraceGrammarError(f"event {i}: ConfuseRescan followed by {nxt}")
    n_confuse = sum(
        1 for e in events if e["type"] == "Decision" and e["kind"] == "step" and e["parsed"]["Confuse"]
    )
    if types.count("ConfuseRescan") > n_confuse:
        raise TraceGrammarError("ConfuseRescan without a confused step decision")


# --------------------------------------------------------------------------
# runner


def _view_summaries(obs: PanoramicObservation) -> list[dict]:
    return [
        {
            "index": i,
            "label": direction_label(i),
            "mean_distance": obs.means[i - 1],
            "text": obs.spatial.entries[i - 1][1],
            "objects": list(obs.objects[i - 1].tags),
        }
        for i in range(1, 13)
    ]


def _accumulate(ctx: NavContext, lists: Sequence[ObjectList]) -> NavContext:
    seen = list(ctx.observed_objects)
    for ol in lists:
        for tag in ol.tags:
            if tag not in seen:
                seen.append(tag)
    return replace(ctx, observed_objects=tuple(seen))


class _Episode:
    def __init__(self, spec, world, provider, cfg, tagger, options, sink):
        self.spec = spec
        self.world = world
        self.provider = provider
        self.cfg = cfg
        self.tagger = tagger
        self.options = options
        self.instr = Instruction(spec.instruction, spec.subgoals)
        self.trace = EpisodeTrace(spec.id, sink)
        self.state = NavState(spec.start, budget_remaining=cfg.max_steps)
        self.path = [spec.start]
        self.ordinal = 0

    # provider access --------------------------------------------------

    def _decide(self, bundle: PromptBundle, parse) -> object:
        bundle = replace(bundle, episode_id=self.spec.id, ordinal=self.ordinal)
        self.ordinal += 1
        self.state.budget_remaining -= 1
        try:
            reply = with_parse_retry(self.provider, bundle, parse, self.cfg.max_reprompts)
        except ProviderFailure as exc:
            self._terminal_failure(bundle, exc)
            raise
        self.trace.append(
            "Decision",
            kind=bundle.kind.value,
            ordinal=bundle.ordinal,
            attempts=len(reply.replies),
            retries=reply.retries,
            raw=[r.raw_text for r in reply.replies],
            latency=[r.latency for r in reply.replies],
            violations=reply.violations,
            parsed=decision_to_json(reply.decision),
        )
        return reply.decision

    def _terminal_failure(self, bundle: PromptBundle, exc: ProviderFailure) -> None:
        self.trace.append(
            "Stop",
            reason=PROVIDER_FAILURE,
            kind=bundle.kind.value,
            ordinal=bundle.ordinal,
            detail=str(exc),
            raw=[r.raw_text for r in exc.replies],
        )

    def _history_parser(self, parse):
        """Parser that also enforces history monotonicity, so regressions are re-prompted."""

        def wrapped(raw: str):
            d = parse(raw)
            merge_history(self.state.ctx, d.updated_history)
            return d

        return wrapped

    # motion -----------------------------------------------------------

    def _move(self, event: str, cmd: ActionCommand) -> None:
        pre = self.state.pose
        post, clamped = execute_action(self.world, pre, cmd, self.cfg.collision_margin)
        self.trace.append(
            event,
            command={"turn": cmd.turn, "forward": cmd.forward},
            pre=pre.to_json(),
            post=post.to_json(),
            clamped=clamped,
        )
        self.state.pose = post
        self.path.append(post)

    # phases -----------------------------------------------------------

    def _panorama(self, event: str) -> PanoramicObservation:
        obs = observe_panoramic(self.world, self.state.pose, self.cfg, self.tagger)
        self.trace.append(
            event,
            pose=self.state.pose.to_json(),
            depth_renders=obs.depth_renders,
            views=_view_summaries(obs),
        )
        self.state.ctx = _accumulate(self.state.ctx, obs.objects)
        return obs

    def _initial(self) -> None:
        obs = self._panorama("InitialScan")
        bundle = build_initial_prompt(self.instr, None, obs.objects, obs.spatial, obs.images)
        d: InitialDecision = self._decide(bundle, parse_initial_decision)
        self.state.ctx = merge_history(self.state.ctx, d.history)
        self._move("ActionExecuted", apply_initial_decision(d, obs.means, self.cfg))

    def _rescan(self) -> None:
        obs = self._panorama("ConfuseRescan")
        bundle = build_disambiguation_prompt(
            self.instr, obs.objects, obs.spatial, self.state.ctx, obs.images
        )
        d: DisambiguationDecision = self._decide(
            bundle, self._history_parser(parse_disambiguation_decision)
        )
        self.state.ctx = replace(
            merge_history(self.state.ctx, d.updated_history),
            previous_thought=None,
            previous_selected_image=None,
        )
        self.state.previous_spatial = None
        self._move("ActionExecuted", apply_initial_decision(d, obs.means, self.cfg))

    def _step(self) -> Optional[str]:
        """One frontal step; returns a stop reason when the episode ends."""
        st = self.state
        if st.budget_remaining <= 0:
            self.trace.append("BudgetExhausted", decisions=self.ordinal, max_steps=self.cfg.max_steps)
            return BUDGET_EXHAUSTED
        st.step_index += 1
        obs = observe_frontal(self.world, st.pose, self.cfg, self.tagger)
        self.trace.append(
            "StepObservation",
            step=st.step_index,
            pose=st.pose.to_json(),
            spatial=list(obs.spatial.texts),
            bins=[
                {"center": b.center_angle, "mean_distance": b.mean_distance, "count": b.point_count}
                for b in obs.bins
            ],
            objects={ol.view_id: list(ol.tags) for ol in obs.objects},
        )
        st.ctx = _accumulate(st.ctx, obs.objects)
        bundle = build_step_prompt(self.instr, obs.objects, obs.spatial, st.ctx, obs.images, self.options)
        d: StepDecision = self._decide(
            bundle, self._history_parser(lambda raw: parse_step_decision(raw, self.options))
        )
        st.ctx = replace(
            merge_history(st.ctx, d.updated_history),
            previous_selected_image=d.selected_image,
            previous_thought=d.thought,
        )
        command = apply_step_decision(d, obs.bins, self.cfg, self.options)
        if isinstance(command, StopSignal) and not d.confuse:
            self.trace.append("Stop", reason=AGENT_STOP)
            return AGENT_STOP

        stuck = st.previous_spatial is not None and detect_stuck(st.previous_spatial, obs.spatial)
        st.previous_spatial = obs.spatial
        if stuck:
            self._move("StuckShift", ActionCommand(self.cfg.shift_turn, self.cfg.shift_forward))

        if d.confuse:
            if st.budget_remaining <= 0:
                self.trace.append("BudgetExhausted", decisions=self.ordinal, max_steps=self.cfg.max_steps)
                return BUDGET_EXHAUSTED
            self._rescan()
            return None
        self._move("ActionExecuted", command)
        return None

    def run(self) -> tuple[EpisodeOutcome, EpisodeTrace]:
        spec = self.spec
        shortest = geodesic_distance(
            self.world, spec.start.position, spec.goal, self.cfg.geodesic_resolution, self.cfg.collision_margin
        )
        self.trace.append(
            "Episode",
            episode=spec.id,
            world=spec.world,
            instruction=spec.instruction,
            start=spec.start.to_json(),
            goal=list(spec.goal),
            success_radius=spec.success_radius,
            reference_path=[list(p) for p in spec.reference_path],
            shortest_path=shortest if math.isfinite(shortest) else None,
            max_steps=self.cfg.max_steps,
        )
        try:
            self._initial()
            reason = None
            while reason is None:
                reason = self._step()
        except ProviderFailure as exc:
            logger.warning("episode %s: provider failure: %s", spec.id, exc)
            reason = PROVIDER_FAILURE

        outcome = EpisodeOutcome(self.state.pose, tuple(self.path), reason)
        report = metrics.episode_report(
            spec.id,
            [p.position for p in self.path],
            spec.goal,
            spec.success_radius,
            shortest,
            [tuple(p) for p in spec.reference_path],
        )
        self.trace.append("Metrics", stop_reason=reason, **report.to_json())
        return outcome, self.trace


def run_episode(
    spec: EpisodeSpec,
    world: WorldMap,
    provider: DecisionProvider,
    cfg: Optional[NavConfig] = None,
    tagger: Optional[Tagger] = None,
    options: ActionOptionSet = DEFAULT_OPTIONS,
    sink: Optional[Callable[[dict], None]] = None,
) -> tuple[EpisodeOutcome, EpisodeTrace]:
    cfg = cfg or NavConfig()
    tagger = tagger or FixtureTagger(cfg.tagger_range)
    return _Episode(spec, world, provider, cfg, tagger, options, sink).run()
