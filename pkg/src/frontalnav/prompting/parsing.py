"""Strict parsing of provider replies into decision values.

Extraction takes the first ``{`` in the reply that starts a decodable JSON
object, so prose and code fences around the object are ignored. Braces in
value position are skipped so a truncated reply cannot yield an inner object. Field
names are matched case- and punctuation-insensitively against the
canonical names; nothing required is ever defaulted.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import replace
from typing import Any, Callable, Optional

from .types import (
    DEFAULT_OPTIONS,
    ActionOptionSet,
    DisambiguationDecision,
    History,
    InitialDecision,
    NavContext,
    Status,
    StepDecision,
    SubgoalStatus,
)

THOUGHT = "Thought"
SELECTED_IMAGE = "Selected Image"
ACTION = "Action Options"
DEGREE = "Degree"
SAFE_DISTANCE = "Safe Distance"
CONFUSE = "Confuse"
HISTORY = "Updated History"
SUMMARY = "Trajectory Summary"
PROGRESS = "Instruction Progress"

ALLOWED_DEGREES = (30, 60)

_ALIASES = {
    "thought": THOUGHT,
    "thoughts": THOUGHT,
    "selectedimage": SELECTED_IMAGE,
    "selectedimageindex": SELECTED_IMAGE,
    "actionoptions": ACTION,
    "actionoption": ACTION,
    "action": ACTION,
    "degree": DEGREE,
    "degrees": DEGREE,
    "rotationdegree": DEGREE,
    "safedistance": SAFE_DISTANCE,
    "confuse": CONFUSE,
    "confused": CONFUSE,
    "updatedhistory": HISTORY,
    "trajectorysummary": SUMMARY,
    "instructionprogress": PROGRESS,
}

_STATUS = {
    "completed": Status.COMPLETED,
    "inprogress": Status.IN_PROGRESS,
    "notstarted": Status.NOT_STARTED,
}


class DecisionParseError(ValueError):
    """Base for unusable provider output; ``fragment`` is quoted back on re-prompt."""

    def __init__(self, message: str, fragment: str = "", field: str = ""):
        super().__init__(message)
        self.fragment = fragment
        self.field = field


class MalformedOutput(DecisionParseError):
    pass


class SchemaViolation(DecisionParseError):
    pass


class RangeViolation(DecisionParseError):
    pass


def _key(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", name.lower())


def _frag(value: Any) -> str:
    try:
        text = json.dumps(value, ensure_ascii=False)
    except (TypeError, ValueError):
        text = repr(value)
    return text if len(text) <= 300 else text[:297] + "..."


def extract_json_object(raw: str) -> dict:
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\{", raw):
        # a brace right after ':', ',' or '[' is a nested value, never the reply itself
        if raw[: m.start()].rstrip()[-1:] in (":", ",", "["):
            continue
        try:
            value, _ = decoder.raw_decode(raw, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            return value
    snippet = raw.strip()[:300]
    raise MalformedOutput("no JSON object found in the reply", snippet)


def canonical_fields(obj: dict) -> dict:
    out: dict = {}
    for name, value in obj.items():
        canon = _ALIASES.get(_key(str(name)))
        if canon is None:
            continue
        if canon in out:
            raise SchemaViolation(f"field {canon!r} given more than once", _frag(obj), canon)
        out[canon] = value
    return out


def _require(fields: dict, name: str) -> Any:
    if name not in fields:
        raise SchemaViolation(f"missing required field {name!r}", _frag(fields), name)
    return fields[name]


def _text(fields: dict, name: str) -> str:
    value = _require(fields, name)
    if not isinstance(value, str):
        raise SchemaViolation(f"{name!r} must be a string", _frag(value), name)
    if not value.strip():
        raise SchemaViolation(f"{name!r} must not be empty", _frag(value), name)
    return value


def _image(fields: dict, lo: int, hi: int) -> int:
    value = _require(fields, SELECTED_IMAGE)
    if isinstance(value, str) and re.fullmatch(r"\s*\d+\s*", value):
        value = int(value)
    elif isinstance(value, float) and value.is_integer():
        value = int(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(f"{SELECTED_IMAGE!r} must be an integer", _frag(value), SELECTED_IMAGE)
    if not lo <= value <= hi:
        raise RangeViolation(
            f"{SELECTED_IMAGE!r} must be in {lo}..{hi}, got {value}", _frag(value), SELECTED_IMAGE
        )
    return value


_NUMBER_TEXT = re.compile(r"\s*(-?\d+(?:\.\d+)?)\s*(?:m|meters?|metres?|°|deg|degrees?)?\s*", re.I)


def _number(value: Any, name: str) -> float:
    if isinstance(value, str):
        m = _NUMBER_TEXT.fullmatch(value)
        if m:
            value = float(m.group(1))
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(f"{name!r} must be a number", _frag(value), name)
    return float(value)


def _distance(fields: dict) -> float:
    value = _number(_require(fields, SAFE_DISTANCE), SAFE_DISTANCE)
    if not math.isfinite(value) or value < 0:
        raise RangeViolation(f"{SAFE_DISTANCE!r} must be finite and >= 0", _frag(value), SAFE_DISTANCE)
    return value


def _progress(value: Any) -> tuple:
    items: list[tuple[Any, Any]]
    if isinstance(value, dict):
        items = list(value.items())
    elif isinstance(value, list):
        items = []
        for entry in value:
            if not isinstance(entry, dict):
                raise SchemaViolation("instruction progress entries must be objects", _frag(entry), PROGRESS)
            keyed = {_key(k): v for k, v in entry.items()}
            text = next((keyed[k] for k in ("subgoal", "step", "goal", "text", "description") if k in keyed), None)
            if text is None or "status" not in keyed:
                raise SchemaViolation("progress entry needs 'subgoal' and 'status'", _frag(entry), PROGRESS)
            items.append((text, keyed["status"]))
    else:
        raise SchemaViolation(f"{PROGRESS!r} must be a list", _frag(value), PROGRESS)
    if not items:
        raise SchemaViolation(f"{PROGRESS!r} must list at least one subgoal", _frag(value), PROGRESS)
    out = []
    for text, status in items:
        if not isinstance(text, str) or not text.strip():
            raise SchemaViolation("subgoal text must be a non-empty string", _frag(text), PROGRESS)
        st = _STATUS.get(_key(status)) if isinstance(status, str) else None
        if st is None:
            raise SchemaViolation(
                "status must be Completed, In Progress or Not Started", _frag(status), PROGRESS
            )
        out.append(SubgoalStatus(text.strip(), st))
    return tuple(out)


def _history(value: Any) -> History:
    if not isinstance(value, dict):
        raise SchemaViolation(f"{HISTORY!r} must be an object", _frag(value), HISTORY)
    fields = canonical_fields(value)
    return History(_text(fields, SUMMARY), _progress(_require(fields, PROGRESS)))


def _fields(raw: str) -> dict:
    return canonical_fields(extract_json_object(raw))


def parse_initial_decision(raw: str) -> InitialDecision:
    f = _fields(raw)
    progress = _progress(_require(f, PROGRESS))
    statuses = [s.status for s in progress]
    if statuses.count(Status.IN_PROGRESS) != 1 or Status.COMPLETED in statuses:
        raise SchemaViolation(
            "initial progress needs exactly one subgoal In Progress and none Completed",
            _frag(f[PROGRESS]),
            PROGRESS,
        )
    return InitialDecision(
        thought=_text(f, THOUGHT),
        selected_image=_image(f, 1, 12),
        safe_distance=_distance(f),
        trajectory_summary=_text(f, SUMMARY),
        instruction_progress=progress,
    )


def _option(value: Any, options: ActionOptionSet) -> str:
    if not isinstance(value, str):
        raise SchemaViolation(f"{ACTION!r} must be a label string", _frag(value), ACTION)
    m = re.fullmatch(r"\s*(?:option\s*)?([A-Za-z])(?:[\s.):\-].*)?", value, re.S | re.I)
    label = m.group(1).upper() if m else None
    if label not in options.labels:
        raise SchemaViolation(
            f"unknown action option {value!r}; expected one of {', '.join(options.labels)}",
            _frag(value),
            ACTION,
        )
    return label


def _degree(fields: dict) -> Optional[int]:
    value = _require(fields, DEGREE)
    if value is None:
        return None
    if isinstance(value, str) and value.strip().lower() in ("null", "none", ""):
        return None
    number = _number(value, DEGREE)
    if number not in ALLOWED_DEGREES:
        raise RangeViolation(f"{DEGREE!r} must be null, 30 or 60, got {value!r}", _frag(value), DEGREE)
    return int(number)


def parse_step_decision(raw: str, options: ActionOptionSet = DEFAULT_OPTIONS) -> StepDecision:
    f = _fields(raw)
    confuse = _require(f, CONFUSE)
    if not isinstance(confuse, bool):
        raise SchemaViolation(f"{CONFUSE!r} must be true or false", _frag(confuse), CONFUSE)
    return StepDecision(
        thought=_text(f, THOUGHT),
        selected_image=_image(f, 1, 3),
        action_option=_option(_require(f, ACTION), options),
        degree=_degree(f),
        safe_distance=_distance(f),
        confuse=confuse,
        updated_history=_history(_require(f, HISTORY)),
    )


def parse_disambiguation_decision(raw: str) -> DisambiguationDecision:
    f = _fields(raw)
    thought = f.get(THOUGHT)
    if thought is not None and not isinstance(thought, str):
        raise SchemaViolation(f"{THOUGHT!r} must be a string", _frag(thought), THOUGHT)
    return DisambiguationDecision(
        selected_image=_image(f, 1, 12),
        safe_distance=_distance(f),
        updated_history=_history(_require(f, HISTORY)),
        thought=thought,
    )


PARSERS: dict[str, Callable[[str], Any]] = {
    "initial": parse_initial_decision,
    "step": parse_step_decision,
    "disambiguation": parse_disambiguation_decision,
}


# --------------------------------------------------------------------------
# serialization


def _progress_json(progress: tuple) -> list:
    return [{"subgoal": s.subgoal, "status": s.status.value} for s in progress]


def _history_json(h: History) -> dict:
    return {SUMMARY: h.trajectory_summary, PROGRESS: _progress_json(h.instruction_progress)}


def decision_to_json(d) -> dict:
    if isinstance(d, InitialDecision):
        return {
            THOUGHT: d.thought,
            SELECTED_IMAGE: d.selected_image,
            SAFE_DISTANCE: d.safe_distance,
            SUMMARY: d.trajectory_summary,
            PROGRESS: _progress_json(d.instruction_progress),
        }
    if isinstance(d, StepDecision):
        return {
            THOUGHT: d.thought,
            SELECTED_IMAGE: d.selected_image,
            ACTION: d.action_option,
            DEGREE: d.degree,
            SAFE_DISTANCE: d.safe_distance,
            CONFUSE: d.confuse,
            HISTORY: _history_json(d.updated_history),
        }
    if isinstance(d, DisambiguationDecision):
        out = {}
        if d.thought is not None:
            out[THOUGHT] = d.thought
        out.update(
            {
                SELECTED_IMAGE: d.selected_image,
                SAFE_DISTANCE: d.safe_distance,
                HISTORY: _history_json(d.updated_history),
            }
        )
        return out
    raise TypeError(f"not a decision: {type(d).__name__}")


def serialize_decision(d, indent: Optional[int] = None) -> str:
    return json.dumps(decision_to_json(d), ensure_ascii=False, indent=indent)


# --------------------------------------------------------------------------
# history merge


def merge_history(ctx: NavContext, history: History) -> NavContext:
    """Adopt a provider's updated history, refusing any Completed -> other regression."""
    new = {_key(s.subgoal): s.status for s in history.instruction_progress}
    for old in ctx.instruction_progress:
        if old.status is Status.COMPLETED:
            now = new.get(_key(old.subgoal))
            if now is not None and now is not Status.COMPLETED:
                raise SchemaViolation(
                    f"subgoal {old.subgoal!r} regressed from Completed to {now.value}",
                    _frag(_progress_json(history.instruction_progress)),
                    PROGRESS,
                )
    return replace(
        ctx,
        trajectory_summary=history.trajectory_summary,
        instruction_progress=history.instruction_progress,
    )
