from __future__ import annotations

import base64
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union


class Status(str, Enum):
    COMPLETED = "Completed"
    IN_PROGRESS = "In Progress"
    NOT_STARTED = "Not Started"


@dataclass(frozen=True)
class SubgoalStatus:
    subgoal: str
    status: Status


@dataclass(frozen=True)
class History:
    trajectory_summary: str
    instruction_progress: tuple = ()  # SubgoalStatus, instruction order


@dataclass(frozen=True)
class Instruction:
    text: str
    subgoals: tuple = ()

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("instruction text must be non-empty")


@dataclass(frozen=True)
class TaskDescription:
    version: str
    text: str


@dataclass(frozen=True)
class NavContext:
    trajectory_summary: str = ""
    instruction_progress: tuple = ()
    previous_selected_image: Optional[int] = None
    previous_thought: Optional[str] = None
    observed_objects: tuple = ()


@dataclass(frozen=True)
class ActionOption:
    label: str
    turn: float  # degrees, counter-clockwise positive
    description: str
    stop: bool = False


@dataclass(frozen=True)
class ActionOptionSet:
    options: tuple

    def __getitem__(self, label: str) -> ActionOption:
        for opt in self.options:
            if opt.label == label:
                return opt
        raise KeyError(label)

    @property
    def labels(self) -> tuple:
        return tuple(o.label for o in self.options)


DEFAULT_OPTIONS = ActionOptionSet(
    (
        ActionOption("A", 60.0, "turn left 60° then move forward"),
        ActionOption("B", 30.0, "turn left 30° then move forward"),
        ActionOption("C", 0.0, "move forward"),
        ActionOption("D", -30.0, "turn right 30° then move forward"),
        ActionOption("E", -60.0, "turn right 60° then move forward"),
        ActionOption("F", 0.0, "stop, the goal has been reached", stop=True),
    )
)


@dataclass(frozen=True)
class InitialDecision:
    thought: str
    selected_image: int
    safe_distance: float
    trajectory_summary: str
    instruction_progress: tuple

    @property
    def history(self) -> History:
        return History(self.trajectory_summary, self.instruction_progress)


@dataclass(frozen=True)
class StepDecision:
    thought: str
    selected_image: int
    action_option: str
    degree: Optional[int]
    safe_distance: float
    confuse: bool
    updated_history: History


@dataclass(frozen=True)
class DisambiguationDecision:
    selected_image: int
    safe_distance: float
    updated_history: History
    thought: Optional[str] = None


Decision = Union[InitialDecision, StepDecision, DisambiguationDecision]


class PromptKind(str, Enum):
    INITIAL = "initial"
    STEP = "step"
    DISAMBIGUATION = "disambiguation"


@dataclass(frozen=True)
class ImageAttachment:
    view_id: Union[int, str]
    data: bytes
    media_type: str = "image/png"

    def data_url(self) -> str:
        return f"data:{self.media_type};base64," + base64.b64encode(self.data).decode("ascii")


@dataclass(frozen=True)
class PromptBundle:
    kind: PromptKind
    system_text: str
    user_text: str
    images: tuple = ()
    # request key for scripted providers; not part of the prompt text
    episode_id: str = ""
    ordinal: int = 0
    attempt: int = 0
    # (previous raw reply, corrective message) pairs appended on re-prompt
    corrections: tuple = field(default=())
