"""Prompt builders and decision parsers."""

from .builders import (
    PromptConstructionError,
    TemplateSet,
    build_disambiguation_prompt,
    build_initial_prompt,
    build_step_prompt,
    correction_message,
    default_templates,
)
from .parsing import (
    PARSERS,
    DecisionParseError,
    MalformedOutput,
    RangeViolation,
    SchemaViolation,
    decision_to_json,
    extract_json_object,
    merge_history,
    parse_disambiguation_decision,
    parse_initial_decision,
    parse_step_decision,
    serialize_decision,
)
from .types import (
    DEFAULT_OPTIONS,
    ActionOption,
    ActionOptionSet,
    DisambiguationDecision,
    History,
    ImageAttachment,
    InitialDecision,
    Instruction,
    NavContext,
    PromptBundle,
    PromptKind,
    Status,
    StepDecision,
    SubgoalStatus,
    TaskDescription,
)
