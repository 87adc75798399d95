"""Prompt construction for the initial, step and disambiguation requests."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from string import Template
from typing import Optional, Sequence

from ..perception import DescriptionMode, SpatialDescriptionSet, direction_label
from ..semantics import ObjectList
from .types import (
    DEFAULT_OPTIONS,
    ActionOptionSet,
    ImageAttachment,
    Instruction,
    NavContext,
    PromptBundle,
    PromptKind,
    TaskDescription,
)

FRONTAL_VIEW_NAMES = ("left view, 30° left", "front view", "right view, 30° right")


class PromptConstructionError(ValueError):
    pass


class TemplateSet:
    """Prompt templates read once from a directory of ``.txt`` files."""

    NAMES = ("task_description", "initial", "step", "disambiguation", "correction")

    def __init__(self, directory: Optional[Path] = None):
        if directory is None:
            root = resources.files("frontalnav.prompting") / "templates"
            texts = {n: (root / f"{n}.txt").read_text(encoding="utf-8") for n in self.NAMES}
        else:
            directory = Path(directory)
            texts = {n: (directory / f"{n}.txt").read_text(encoding="utf-8") for n in self.NAMES}
        head, _, body = texts.pop("task_description").partition("\n")
        if not head.startswith("version:"):
            raise PromptConstructionError("task description template must start with 'version:'")
        self.task = TaskDescription(head.split(":", 1)[1].strip(), body.strip())
        self._templates = {n: Template(t) for n, t in texts.items()}

    def render(self, name: str, **values) -> str:
        return self._templates[name].substitute(values).strip()


_DEFAULT: Optional[TemplateSet] = None


def default_templates() -> TemplateSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = TemplateSet()
    return _DEFAULT


def _tags(objects: ObjectList) -> str:
    return ", ".join(objects.tags) if objects.tags else "none detected"


def _progress(ctx: NavContext) -> str:
    if not ctx.instruction_progress:
        return "- (not yet split into subgoals)"
    return "\n".join(f"- [{s.status.value}] {s.subgoal}" for s in ctx.instruction_progress)


def _panoramic_views(sem: Sequence[ObjectList], spat: SpatialDescriptionSet) -> str:
    blocks = []
    for i in range(1, 13):
        blocks.append(
            f"Image {i} [{direction_label(i)}]\n"
            f"  Objects: {_tags(sem[i - 1])}\n"
            f"  Spatial: {spat.entries[i - 1][1]}"
        )
    return "\n".join(blocks)


def _check(sem, spat, images, mode: DescriptionMode, n: int) -> None:
    if spat.mode is not mode:
        raise PromptConstructionError(f"expected a {mode.value} spatial set, got {spat.mode.value}")
    if len(sem) != n:
        raise PromptConstructionError(f"expected {n} object lists, got {len(sem)}")
    if len(images) != n:
        raise PromptConstructionError(f"expected {n} images, got {len(images)}")


def build_initial_prompt(
    instr: Instruction,
    task: Optional[TaskDescription],
    sem: Sequence[ObjectList],
    spat: SpatialDescriptionSet,
    images: Sequence[ImageAttachment],
    templates: Optional[TemplateSet] = None,
) -> PromptBundle:
    t = templates or default_templates()
    task = task or t.task
    _check(sem, spat, images, DescriptionMode.PANORAMIC12, 12)
    user = t.render("initial", instruction=instr.text, views=_panoramic_views(sem, spat))
    return PromptBundle(PromptKind.INITIAL, task.text, user, tuple(images))


def build_step_prompt(
    instr: Instruction,
    sem: Sequence[ObjectList],
    spat: SpatialDescriptionSet,
    ctx: NavContext,
    images: Sequence[ImageAttachment],
    options: ActionOptionSet = DEFAULT_OPTIONS,
    task: Optional[TaskDescription] = None,
    templates: Optional[TemplateSet] = None,
) -> PromptBundle:
    t = templates or default_templates()
    task = task or t.task
    _check(sem, spat, images, DescriptionMode.FRONTAL5, 3)

    views = "\n".join(
        f"Image {k} [{name}]: objects: {_tags(sem[k - 1])}"
        for k, name in enumerate(FRONTAL_VIEW_NAMES, start=1)
    )
    spatial = "\n".join(f"- {text}" for text in spat.texts)
    opts = "\n".join(f"{o.label}. {o.description}" for o in options.options)
    stop_label = next((o.label for o in options.options if o.stop), "none")

    if ctx.previous_thought is None:
        past = (
            "there is no prior prediction to compare against yet, so base the decision "
            "on the current observation alone."
        )
    else:
        past = (
            f"last step you selected image {ctx.previous_selected_image} and reasoned as recorded "
            "in Previous Thought. Compare what you predicted then with what the current views "
            "show; if they do not match, revise your plan."
        )
    user = t.render(
        "step",
        instruction=instr.text,
        trajectory_summary=ctx.trajectory_summary or "none yet",
        progress=_progress(ctx),
        observed_objects=", ".join(ctx.observed_objects) or "none",
        previous_selected_image=ctx.previous_selected_image if ctx.previous_selected_image is not None else "none",
        previous_thought=ctx.previous_thought if ctx.previous_thought is not None else "none",
        views=views,
        spatial=spatial,
        options=opts,
        past_recall=past,
        stop_label=stop_label,
    )
    return PromptBundle(PromptKind.STEP, task.text, user, tuple(images))


def build_disambiguation_prompt(
    instr: Instruction,
    sem: Sequence[ObjectList],
    spat: SpatialDescriptionSet,
    ctx: NavContext,
    images: Sequence[ImageAttachment],
    task: Optional[TaskDescription] = None,
    templates: Optional[TemplateSet] = None,
) -> PromptBundle:
    t = templates or default_templates()
    task = task or t.task
    _check(sem, spat, images, DescriptionMode.PANORAMIC12, 12)
    if not ctx.trajectory_summary.strip():
        raise PromptConstructionError("disambiguation needs a non-empty trajectory summary")
    user = t.render(
        "disambiguation",
        instruction=instr.text,
        trajectory_summary=ctx.trajectory_summary,
        progress=_progress(ctx),
        observed_objects=", ".join(ctx.observed_objects) or "none",
        views=_panoramic_views(sem, spat),
    )
    return PromptBundle(PromptKind.DISAMBIGUATION, task.text, user, tuple(images))


def correction_message(error: Exception, fragment: str, templates: Optional[TemplateSet] = None) -> str:
    t = templates or default_templates()
    return t.render("correction", error=str(error), fragment=fragment or "(none)")
