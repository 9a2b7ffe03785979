"""Run a validated planning script step by step."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

from . import evallang
from .gateway import BackendUnavailable, Gateway
from .script import Instruction, Script, VarRef
from .ssparser import make_fallback
from .values import (
    Box,
    BoxArray,
    BoxError,
    ImageArray,
    ImageRef,
    concat_horizontal,
    display,
    kind_name,
)

OK = "ok"
RUNTIME_FALLBACK = "runtime_fallback_used"
ERROR = "error"
UNKNOWN_ANSWER = "unknown"


class RuntimeStepError(RuntimeError):
    def __init__(self, line_index: int, cause: str):
        super().__init__(f"line {line_index}: {cause}")
        self.line_index = line_index
        self.cause = cause


class Env:
    """Single-assignment variable bindings for one execution."""

    def __init__(self, bindings: dict | None = None):
        self.bindings: dict[str, object] = dict(bindings or {})

    def __contains__(self, name):
        return name in self.bindings

    def __getitem__(self, name):
        return self.bindings[name]

    def bind(self, name: str, value) -> None:
        if name in self.bindings:
            raise KeyError(f"variable {name} is already bound")
        self.bindings[name] = value

    def copy(self) -> Env:
        return Env(self.bindings)


def seed_env(task_kind: str, images: Sequence[ImageRef]) -> Env:
    """IMAGE for single-image tasks; LEFT, RIGHT and their concatenation for NLVR2."""
    if task_kind == "nlvr2":
        if len(images) != 2:
            raise ValueError("nlvr2 needs exactly two images")
        left, right = images
        return Env({"LEFT": left, "RIGHT": right, "IMAGE": concat_horizontal(left, right)})
    if len(images) < 1:
        raise ValueError("no input image")
    return Env({"IMAGE": images[0]})


@dataclass
class TraceEvent:
    line_index: int
    module_name: str
    output_var: str
    inputs: dict[str, str]
    output: str
    details: dict = field(default_factory=dict)
    wall_ms: float = 0.0
    attempt: int = 0

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ExecutionResult:
    final_answer: str
    trace: list[TraceEvent]
    status: str
    script: Script | None = None
    error: str | None = None

    def to_json(self) -> dict:
        from .script import render_script

        return {
            "final_answer": self.final_answer,
            "status": self.status,
            "error": self.error,
            "script": render_script(self.script) if self.script else None,
            "trace": [e.to_json() for e in self.trace],
        }


@dataclass
class StepContext:
    gateway: Gateway
    choices: Sequence[str] | None = None
    details: dict = field(default_factory=dict)


def _first_box(box, line: int) -> Box:
    if isinstance(box, Box):
        return box
    if isinstance(box, BoxArray):
        if not len(box):
            raise RuntimeStepError(line, "EmptyBoxArray: nothing to crop")
        return box[0]
    raise RuntimeStepError(line, f"TypeMismatch: box is {kind_name(box)}")


def _image(value, line: int) -> ImageRef:
    if not isinstance(value, ImageRef):
        raise RuntimeStepError(line, f"TypeMismatch: image is {kind_name(value)}")
    return value


def exec_loc(ctx: StepContext, image: ImageRef, object: str, plural: bool = False) -> BoxArray:
    boxes, details = ctx.gateway.locate(image, object)
    ctx.details.update(details)
    if not plural:
        return boxes
    if not len(boxes):
        return BoxArray(())
    return BoxArray((image.whole_box(max(b.score for b in boxes)),))


def exec_crop(image: ImageRef, box, per_box: bool = False, line: int = 0):
    """Crop one region; a BoxArray contributes its first box unless ``per_box``."""
    image = _image(image, line)
    try:
        if per_box:
            if not isinstance(box, BoxArray):
                raise RuntimeStepError(line, f"TypeMismatch: per-box crop needs a BoxArray, got {kind_name(box)}")
            return ImageArray(tuple(image.crop(b) for b in box.boxes))
        return image.crop(_first_box(box, line))
    except BoxError as exc:
        raise RuntimeStepError(line, f"BadCrop: {exc}") from None


def _side_crop(side: str):
    def run(image: ImageRef, box, line: int = 0) -> ImageRef:
        image = _image(image, line)
        b = _first_box(box, line)
        cx, cy = (b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2
        w, h = image.width, image.height
        region = {
            "left": (0, 0, cx, h),
            "right": (cx, 0, w, h),
            "above": (0, 0, w, cy),
            "below": (0, cy, w, h),
        }[side]
        try:
            return image.crop(Box(*region))
        except BoxError as exc:
            raise RuntimeStepError(line, f"BadCrop: {exc}") from None

    return run


def exec_vqa(ctx: StepContext, image: ImageRef, question: str) -> str:
    answer, details = ctx.gateway.vqa(image, question)
    ctx.details.update(details)
    return answer


def exec_count(box, line: int = 0) -> int:
    if not isinstance(box, BoxArray):
        raise RuntimeStepError(line, f"TypeMismatch: COUNT needs a BoxArray, got {kind_name(box)}")
    return len(box)


def exec_get(array, index: int, line: int = 0):
    if not isinstance(array, (BoxArray, ImageArray)):
        raise RuntimeStepError(line, f"TypeMismatch: GET needs an array, got {kind_name(array)}")
    if not 0 <= index < len(array):
        raise RuntimeStepError(line, f"IndexOutOfBounds: index {index} on length {len(array)}")
    return array[index]


def exec_eval(expr: str, env: Env, line: int = 0):
    try:
        return evallang.evaluate(expr, env.bindings)
    except evallang.EvalError as exc:
        raise RuntimeStepError(line, f"{type(exc).__name__}: {exc}") from None


def result_text(value) -> str:
    """Final-answer form: Booleans as yes/no, Text coerced then shown."""
    if isinstance(value, str):
        return evallang.display(evallang.coerce(value))
    return display(value)


def exec_select(ctx: StepContext, question: str, evidence, line: int = 0) -> str:
    from .verifier import score_choices

    if not ctx.choices:
        raise RuntimeStepError(line, "SELECT needs answer choices")
    dist = score_choices(ctx.gateway, question, display(evidence), ctx.choices)
    ctx.details["distribution"] = list(dist.probs)
    return ctx.choices[dist.argmax()]


def _literal(value):
    return value.value


def execute(
    script: Script,
    env: Env,
    gateway: Gateway,
    trace: bool = True,
    question: str | None = None,
    task_kind: str = "gqa",
    choices: Sequence[str] | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> ExecutionResult:
    """Execute ``script``; on a step failure run the direct-VQA fallback once.

    Without a ``question`` there is no fallback and a failure yields status
    ``error``. Missing fixtures (:class:`~planscript.gateway.FixtureMiss`)
    are not step failures and propagate to the caller.
    """
    events: list[TraceEvent] = []
    try:
        answer = _run(script, env.copy(), gateway, events, 0, choices, clock)
        return ExecutionResult(answer, events if trace else [], OK, script)
    except RuntimeStepError as first:
        if question is None:
            return ExecutionResult(UNKNOWN_ANSWER, events if trace else [], ERROR, script, str(first))
        fallback = make_fallback(question, task_kind)
        try:
            answer = _run(fallback, env.copy(), gateway, events, 1, choices, clock)
        except RuntimeStepError as second:
            return ExecutionResult(UNKNOWN_ANSWER, events if trace else [], ERROR, fallback,
                                   f"{first}; fallback: {second}")
        return ExecutionResult(answer, events if trace else [], RUNTIME_FALLBACK, fallback, str(first))


def _run(script, env, gateway, events, attempt, choices, clock) -> str:
    instrs = script.instructions
    if not instrs or instrs[-1].module_name != "RESULT":
        last = instrs[-1].line_index if instrs else 0
        raise RuntimeStepError(last, "script does not end in RESULT")
    answer = None
    for instr in instrs:
        started = clock()
        ctx = StepContext(gateway, choices)
        value, inputs = _step(instr, env, ctx)
        try:
            env.bind(instr.output_var, value)
        except KeyError as exc:
            raise RuntimeStepError(instr.line_index, str(exc)) from None
        events.append(TraceEvent(
            instr.line_index, instr.module_name, instr.output_var,
            {k: display(v) for k, v in inputs.items()},
            result_text(value) if instr.module_name == "RESULT" else display(value),
            ctx.details, round((clock() - started) * 1000, 3), attempt,
        ))
        if instr.module_name == "RESULT":
            answer = value
    return answer


def _step(instr: Instruction, env: Env, ctx: StepContext):
    line = instr.line_index
    args = {}
    for key, raw in instr.args:
        if isinstance(raw, VarRef):
            if raw.name not in env:
                raise RuntimeStepError(line, f"UnboundVariable: {raw.name}")
            args[key] = env[raw.name]
        else:
            args[key] = _literal(raw)
    mod = instr.module_name
    try:
        if mod == "LOC":
            out = exec_loc(ctx, _image(args["image"], line), str(args["object"]), bool(args.get("plural", False)))
        elif mod == "CROP":
            out = exec_crop(args["image"], args["box"], bool(args.get("per_box", False)), line)
        elif mod in _SIDE_CROPS:
            out = _SIDE_CROPS[mod](args["image"], args["box"], line)
        elif mod == "VQA":
            out = exec_vqa(ctx, _image(args["image"], line), str(args["question"]))
        elif mod == "COUNT":
            out = exec_count(args["box"], line)
        elif mod == "GET":
            out = exec_get(args["array"], int(args["index"]), line)
        elif mod == "EVAL":
            out = exec_eval(str(args["expr"]), env, line)
        elif mod == "RESULT":
            out = result_text(args["var"])
        elif mod == "SELECT":
            out = exec_select(ctx, str(args["question"]), args["evidence"], line)
        else:
            raise RuntimeStepError(line, f"no handler for module {mod}")
    except KeyError as exc:
        raise RuntimeStepError(line, f"missing argument {exc}") from None
    except BackendUnavailable as exc:
        raise RuntimeStepError(line, f"BackendUnavailable: {exc}") from None
    return out, args


_SIDE_CROPS = {
    "CROP_LEFTOF": _side_crop("left"),
    "CROP_RIGHTOF": _side_crop("right"),
    "CROP_ABOVE": _side_crop("above"),
    "CROP_BELOW": _side_crop("below"),
}
