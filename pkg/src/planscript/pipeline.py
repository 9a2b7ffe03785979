"""One question end to end: plan, validate, execute, verify."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .executor import ERROR, ExecutionResult, execute, seed_env
from .gateway import BackendUnavailable, Gateway
from .planner import EmptyCompletion, PlanRequest, TaskRepository, generate_script
from .script import MalformedLine, Script, parse_script, render_script
from .ssparser import FALLBACK, RepairOutcome, make_fallback, validate_and_repair
from .values import ImageRef
from .verifier import (
    AnswerDistribution,
    CaptionVerdict,
    score_choices,
    select_fuse,
    start_caption,
    verify_with_caption,
)

log = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1
STAGES = ("plan", "parse", "execute", "verify")
CAPTION_CHECKED = ("gqa", "vqav2", "mme")


@dataclass
class PipelineOptions:
    use_ssparser: bool = True
    use_verifier: bool = True
    parallel: bool = False


@dataclass
class PipelineResult:
    question: str
    task_kind: str
    answer: str
    status: str
    source_script: str
    repair: RepairOutcome | None
    execution: ExecutionResult
    verdict: CaptionVerdict | None = None
    video: dict | None = None
    plan_error: str | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status != ERROR

    def to_json(self) -> dict:
        return {
            "schema_version": TRACE_SCHEMA_VERSION,
            "question": self.question,
            "task_kind": self.task_kind,
            "answer": self.answer,
            "status": self.status,
            "plan_error": self.plan_error,
            "source_script": self.source_script,
            "repair": self.repair.to_json() if self.repair else None,
            "execution": self.execution.to_json(),
            "verifier": self.verdict.to_json() if self.verdict else None,
            "video": self.video,
            "timings_ms": self.timings,
        }


def _plan(question, task_kind, gateway, repo) -> tuple[str | None, str | None]:
    try:
        return generate_script(PlanRequest(question, task_kind), repo, gateway), None
    except (EmptyCompletion, BackendUnavailable) as exc:
        log.warning("planning failed, using fallback: %s", exc)
        return None, f"{type(exc).__name__}: {exc}"


def _prepare(source, question, task_kind, use_ssparser) -> tuple[Script, RepairOutcome | None]:
    if source is None:
        return make_fallback(question, task_kind), None
    if use_ssparser:
        outcome = validate_and_repair(source, question, task_kind=task_kind)
        return outcome.script, outcome
    try:
        return parse_script(source), None
    except MalformedLine as exc:
        # without the parser nothing can be repaired; keep the run alive
        log.warning("unparseable script, using fallback: %s", exc)
        return make_fallback(question, task_kind), None


def _video_branch(gateway: Gateway, image: ImageRef, question: str, choices: Sequence[str]):
    caption = start_caption(gateway, image)
    if caption is None:
        return None, None
    try:
        return caption, score_choices(gateway, question, caption, choices)
    except BackendUnavailable as exc:
        log.warning("caption branch unavailable: %s", exc)
        return caption, None


def _vqa_distribution(execution: ExecutionResult, choices: Sequence[str]) -> AnswerDistribution:
    for event in reversed(execution.trace):
        if event.module_name == "SELECT" and "distribution" in event.details:
            return AnswerDistribution(tuple(event.details["distribution"]))
    # no SELECT ran (e.g. the fallback script): a matching choice gets all the mass
    probs = [1.0 if c.strip().lower() == execution.final_answer.strip().lower() else 0.0 for c in choices]
    return AnswerDistribution.from_scores(probs)


def run_pipeline(
    question: str,
    images: Sequence[ImageRef],
    gateway: Gateway,
    repo: TaskRepository,
    task_kind: str = "gqa",
    options: PipelineOptions | None = None,
    choices: Sequence[str] | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> PipelineResult:
    """Answer ``question``.

    Fixture misses propagate; every other backend failure degrades.
    With ``parallel`` the caption half of verification overlaps planning
    and execution.
    """
    options = options or PipelineOptions()
    timings: dict[str, float] = {}
    env = seed_env(task_kind, images)
    image = env["IMAGE"]
    verify_kind = None
    if options.use_verifier:
        if task_kind in CAPTION_CHECKED:
            verify_kind = "caption"
        elif task_kind == "video" and choices:
            verify_kind = "video"

    pool = ThreadPoolExecutor(max_workers=1) if options.parallel and verify_kind else None
    pending = None
    if pool is not None:
        if verify_kind == "caption":
            pending = pool.submit(start_caption, gateway, image)
        else:
            pending = pool.submit(_video_branch, gateway, image, question, choices)
    started = clock()
    try:
        t = clock()
        source, plan_error = _plan(question, task_kind, gateway, repo)
        timings["plan"] = clock() - t

        t = clock()
        script, repair = _prepare(source, question, task_kind, options.use_ssparser)
        timings["parse"] = clock() - t

        t = clock()
        execution = execute(script, env, gateway, question=question, task_kind=task_kind, choices=choices,
                            clock=clock)
        timings["execute"] = clock() - t

        t = clock()
        answer, verdict, video = execution.final_answer, None, None
        if verify_kind == "caption" and execution.status != ERROR:
            caption = pending.result() if pending else None
            verdict = verify_with_caption(image, question, answer, gateway, caption=caption)
            answer = verdict.final_answer
        elif verify_kind == "video" and execution.status != ERROR:
            caption, q = pending.result() if pending else _video_branch(gateway, image, question, choices)
            if q is not None:
                p = _vqa_distribution(execution, choices)
                index, overwritten = select_fuse(p, q)
                answer = choices[index]
                video = {"caption": caption, "vqa_branch": list(p.probs), "caption_branch": list(q.probs),
                         "chosen_index": index, "overwritten": overwritten}
        timings["verify"] = clock() - t
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    timings["total"] = clock() - started
    return PipelineResult(
        question, task_kind, answer, execution.status,
        source if source is not None else render_script(script),
        repair,
        execution, verdict, video, plan_error,
        {k: round(v * 1000, 3) for k, v in timings.items()},
    )


def fallback_used(result: PipelineResult) -> bool:
    return result.repair is not None and result.repair.verdict == FALLBACK
