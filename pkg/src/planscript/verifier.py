"""Output verification: caption consistency for images, branch fusion for video."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import asdict, dataclass
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Sequence

from .gateway import BackendUnavailable, Gateway, normalize_answer
from .values import ImageRef

log = logging.getLogger(__name__)

HIGH = "high"
NORMAL = "normal"


@lru_cache(maxsize=None)
def _template(name: str) -> Template:
    text = resources.files("planscript").joinpath("data").joinpath(name).read_text("utf-8")
    return Template(text)


@dataclass
class CaptionVerdict:
    caption: str
    has_clues: bool
    caption_answer: str | None
    final_answer: str
    confidence: str
    executor_answer: str
    overwritten: bool = False
    degraded: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


def verifier_prompt(caption: str, question: str, executor_answer: str) -> str:
    return _template("verifier_prompt.txt").substitute(
        caption=caption, question=question, answer=executor_answer
    )


_MARKER = re.compile(r"(?:^|(?<=\s))\(?(iii|ii|i|[123])[.):]\s+", re.IGNORECASE | re.MULTILINE)
_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_QUOTED = re.compile(r"(?:^|(?<=\s))[\"“']([^\"”']+)[\"”']")
_ANSWER_IS = re.compile(r"answer\s+(?:is|should be|would be|remains)\s*:?\s*(.+)", re.IGNORECASE)
_ROMAN = {"i": 1, "ii": 2, "iii": 3}


def _segments(raw: str) -> dict[int, str]:
    marks = list(_MARKER.finditer(raw))
    out: dict[int, str] = {}
    for n, m in enumerate(marks):
        label = m.group(1).lower()
        num = _ROMAN.get(label) or int(label)
        end = marks[n + 1].start() if n + 1 < len(marks) else len(raw)
        out.setdefault(num, raw[m.end() : end].strip())
    return out


def _succinct(segment: str) -> str | None:
    quoted = _QUOTED.search(segment)
    if quoted:
        text = quoted.group(1)
    else:
        m = _ANSWER_IS.search(segment)
        text = m.group(1) if m else segment
        text = text.strip().splitlines()[0] if text.strip() else ""
    text = text.strip().strip(".!,;:").strip()
    return normalize_answer(text) if text else None


def parse_llm_verdict(raw: str) -> tuple[bool, str | None, str | None]:
    """Read ``(has_clues, caption_answer, final_answer)`` from a numbered reply.

    Anything short of an explicit yes to item 1 plus a usable item 3 reads as
    "no clues".
    """
    segments = _segments(raw or "")
    if 1 not in segments or 3 not in segments:
        return False, None, None
    first = _YES_NO.search(segments[1])
    if not first or first.group(1).lower() != "yes":
        return False, None, None
    answer = _succinct(segments[3])
    if answer is None:
        return False, None, None
    return True, answer, answer


def start_caption(gateway: Gateway, image: ImageRef) -> str | None:
    """The half of verification that does not need the executor's answer."""
    try:
        return gateway.caption(image)
    except BackendUnavailable as exc:
        log.warning("caption unavailable: %s", exc)
        return None


def verify_with_caption(
    image: ImageRef,
    question: str,
    executor_answer: str,
    gateway: Gateway,
    caption: str | None = None,
) -> CaptionVerdict:
    """Cross-check ``executor_answer`` against a caption-derived answer.

    Backend failures degrade to pass-through; fixture misses still propagate.
    """
    def passthrough(reason, cap=""):
        return CaptionVerdict(cap or "", False, None, executor_answer, NORMAL, executor_answer,
                              degraded=reason)

    if caption is None:
        caption = start_caption(gateway, image)
        if caption is None:
            return passthrough("caption backend unavailable")
    try:
        reply = gateway.complete(verifier_prompt(caption, question, executor_answer))
    except BackendUnavailable as exc:
        return passthrough(f"llm unavailable: {exc}", caption)
    has_clues, caption_answer, _ = parse_llm_verdict(reply)
    if not has_clues:
        return CaptionVerdict(caption, False, None, executor_answer, NORMAL, executor_answer)
    if caption_answer == normalize_answer(executor_answer):
        return CaptionVerdict(caption, True, caption_answer, executor_answer, HIGH, executor_answer)
    return CaptionVerdict(caption, True, caption_answer, caption_answer, NORMAL, executor_answer,
                          overwritten=True)


# -- video branch fusion ---------------------------------------------------------------


@dataclass(frozen=True)
class AnswerDistribution:
    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        for p in probs:
            if not math.isfinite(p) or not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return len(self.probs)

    def argmax(self) -> int:
        best = max(self.probs)
        return self.probs.index(best)

    @classmethod
    def from_scores(cls, scores: Sequence[float]) -> AnswerDistribution:
        """Normalize non-negative scores; all-zero scores become uniform."""
        clipped = [max(0.0, float(s)) for s in scores]
        total = sum(clipped)
        if total == 0:
            return cls(tuple(1.0 / len(clipped) for _ in clipped))
        return cls(tuple(s / total for s in clipped))


def select_fuse(vqa_branch: AnswerDistribution, caption_branch: AnswerDistribution) -> tuple[int, bool]:
    """The caption branch wins only if its peak is strictly higher."""
    if len(vqa_branch) != len(caption_branch):
        raise ValueError(f"distribution lengths differ: {len(vqa_branch)} vs {len(caption_branch)}")
    if max(caption_branch.probs) > max(vqa_branch.probs):
        return caption_branch.argmax(), True
    return vqa_branch.argmax(), False


def select_prompt(question: str, evidence: str, choices: Sequence[str]) -> str:
    listing = "\n".join(f"{i}. {c}" for i, c in enumerate(choices, 1))
    return _template("select_prompt.txt").substitute(question=question, evidence=evidence, choices=listing)


_SCORE_LINE = re.compile(r"^\s*\(?([0-9]+)[.):]?\s*[:\-=]?\s*.*?([0-9]+(?:\.[0-9]+)?)\s*%?\s*$")


def parse_choice_scores(reply: str, n: int) -> list[float] | None:
    scores: dict[int, float] = {}
    for line in reply.splitlines():
        m = _SCORE_LINE.match(line)
        if m and 1 <= int(m.group(1)) <= n:
            scores.setdefault(int(m.group(1)), float(m.group(2)))
    if len(scores) == n:
        return [scores[i] for i in range(1, n + 1)]
    return None


def score_choices(gateway: Gateway, question: str, evidence: str, choices: Sequence[str]) -> AnswerDistribution:
    """Ask the LLM for 0-100 scores per choice and normalize them."""
    reply = gateway.complete(select_prompt(question, evidence, choices))
    scores = parse_choice_scores(reply, len(choices))
    if scores is None:
        log.warning("could not read choice scores from %r; using uniform", reply[:80])
        scores = [1.0] * len(choices)
    return AnswerDistribution.from_scores(scores)

