"""K-shot prompt assembly and script generation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .gateway import Gateway
from .registry import TASK_KINDS, UnknownTaskKind
from .script import VAR_PATTERN
from .ssparser import CLEAN, validate_and_repair

QUESTION_PREFIX = "Question: "
PROGRAM_LINE = "Program:"

_INSTRUCTION_SHAPED = re.compile(rf"^\s*{VAR_PATTERN.pattern}\s*=\s*[A-Z][A-Z0-9_]*\s*\(.*\)\s*$")


class EmptyCompletion(ValueError):
    """The LLM returned nothing that looks like a script."""


class RepositoryError(ValueError):
    pass


@dataclass(frozen=True)
class Example:
    question: str
    script: str


@dataclass(frozen=True)
class TaskSet:
    cot_header: str
    examples: tuple[Example, ...] = ()


@dataclass(frozen=True)
class PlanRequest:
    question: str
    task_kind: str = "gqa"
    llm: str | None = None


@dataclass
class TaskRepository:
    """Per-task CoT header and ordered examples; immutable after load."""

    tasks: dict[str, TaskSet] = field(default_factory=dict)

    def __post_init__(self):
        for kind, task in self.tasks.items():
            for n, ex in enumerate(task.examples):
                outcome = validate_and_repair(ex.script, ex.question, task_kind=kind)
                if outcome.verdict != CLEAN:
                    raise RepositoryError(
                        f"{kind} example {n} ({ex.question!r}) is not clean: {outcome.rule_ids}"
                    )

    def __getitem__(self, kind: str) -> TaskSet:
        if kind not in self.tasks:
            raise UnknownTaskKind(kind)
        return self.tasks[kind]

    def __contains__(self, kind: str) -> bool:
        return kind in self.tasks

    @classmethod
    def load(cls, root: str | Path | None = None, kinds: Iterable[str] = TASK_KINDS) -> TaskRepository:
        """Read ``<root>/<kind>/header.txt`` and ``examples.jsonl``.

        Without ``root`` the bundled repository is used. Missing kinds are skipped.
        """
        base = Path(root) if root is not None else resources.files("planscript").joinpath("data").joinpath("repository")
        tasks = {}
        for kind in kinds:
            folder = base.joinpath(kind)
            header = folder.joinpath("header.txt")
            if not header.is_file():
                continue
            examples = []
            jsonl = folder.joinpath("examples.jsonl")
            if jsonl.is_file():
                for line in jsonl.read_text("utf-8").splitlines():
                    if line.strip():
                        row = json.loads(line)
                        examples.append(Example(row["question"], row["script"]))
            tasks[kind] = TaskSet(header.read_text("utf-8").strip(), tuple(examples))
        return cls(tasks)


def build_prompt(req: PlanRequest, repo: TaskRepository) -> str:
    task = repo[req.task_kind]
    parts = [task.cot_header, ""]
    for ex in task.examples:
        parts += [QUESTION_PREFIX + ex.question, PROGRAM_LINE, ex.script.strip(), ""]
    parts += [QUESTION_PREFIX + req.question, PROGRAM_LINE]
    return "\n".join(parts)


def is_instruction_shaped(line: str) -> bool:
    return bool(_INSTRUCTION_SHAPED.match(line))


def extract_script(completion: str) -> str:
    """Keep the span from the first to the last instruction-shaped line.

    Fences and narration around the span go; comment and blank lines inside it stay.
    """
    lines = (completion or "").splitlines()
    shaped = [i for i, line in enumerate(lines) if is_instruction_shaped(line)]
    if not shaped:
        raise EmptyCompletion("completion has no instruction-shaped line")
    body = lines[shaped[0] : shaped[-1] + 1]
    return "\n".join(line.strip() for line in body)


def generate_script(req: PlanRequest, repo: TaskRepository, gateway: Gateway,
                    temperature: float = 0.0) -> str:
    prompt = build_prompt(req, repo)
    completion = gateway.complete(prompt, temperature=temperature, model=req.llm)
    if not completion or not completion.strip():
        raise EmptyCompletion("LLM returned an empty completion")
    return extract_script(completion)
