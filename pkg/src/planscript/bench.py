"""Benchmark replay: run the pipeline over a JSONL sample file and score it."""

from __future__ import annotations

import contextlib
import dataclasses
import json
import logging
import socket
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .config import Settings
from .gateway import FixtureMiss, normalize_answer
from .pipeline import STAGES, PipelineOptions, PipelineResult, run_pipeline
from .planner import TaskRepository
from .registry import TASK_KINDS, UnknownTaskKind
from .values import ImageRef

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

ABLATIONS = (
    ("baseline", dict(use_ssparser=False, use_verifier=False, use_ensemble=False)),
    ("baseline+capverif", dict(use_ssparser=False, use_verifier=True, use_ensemble=False)),
    ("plan+ssparser", dict(use_ssparser=True, use_verifier=True, use_ensemble=False)),
    ("all", dict(use_ssparser=True, use_verifier=True, use_ensemble=True)),
)


class SampleError(ValueError):
    pass


class BenchAborted(RuntimeError):
    def __init__(self, sample_id: str, miss: FixtureMiss):
        super().__init__(f"sample {sample_id}: {miss}")
        self.sample_id = sample_id
        self.miss = miss


class NetworkUsed(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchmarkSample:
    id: str
    task_kind: str
    images: tuple[ImageRef, ...]
    question: str
    ground_truth: str
    choices: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise UnknownTaskKind(self.task_kind)
        if not str(self.ground_truth).strip():
            raise SampleError(f"sample {self.id}: empty ground truth")


def _image(entry, base: Path | None) -> ImageRef:
    if isinstance(entry, dict):
        path = entry.get("path")
        if path and base and not Path(path).is_absolute():
            path = str(base / path)
        return ImageRef(entry["id"], int(entry["width"]), int(entry["height"]), path)
    path = Path(entry)
    full = path if path.is_absolute() or base is None else base / path
    from PIL import Image

    with Image.open(full) as im:
        width, height = im.size
    return ImageRef(str(entry), width, height, str(full))


def parse_sample(row: dict, base: Path | None = None) -> BenchmarkSample:
    try:
        choices = row.get("choices")
        return BenchmarkSample(
            id=str(row["id"]),
            task_kind=row.get("task_kind", "gqa"),
            images=tuple(_image(e, base) for e in row["images"]),
            question=row["question"],
            ground_truth=str(row["answer"]),
            choices=tuple(choices) if choices else None,
        )
    except KeyError as exc:
        raise SampleError(f"sample is missing field {exc}") from None


def load_samples(path: str | Path) -> list[BenchmarkSample]:
    path = Path(path)
    out = []
    for n, line in enumerate(path.read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(parse_sample(json.loads(line), path.parent))
        except (json.JSONDecodeError, SampleError, ValueError) as exc:
            raise SampleError(f"{path}:{n}: {exc}") from None
    return out


# -- hermeticity -----------------------------------------------------------------------


class NetworkSentinel:
    """Counts and blocks outbound socket connections while active."""

    def __init__(self):
        self.attempts: list[str] = []
        self._lock = threading.Lock()

    @contextlib.contextmanager
    def active(self) -> Iterator[NetworkSentinel]:
        real_connect = socket.socket.connect
        real_create = socket.create_connection
        sentinel = self

        def connect(sock, address):
            sentinel._hit(address)

        def create_connection(address, *args, **kwargs):
            sentinel._hit(address)

        socket.socket.connect = connect
        socket.create_connection = create_connection
        try:
            yield self
        finally:
            socket.socket.connect = real_connect
            socket.create_connection = real_create

    def _hit(self, address):
        with self._lock:
            self.attempts.append(repr(address))
        raise NetworkUsed(f"network access attempted: {address!r}")


# -- scoring ---------------------------------------------------------------------------


@dataclass
class SampleOutcome:
    id: str
    answer: str | None
    ground_truth: str
    correct: bool | None
    status: str
    ssparser_verdict: str | None = None
    repairs: list[str] = field(default_factory=list)
    verifier: dict | None = None
    skipped: str | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def to_json(self, include_timings: bool = True) -> dict:
        data = dataclasses.asdict(self)
        if not include_timings:
            data.pop("timings")
        return data


def is_correct(answer: str, ground_truth: str) -> bool:
    return normalize_answer(answer) == normalize_answer(ground_truth)


def _outcome(sample: BenchmarkSample, result: PipelineResult) -> SampleOutcome:
    verifier = None
    if result.verdict is not None:
        verifier = {"overwritten": result.verdict.overwritten, "confidence": result.verdict.confidence}
    elif result.video is not None:
        verifier = {"overwritten": result.video["overwritten"], "chosen_index": result.video["chosen_index"]}
    return SampleOutcome(
        sample.id, result.answer, sample.ground_truth, is_correct(result.answer, sample.ground_truth),
        result.status,
        result.repair.verdict if result.repair else None,
        list(result.repair.rule_ids) if result.repair else [],
        verifier,
        None,
        result.timings,
    )


@dataclass
class RunReport:
    config: dict
    samples: list[SampleOutcome]
    network_calls: int = 0

    @property
    def evaluated(self) -> list[SampleOutcome]:
        return [s for s in self.samples if s.skipped is None]

    @property
    def correct(self) -> int:
        return sum(1 for s in self.evaluated if s.correct)

    @property
    def accuracy(self) -> float | None:
        n = len(self.evaluated)
        return self.correct / n if n else None

    def stage_timings(self) -> dict[str, dict[str, float]]:
        table = {}
        done = self.evaluated
        for stage in (*STAGES, "total"):
            values = [s.timings.get(stage, 0.0) for s in done]
            total = sum(values)
            table[stage] = {"total_ms": round(total, 3), "mean_ms": round(total / len(values), 3) if values else 0.0}
        return table

    def to_json(self, include_timings: bool = True) -> dict:
        acc = self.accuracy
        data = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config,
            "total": len(self.samples),
            "evaluated": len(self.evaluated),
            "skipped": len(self.samples) - len(self.evaluated),
            "correct": self.correct,
            "accuracy": round(acc, 6) if acc is not None else "n/a",
            "network_calls": self.network_calls,
            "samples": [s.to_json(include_timings) for s in self.samples],
        }
        if include_timings:
            data["stage_timings"] = self.stage_timings()
        return data

    def dumps(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_json(include_timings), indent=2, sort_keys=True)

    def summary(self) -> str:
        acc = self.accuracy
        acc_text = f"{acc:.1%}" if acc is not None else "n/a"
        lines = [
            f"samples: {len(self.samples)}  evaluated: {len(self.evaluated)}  "
            f"skipped: {len(self.samples) - len(self.evaluated)}",
            f"accuracy: {acc_text} ({self.correct}/{len(self.evaluated)})",
            "stage        total ms     mean ms",
        ]
        for stage, row in self.stage_timings().items():
            lines.append(f"{stage:<10}{row['total_ms']:>11.1f}{row['mean_ms']:>12.2f}")
        return "\n".join(lines)


def run_bench(samples: list[BenchmarkSample], settings: Settings, repo: TaskRepository | None = None) -> RunReport:
    """Score ``samples`` under ``settings``.

    Fixture backends always fail hard on a miss here; ``settings.strict``
    decides whether that aborts the run or skips the sample.
    """
    repo = repo or TaskRepository.load(settings.repository)
    gateway = dataclasses.replace(settings, strict=True).gateway()
    options = PipelineOptions(settings.use_ssparser, settings.use_verifier, settings.parallel)
    sentinel = NetworkSentinel()
    hermetic = all(s.impl == "fixture" for s in settings.specs())

    def one(sample: BenchmarkSample) -> SampleOutcome:
        try:
            result = run_pipeline(sample.question, sample.images, gateway, repo, sample.task_kind,
                                  options, sample.choices)
        except FixtureMiss as miss:
            if settings.strict:
                raise BenchAborted(sample.id, miss) from None
            log.warning("skipping sample %s: %s", sample.id, miss)
            return SampleOutcome(sample.id, None, sample.ground_truth, None, "skipped", skipped=str(miss))
        return _outcome(sample, result)

    guard = sentinel.active() if hermetic else contextlib.nullcontext()
    with guard:
        if settings.workers > 1:
            with ThreadPoolExecutor(max_workers=settings.workers) as pool:
                outcomes = list(pool.map(one, samples))
        else:
            outcomes = [one(s) for s in samples]
    return RunReport(settings.flags(), outcomes, len(sentinel.attempts))


def run_ablation(samples: list[BenchmarkSample], settings: Settings,
                 repo: TaskRepository | None = None) -> dict[str, RunReport]:
    repo = repo or TaskRepository.load(settings.repository)
    return {
        name: run_bench(samples, dataclasses.replace(settings, **flags), repo)
        for name, flags in ABLATIONS
    }
