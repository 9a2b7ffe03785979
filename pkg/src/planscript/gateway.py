"""Uniform access to detector, VQA, captioner and LLM backends.

Backends answer canonical requests ``(role, image, query, flags)`` with JSON
responses. Three implementations exist: replay from a JSONL fixture store,
HTTP, and a recorder that replays when it can and records live answers when
it cannot. :class:`Gateway` groups backends by role and fuses their outputs.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import os
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .evallang import coerce, display
from .values import Box, BoxArray, BoxError, ImageRef, clamp_box, iou

log = logging.getLogger(__name__)

ROLES = ("detector", "vqa", "caption", "llm")
DEFAULT_TIMEOUT = 30.0


class BackendUnavailable(RuntimeError):
    pass


class FixtureMiss(LookupError):
    def __init__(self, backend: str, key: dict):
        self.backend = backend
        self.key = key
        super().__init__(f"no fixture for backend {backend!r} at key {json.dumps(key, sort_keys=True)}")


class StoreReadOnly(PermissionError):
    pass


def normalize_query(text: str) -> str:
    return " ".join(text.split()).lower()


def canonical_key(role: str, image: str | None, query: str, flags: dict | None = None) -> dict:
    return {
        "role": role,
        "image": image,
        "query": normalize_query(query),
        "flags": dict(sorted((flags or {}).items())),
    }


def _key_str(key: dict) -> str:
    return json.dumps(key, sort_keys=True, separators=(",", ":"))


class FixtureStore:
    """Recorded responses keyed canonically; one JSONL line per record."""

    def __init__(self, path: str | os.PathLike | None = None, readonly: bool = True):
        self.path = Path(path) if path else None
        self.readonly = readonly
        self._records: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for n, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        row = json.loads(line)
                        self._records[_key_str(row["key"])] = row["response"]
                    except (json.JSONDecodeError, KeyError) as exc:
                        raise ValueError(f"{self.path}:{n}: bad fixture line") from exc

    def __len__(self):
        return len(self._records)

    def get(self, key: dict) -> dict | None:
        return self._records.get(_key_str(key))

    def add(self, key: dict, response: dict) -> None:
        if self.readonly:
            raise StoreReadOnly(f"fixture store {self.path} is replay-only")
        with self._lock:
            self._records[_key_str(key)] = response
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "response": response}, sort_keys=True) + "\n")


@dataclass(frozen=True)
class BackendSpec:
    role: str
    impl: str
    name: str
    endpoint: str | None = None
    fixture: str | None = None
    priority: int = 0
    params: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown backend role {self.role!r}")
        if self.impl not in ("fixture", "http", "record"):
            raise ValueError(f"unknown backend impl {self.impl!r}")


class Backend:
    def __init__(self, spec: BackendSpec):
        self.spec = spec

    @property
    def name(self) -> str:
        return self.spec.name

    def request(self, role: str, image: ImageRef | None, query: str, flags: dict | None = None) -> dict:
        raise NotImplementedError


class FixtureBackend(Backend):
    """Replay backend. In strict mode a miss raises :class:`FixtureMiss`;
    otherwise it is reported as :class:`BackendUnavailable`."""

    def __init__(self, spec: BackendSpec, store: FixtureStore, strict: bool = True):
        super().__init__(spec)
        self.store = store
        self.strict = strict

    def request(self, role, image, query, flags=None):
        key = canonical_key(role, image.id if image else None, query, flags)
        response = self.store.get(key)
        if response is None:
            miss = FixtureMiss(self.name, key)
            if self.strict:
                raise miss
            raise BackendUnavailable(str(miss))
        if "error" in response:
            raise BackendUnavailable(f"{self.name}: recorded error {response['error']}")
        return response


def _encode_image(image: ImageRef) -> dict:
    if image.source and os.path.exists(image.source):
        from PIL import Image

        with Image.open(image.source) as im:
            if image.region:
                im = im.crop(image.region)
            buf = io.BytesIO()
            im.convert("RGB").save(buf, format="PNG")
        return {"image_b64": base64.b64encode(buf.getvalue()).decode("ascii")}
    return {"image_url": image.id}


class HttpBackend(Backend):
    """One JSON POST per request to ``spec.endpoint``."""

    def __init__(self, spec: BackendSpec, timeout: float = DEFAULT_TIMEOUT, session=None):
        super().__init__(spec)
        if not spec.endpoint:
            raise ValueError(f"http backend {spec.name!r} has no endpoint")
        self.timeout = timeout
        self.session = session or requests.Session()

    def request(self, role, image, query, flags=None):
        payload = {"role": role, "query": query, "flags": dict(flags or {}), **self.spec.params}
        if image is not None:
            payload.update(_encode_image(image))
        try:
            resp = self.session.post(self.spec.endpoint, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.name}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"{self.name}: HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendUnavailable(f"{self.name}: response is not JSON") from exc


class CallableBackend(Backend):
    """Answers from a Python callable; handy as the live side of a recorder."""

    def __init__(self, spec: BackendSpec, respond):
        super().__init__(spec)
        self.respond = respond

    def request(self, role, image, query, flags=None):
        response = self.respond(self.name, role, image, query, dict(flags or {}))
        if response is None:
            raise BackendUnavailable(f"{self.name}: no answer for {role} {query[:60]!r}")
        return response


class RecordingBackend(Backend):
    """Replays what the store has; asks ``live`` and records everything else."""

    def __init__(self, spec: BackendSpec, store: FixtureStore, live: Backend):
        super().__init__(spec)
        self.store = store
        self.live = live

    def request(self, role, image, query, flags=None):
        key = canonical_key(role, image.id if image else None, query, flags)
        response = self.store.get(key)
        if response is None:
            response = self.live.request(role, image, query, flags)
            self.store.add(key, response)
        return response


# -- fusion -------------------------------------------------------------------------


@dataclass(frozen=True)
class Detection:
    box: Box
    label: str
    source_backend: str

    @property
    def score(self) -> float:
        return self.box.score


@dataclass(frozen=True)
class Cluster:
    members: tuple[Detection, ...]

    @property
    def score(self) -> float:
        return sum(d.score for d in self.members)

    @property
    def representative(self) -> Detection:
        return max(self.members, key=lambda d: d.score)

    @property
    def voters(self) -> frozenset[str]:
        return frozenset(d.source_backend for d in self.members)


def cluster_detections(detections, priorities: dict[str, int], iou_threshold: float) -> list[Cluster]:
    """Greedy IoU clustering, independent of the order backends are listed in."""
    order = sorted(
        detections,
        key=lambda d: (-d.score, priorities.get(d.source_backend, 0), d.source_backend, d.box.coords()),
    )
    groups: list[list[Detection]] = []
    for det in order:
        for group in groups:
            if iou(group[0].box, det.box) >= iou_threshold:
                group.append(det)
                break
        else:
            groups.append([det])
    return [Cluster(tuple(g)) for g in groups]


def ensemble_detect(
    detections_by_backend: dict[str, list[Detection]],
    priorities: dict[str, int] | None = None,
    iou_threshold: float = 0.5,
    min_votes: int = 2,
) -> tuple[BoxArray, list[Cluster]]:
    """Fuse detections: clusters voted for by ``min_votes`` distinct backends
    survive, ranked by the sum of their members' scores.

    Each surviving cluster yields its max-score member's box. Its score is
    the cluster score divided by the number of backends consulted (capped at
    1) so that it stays a valid box score and sorts like the cluster score.
    """
    priorities = priorities or {}
    pooled = [d for dets in detections_by_backend.values() for d in dets]
    clusters = cluster_detections(pooled, priorities, iou_threshold)
    kept = [c for c in clusters if len(c.voters) >= min_votes]
    kept.sort(key=lambda c: (-c.score, c.representative.box.coords()))
    n = max(1, len(detections_by_backend))
    boxes = []
    for c in kept:
        rep = c.representative.box
        boxes.append(Box(rep.x1, rep.y1, rep.x2, rep.y2, min(1.0, c.score / n)))
    return BoxArray(tuple(boxes)), kept


def normalize_answer(answer: str) -> str:
    text = answer.strip().lower().rstrip(".!").strip()
    return display(coerce(text))


def ensemble_vqa(answers: list[tuple[str, str]], priorities: dict[str, int] | None = None) -> str:
    """Majority vote over ``(backend, answer)`` pairs.

    Ties go to the answer backed by the highest-priority backend (lowest
    priority number). A single answer is returned verbatim.
    """
    if not answers:
        raise BackendUnavailable("no VQA answers to fuse")
    if len(answers) == 1:
        return answers[0][1]
    priorities = priorities or {}
    normalized = [(name, normalize_answer(a)) for name, a in answers]
    votes = Counter(a for _, a in normalized)
    top = max(votes.values())
    tied = {a for a, n in votes.items() if n == top}

    def best_rank(answer):
        return min((priorities.get(name, 0), name) for name, a in normalized if a == answer)

    return min(tied, key=best_rank)


def _parse_detections(response: dict, image: ImageRef, obj: str, backend: str) -> list[Detection]:
    out = []
    for raw in response.get("detections", []):
        label = raw.get("label", obj)
        if normalize_query(label) != normalize_query(obj):
            continue
        try:
            box = clamp_box(*raw["box"], image.width, image.height, score=raw.get("score", 1.0))
        except (BoxError, KeyError, TypeError, ValueError):
            log.warning("dropping unusable detection %r from %s", raw, backend)
            continue
        out.append(Detection(box, label, backend))
    out.sort(key=lambda d: -d.score)
    return out


@dataclass
class EnsembleConfig:
    iou_threshold: float = 0.5
    min_votes: int = 2


class Gateway:
    """Role-indexed backends plus the fusion rules.

    ``use_ensemble=False`` routes every call to the highest-priority backend
    of the role. Safe for concurrent use once constructed.
    """

    def __init__(self, backends: list[Backend], ensemble: EnsembleConfig | None = None,
                 use_ensemble: bool = True):
        self.ensemble = ensemble or EnsembleConfig()
        self.use_ensemble = use_ensemble
        self.by_role: dict[str, list[Backend]] = {r: [] for r in ROLES}
        for b in sorted(backends, key=lambda b: (b.spec.priority, b.name)):
            self.by_role[b.spec.role].append(b)
        for role, members in self.by_role.items():
            prios = [b.spec.priority for b in members]
            if len(set(prios)) != len(prios):
                raise ValueError(f"backend priorities for role {role!r} are not unique")

    def _members(self, role: str) -> list[Backend]:
        members = self.by_role[role]
        if not members:
            raise BackendUnavailable(f"no {role} backend configured")
        return members if self.use_ensemble else members[:1]

    def _priorities(self, role: str) -> dict[str, int]:
        return {b.name: b.spec.priority for b in self.by_role[role]}

    def detect(self, backend: Backend, image: ImageRef, obj: str) -> list[Detection]:
        response = backend.request("detector", image, obj)
        return _parse_detections(response, image, obj, backend.name)

    def locate(self, image: ImageRef, obj: str) -> tuple[BoxArray, dict]:
        """Detect ``obj``; returns the boxes and per-backend details for traces."""
        members = self._members("detector")
        found: dict[str, list[Detection]] = {}
        errors = {}
        for b in members:
            try:
                found[b.name] = self.detect(b, image, obj)
            except BackendUnavailable as exc:
                errors[b.name] = str(exc)
        if not found:
            raise BackendUnavailable(f"all detectors failed: {errors}")
        details = {
            "votes": {n: [[*d.box.coords(), d.score] for d in dets] for n, dets in found.items()},
            "errors": errors,
        }
        if len(members) == 1:
            return BoxArray(tuple(d.box for d in next(iter(found.values())))), details
        boxes, clusters = ensemble_detect(
            found, self._priorities("detector"), self.ensemble.iou_threshold, self.ensemble.min_votes
        )
        details["clusters"] = [
            {"box": list(c.representative.box.coords()), "score": round(c.score, 6),
             "voters": sorted(c.voters)}
            for c in clusters
        ]
        return boxes, details

    def answer(self, backend: Backend, image: ImageRef, question: str) -> str:
        response = backend.request("vqa", image, question)
        if "answers" in response and response["answers"]:
            return str(response["answers"][0])
        if "text" in response:
            return str(response["text"])
        raise BackendUnavailable(f"{backend.name}: empty VQA response")

    def vqa(self, image: ImageRef, question: str) -> tuple[str, dict]:
        members = self._members("vqa")
        answers, errors = [], {}
        for b in members:
            try:
                answers.append((b.name, self.answer(b, image, question)))
            except BackendUnavailable as exc:
                errors[b.name] = str(exc)
        if not answers:
            raise BackendUnavailable(f"all VQA backends failed: {errors}")
        fused = ensemble_vqa(answers, self._priorities("vqa"))
        return fused, {"votes": dict(answers), "errors": errors}

    def _text(self, role: str, image: ImageRef | None, query: str, flags=None) -> str:
        errors = {}
        for b in self._members(role):
            try:
                response = b.request(role, image, query, flags)
            except BackendUnavailable as exc:
                errors[b.name] = str(exc)
                continue
            if "text" in response:
                return str(response["text"])
            errors[b.name] = "response has no text"
        raise BackendUnavailable(f"all {role} backends failed: {errors}")

    def caption(self, image: ImageRef) -> str:
        return self._text("caption", image, "")

    def complete(self, prompt: str, **params) -> str:
        flags = {k: v for k, v in params.items() if v is not None}
        return self._text("llm", None, prompt, flags)


def build_backend(spec: BackendSpec, fixtures_dir: str | os.PathLike | None = None,
                  strict: bool = True, timeout: float = DEFAULT_TIMEOUT) -> Backend:
    def store(readonly: bool) -> FixtureStore:
        path = spec.fixture or f"{spec.name}.jsonl"
        if fixtures_dir and not os.path.isabs(path):
            path = os.path.join(fixtures_dir, path)
        return FixtureStore(path, readonly=readonly)

    if spec.impl == "fixture":
        return FixtureBackend(spec, store(True), strict=strict)
    if spec.impl == "http":
        return HttpBackend(spec, timeout=timeout)
    return RecordingBackend(spec, store(False), HttpBackend(spec, timeout=timeout))
