"""Module signatures available to planning scripts, per task kind."""

from __future__ import annotations

from dataclasses import dataclass

TASK_KINDS = ("gqa", "nlvr2", "vqav2", "mme", "video")


class UnknownTaskKind(KeyError):
    pass


@dataclass(frozen=True)
class ModuleSignature:
    name: str
    required: tuple[str, ...]
    optional: tuple[str, ...] = ()
    output: str = "Text"

    def accepts(self, key: str) -> bool:
        return key in self.required or key in self.optional


_ALL = {
    sig.name: sig
    for sig in [
        ModuleSignature("LOC", ("image", "object"), ("plural",), "BoxArray"),
        ModuleSignature("VQA", ("image", "question"), (), "Text"),
        ModuleSignature("CROP", ("image", "box"), ("per_box",), "ImageRef"),
        ModuleSignature("CROP_LEFTOF", ("image", "box"), (), "ImageRef"),
        ModuleSignature("CROP_RIGHTOF", ("image", "box"), (), "ImageRef"),
        ModuleSignature("CROP_ABOVE", ("image", "box"), (), "ImageRef"),
        ModuleSignature("CROP_BELOW", ("image", "box"), (), "ImageRef"),
        ModuleSignature("COUNT", ("box",), (), "Number"),
        ModuleSignature("GET", ("array", "index"), (), "Element"),
        ModuleSignature("EVAL", ("expr",), (), "Scalar"),
        ModuleSignature("RESULT", ("var",), (), "Text"),
        ModuleSignature("SELECT", ("question", "evidence"), (), "Text"),
    ]
}

_GQA = ("LOC", "VQA", "CROP", "CROP_LEFTOF", "CROP_RIGHTOF", "CROP_ABOVE",
        "CROP_BELOW", "COUNT", "GET", "EVAL", "RESULT")
_TASK_MODULES = {
    "gqa": _GQA,
    "vqav2": _GQA,
    "mme": _GQA,
    "nlvr2": ("VQA", "EVAL", "RESULT"),
    "video": ("VQA", "SELECT", "RESULT"),
}


@dataclass(frozen=True)
class ModuleRegistry:
    modules: dict[str, ModuleSignature]

    def __contains__(self, name: str) -> bool:
        return name in self.modules

    def __getitem__(self, name: str) -> ModuleSignature:
        return self.modules[name]

    def names(self) -> list[str]:
        return sorted(self.modules)


def registry_for(task_kind: str) -> ModuleRegistry:
    try:
        names = _TASK_MODULES[task_kind]
    except KeyError:
        raise UnknownTaskKind(task_kind) from None
    return ModuleRegistry({n: _ALL[n] for n in names})


def seed_variables(task_kind: str) -> tuple[str, ...]:
    """Variables bound before the first step."""
    if task_kind == "nlvr2":
        return ("LEFT", "RIGHT", "IMAGE")
    return ("IMAGE",)
