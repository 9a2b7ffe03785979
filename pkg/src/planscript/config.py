"""Run settings: built-in defaults, overlaid by a JSON config file, overlaid by flags."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import DEFAULT_TIMEOUT, BackendSpec, EnsembleConfig, Gateway, build_backend
from .registry import TASK_KINDS, UnknownTaskKind

CONFIG_ENV = "PLANSCRIPT_CONFIG"
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def default_backends(impl: str = "fixture") -> list[BackendSpec]:
    rows = [
        ("detector", "owlvit", 0), ("detector", "owlv2_base", 1), ("detector", "owlv2_large", 2),
        ("vqa", "blip", 0), ("vqa", "vilt", 1), ("vqa", "paligemma", 2),
        ("caption", "florence2", 0),
        ("llm", "gpt35", 0),
    ]
    return [BackendSpec(role, impl, name, priority=prio) for role, name, prio in rows]


@dataclass
class Settings:
    backends: list[BackendSpec] = field(default_factory=default_backends)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    task: str = "gqa"
    impl: str | None = None  # overrides every backend's impl when set
    fixtures: str | None = None
    strict: bool = False
    use_ssparser: bool = True
    use_verifier: bool = True
    use_ensemble: bool = True
    parallel: bool = False
    timeout: float = DEFAULT_TIMEOUT
    workers: int = 1
    repository: str | None = None

    def __post_init__(self):
        if self.task not in TASK_KINDS:
            raise UnknownTaskKind(self.task)
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def specs(self) -> list[BackendSpec]:
        if self.impl is None:
            return list(self.backends)
        return [dataclasses.replace(s, impl=self.impl) for s in self.backends]

    def gateway(self) -> Gateway:
        backends = [build_backend(s, self.fixtures, self.strict, self.timeout) for s in self.specs()]
        return Gateway(backends, self.ensemble, self.use_ensemble)

    def flags(self) -> dict:
        return {
            "task": self.task,
            "ssparser": self.use_ssparser,
            "verifier": self.use_verifier,
            "ensemble": self.use_ensemble,
            "parallel": self.parallel,
            "strict": self.strict,
        }


def _spec(row: dict) -> BackendSpec:
    try:
        return BackendSpec(
            role=row["role"], impl=row.get("impl", "fixture"), name=row["name"],
            endpoint=row.get("endpoint"), fixture=row.get("fixture"),
            priority=int(row.get("priority", 0)), params=dict(row.get("params", {})),
        )
    except KeyError as exc:
        raise ConfigError(f"backend entry is missing {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


_SCALARS = {"task", "impl", "fixtures", "strict", "use_ssparser", "use_verifier",
            "use_ensemble", "parallel", "timeout", "workers", "repository"}


def read_config(path: str | os.PathLike) -> dict:
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version}")
    unknown = set(data) - _SCALARS - {"backends", "ensemble", "schema_version"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {k: data[k] for k in _SCALARS if k in data}
    if "backends" in data:
        out["backends"] = [_spec(r) for r in data["backends"]]
    if "ensemble" in data:
        out["ensemble"] = EnsembleConfig(**data["ensemble"])
    # relative paths in a config file resolve against the file's directory
    base = Path(path).resolve().parent
    for key in ("fixtures", "repository"):
        if out.get(key) and not os.path.isabs(out[key]):
            out[key] = str(base / out[key])
    return out


def load_settings(config_path: str | None = None, overrides: dict | None = None,
                  environ: dict | None = None) -> Settings:
    """Defaults, then the config file (explicit or ``$PLANSCRIPT_CONFIG``), then ``overrides``.

    ``None`` values in ``overrides`` mean "not given on the command line".
    """
    environ = os.environ if environ is None else environ
    path = config_path or environ.get(CONFIG_ENV)
    values = read_config(path) if path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return Settings(**values)
