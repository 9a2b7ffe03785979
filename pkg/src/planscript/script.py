"""Planning-script IR and a lossless text <-> IR round trip.

A planning script is one module call per line::

    BOX0=LOC(image=IMAGE,object='grass')
    IMAGE0=CROP(image=IMAGE,box=BOX0)
    FINAL_ANSWER=RESULT(var=ANSWER0)

Nothing here interprets a call; module existence and variable liveness are
checked by :mod:`planscript.ssparser`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

VAR_PATTERN = re.compile(r"[A-Z][A-Z0-9_]*")
_KEY_PATTERN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT_PATTERN = re.compile(r"-?[0-9]+")


class MalformedLine(ValueError):
    """A line does not match ``OUT=MODULE(k=v,...)``."""

    def __init__(self, message: str, line_index: int = 0, line: str = ""):
        super().__init__(f"line {line_index}: {message}: {line!r}")
        self.reason = message
        self.line_index = line_index
        self.line = line


@dataclass(frozen=True)
class StringLiteral:
    value: str
    # surface quote character; kept for faithful rendering only
    quote: str = field(default="'", compare=False)


@dataclass(frozen=True)
class VarRef:
    name: str

    def __post_init__(self):
        if not VAR_PATTERN.fullmatch(self.name):
            raise ValueError(f"invalid variable name {self.name!r}")


@dataclass(frozen=True)
class NumberLiteral:
    value: int


@dataclass(frozen=True)
class BoolLiteral:
    value: bool


ArgValue = Union[StringLiteral, VarRef, NumberLiteral, BoolLiteral]


@dataclass(frozen=True)
class Instruction:
    output_var: str
    module_name: str
    args: tuple[tuple[str, ArgValue], ...] = ()
    line_index: int = field(default=0, compare=False)

    def __post_init__(self):
        if not VAR_PATTERN.fullmatch(self.output_var):
            raise ValueError(f"invalid output variable {self.output_var!r}")
        if not VAR_PATTERN.fullmatch(self.module_name):
            raise ValueError(f"invalid module name {self.module_name!r}")
        keys = [k for k, _ in self.args]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate argument keys in {keys}")

    def arg(self, key: str, default=None):
        for k, v in self.args:
            if k == key:
                return v
        return default

    def has_arg(self, key: str) -> bool:
        return any(k == key for k, _ in self.args)

    def with_arg(self, key: str, value: ArgValue) -> Instruction:
        """Return a copy with ``key`` set, appending it if absent."""
        args = list(self.args)
        for i, (k, _) in enumerate(args):
            if k == key:
                args[i] = (key, value)
                break
        else:
            args.append((key, value))
        return Instruction(self.output_var, self.module_name, tuple(args), self.line_index)

    def var_refs(self) -> list[str]:
        return [v.name for _, v in self.args if isinstance(v, VarRef)]


@dataclass(frozen=True)
class Script:
    instructions: tuple[Instruction, ...] = ()
    source_text: str = field(default="", compare=False)

    def __len__(self):
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)


class _Cursor:
    def __init__(self, text: str, line_index: int):
        self.text = text
        self.pos = 0
        self.line_index = line_index

    def fail(self, message: str):
        raise MalformedLine(message, self.line_index, self.text)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, char: str, what: str):
        if self.peek() != char:
            self.fail(f"expected {what}")
        self.pos += 1

    def match(self, pattern: re.Pattern) -> str | None:
        self.skip_ws()
        m = pattern.match(self.text, self.pos)
        if not m:
            return None
        self.pos = m.end()
        return m.group(0)

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _parse_value(cur: _Cursor) -> ArgValue:
    ch = cur.peek()
    if ch in ("'", '"'):
        end = cur.text.find(ch, cur.pos + 1)
        if end < 0:
            cur.fail("unbalanced quotes")
        value = cur.text[cur.pos + 1 : end]
        cur.pos = end + 1
        return StringLiteral(value, quote=ch)
    number = cur.match(_INT_PATTERN)
    if number is not None:
        return NumberLiteral(int(number))
    word = cur.match(_WORD)
    if word is None:
        cur.fail("expected an argument value")
    if word == "True":
        return BoolLiteral(True)
    if word == "False":
        return BoolLiteral(False)
    if not VAR_PATTERN.fullmatch(word):
        cur.fail(f"bare word {word!r} is not a variable")
    return VarRef(word)


def parse_step(line: str, line_index: int = 0) -> Instruction:
    """Parse one instruction line."""
    text = line.strip()
    if not text:
        raise MalformedLine("empty line", line_index, line)
    cur = _Cursor(text, line_index)
    out = cur.match(_WORD)
    if out is None or not VAR_PATTERN.fullmatch(out):
        cur.fail("missing or invalid output variable")
    cur.expect("=", "'=' after output variable")
    module = cur.match(_WORD)
    if not module:
        cur.fail("empty module name")
    if not VAR_PATTERN.fullmatch(module):
        cur.fail(f"module name {module!r} is not uppercase")
    cur.expect("(", "'(' after module name")
    args: list[tuple[str, ArgValue]] = []
    if cur.peek() == ")":
        cur.pos += 1
    else:
        while True:
            key = cur.match(_KEY_PATTERN)
            if key is None:
                cur.fail("expected argument name")
            if any(k == key for k, _ in args):
                cur.fail(f"duplicate argument {key!r}")
            cur.expect("=", f"'=' after argument {key!r}")
            args.append((key, _parse_value(cur)))
            ch = cur.peek()
            cur.pos += 1
            if ch == ")":
                break
            if ch != ",":
                cur.fail("expected ',' or ')'")
    if not cur.at_end():
        cur.fail("trailing text after ')'")
    return Instruction(out, module, tuple(args), line_index)


def parse_script(text: str) -> Script:
    """Parse a whole script; blank lines and ``#`` comments are skipped.

    ``line_index`` refers to the physical line in ``text``.
    """
    instructions = []
    for i, line in enumerate(text.splitlines()):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        instructions.append(parse_step(stripped, i))
    return Script(tuple(instructions), text)


def render_value(value: ArgValue) -> str:
    if isinstance(value, StringLiteral):
        quote = value.quote
        if quote in value.value:
            quote = '"' if quote == "'" else "'"
        if quote in value.value:
            raise ValueError(f"string {value.value!r} holds both quote characters")
        return f"{quote}{value.value}{quote}"
    if isinstance(value, VarRef):
        return value.name
    if isinstance(value, BoolLiteral):
        return "True" if value.value else "False"
    return str(value.value)


def render_step(instr: Instruction) -> str:
    args = ",".join(f"{k}={render_value(v)}" for k, v in instr.args)
    return f"{instr.output_var}={instr.module_name}({args})"


def render_script(script: Script) -> str:
    return "\n".join(render_step(i) for i in script.instructions)
