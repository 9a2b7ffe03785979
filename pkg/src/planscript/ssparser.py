"""Syntax-semantics parser: dry-run a planning script, repair it or give up.

The script is walked line by line against an abstract state in which every
variable holds only a *kind* (image, box array, text, ...). No model is ever
called. Soft problems are rewritten in place and logged as
:class:`RepairRecord` entries; hard problems replace the whole script with a
direct-VQA fallback.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from . import evallang
from .evallang import ExprSyntaxError, UnboundVariable
from .lexicon import is_plural, pluralize, word_class
from .registry import ModuleRegistry, registry_for, seed_variables
from .script import (
    BoolLiteral,
    Instruction,
    MalformedLine,
    NumberLiteral,
    Script,
    StringLiteral,
    VarRef,
    parse_script,
    render_script,
    render_step,
)

SCHEMA_VERSION = 1
QUANTIFIERS = frozenset({"all", "every", "both", "each"})

CLEAN = "CleanPass"
REPAIRED = "Repaired"
FALLBACK = "Fallback"

# hard rules, one per row of the error table plus bookkeeping failures
FORMAT_MALFORMED = "format.malformed"
FORMAT_NO_RESULT = "format.no_result"
MODULE_UNKNOWN = "module.unknown"
ARGS_INVALID = "args.invalid"
VAR_UNBOUND = "var.unbound"
VAR_REASSIGNED = "var.reassigned"
EVAL_SYNTAX = "eval.syntax"
LOC_NON_NOUN = "loc.non_noun_fallback"
LOC_NOT_IN_QUESTION = "loc.object_not_in_question"
LOC_QUANTIFIER_UNSUPPORTED = "loc.quantifier_unsupported"
DRYRUN_TYPE = "dryrun.type"
INTERNAL = "internal.error"
# soft rules
EVAL_YES = "eval.yes_to_true"
EVAL_NO = "eval.no_to_false"
LOC_PLURAL_OBJECT = "loc.plural_object"
LOC_PLURAL_FLAG = "loc.plural_flag"
LOC_QUANTIFIER_ARRAY = "loc.quantifier_array"

_BOX_ARRAY = re.compile(r"BOX_ARRAY_([0-9]+)")
_IMAGE_ARRAY = re.compile(r"IMAGE_ARRAY_([0-9]+)")
_WORD = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")


def tokenize_question(question: str) -> list[str]:
    return _WORD.findall(question.lower())


@dataclass(frozen=True)
class RepairRecord:
    line_index: int
    rule_id: str
    before: str
    after: str

    def to_json(self) -> dict:
        return {"line": self.line_index, "rule": self.rule_id,
                "before": self.before, "after": self.after}


@dataclass
class RepairOutcome:
    verdict: str
    script: Script
    repairs: list[RepairRecord] = field(default_factory=list)

    @property
    def fallback_used(self) -> bool:
        return self.verdict == FALLBACK

    @property
    def rule_ids(self) -> list[str]:
        return [r.rule_id for r in self.repairs]

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "verdict": self.verdict,
            "repairs": [r.to_json() for r in self.repairs],
            "fallback_used": self.fallback_used,
            "script": render_script(self.script),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


class Fallback(Exception):
    """Internal signal: abandon the script."""

    def __init__(self, rule_id: str, line_index: int = -1, detail: str = ""):
        super().__init__(f"{rule_id} at line {line_index}: {detail}")
        self.rule_id = rule_id
        self.line_index = line_index
        self.detail = detail


class RewriteUnsupported(Exception):
    pass


class Dry:
    """Placeholder value carrying only a kind."""

    __slots__ = ("kind",)

    def __init__(self, kind: str):
        self.kind = kind

    def __repr__(self):
        return f"Dry({self.kind})"

    def __format__(self, spec):
        # what an EVAL template sees during the dry run
        return {"Text": "0", "Number": "0", "Boolean": "True"}.get(self.kind, "[[0,0,100,100]]")


def _dry_format(env: dict[str, Dry]) -> dict[str, str]:
    return {k: format(v) for k, v in env.items()}


@dataclass
class RepairContext:
    question_tokens: list[str]
    dry_env: dict[str, Dry] = field(default_factory=dict)
    num_box_arrays: int = 0
    num_image_arrays: int = 0
    taken: set[str] = field(default_factory=set)

    def fresh(self, prefix: str) -> str:
        attr = "num_box_arrays" if prefix == "BOX_ARRAY" else "num_image_arrays"
        while True:
            n = getattr(self, attr)
            setattr(self, attr, n + 1)
            name = f"{prefix}_{n}"
            if name not in self.taken:
                self.taken.add(name)
                return name


# -- fallback -----------------------------------------------------------------


def _as_yes_no_question(statement: str) -> str:
    body = statement.strip().rstrip(".!?").strip()
    if not body:
        return ""
    if not body.startswith("I "):
        body = body[0].lower() + body[1:]
    return f"Is it true that {body}?"


def make_fallback(question: str, task_kind: str = "gqa") -> Script:
    """Two-line direct VQA script answering ``question`` on the whole image."""
    text = " ".join(question.split())
    if task_kind == "nlvr2":
        text = _as_yes_no_question(text)
    if "'" in text and '"' in text:
        text = text.replace('"', "'")
    return Script((
        Instruction("ANSWER0", "VQA", (("image", VarRef("IMAGE")), ("question", StringLiteral(text)))),
        Instruction("FINAL_ANSWER", "RESULT", (("var", VarRef("ANSWER0")),)),
    ))


# -- per-module checks -----------------------------------------------------------

_ARG_KINDS = {
    "image": VarRef, "box": VarRef, "array": VarRef, "var": VarRef, "evidence": VarRef,
    "object": StringLiteral, "question": StringLiteral, "expr": StringLiteral,
    "plural": BoolLiteral, "per_box": BoolLiteral, "index": NumberLiteral,
}


def _check_signature(instr: Instruction, registry: ModuleRegistry) -> None:
    if instr.module_name not in registry:
        raise Fallback(MODULE_UNKNOWN, instr.line_index, instr.module_name)
    sig = registry[instr.module_name]
    for key, value in instr.args:
        if not sig.accepts(key):
            raise Fallback(ARGS_INVALID, instr.line_index, f"unknown argument {key!r}")
        expected = _ARG_KINDS.get(key)
        if expected is not None and not isinstance(value, expected):
            raise Fallback(ARGS_INVALID, instr.line_index, f"{key!r} has the wrong literal kind")
    for key in sig.required:
        if not instr.has_arg(key):
            raise Fallback(ARGS_INVALID, instr.line_index, f"missing argument {key!r}")


def _bound(instr: Instruction, key: str, env: dict[str, Dry], *kinds: str) -> Dry:
    name = instr.arg(key).name
    if name not in env:
        raise Fallback(VAR_UNBOUND, instr.line_index, name)
    value = env[name]
    if kinds and value.kind not in kinds:
        raise Fallback(DRYRUN_TYPE, instr.line_index, f"{key}={name} is {value.kind}, wants {kinds}")
    return value


def last_object_word(instr: Instruction) -> str:
    words = tokenize_question(instr.arg("object").value)
    return words[-1] if words else ""


def check_loc(instr: Instruction, question_tokens: list[str], dry_env: dict[str, Dry]) -> str:
    """Return ``"ok"``, ``"add_plural"`` or raise :class:`Fallback`."""
    last = last_object_word(instr)
    if not last or word_class(last) != "noun":
        raise Fallback(LOC_NON_NOUN, instr.line_index, repr(last))
    _bound(instr, "image", dry_env, "ImageRef")
    q = set(question_tokens)
    if last not in q and pluralize(last) not in q:
        raise Fallback(LOC_NOT_IN_QUESTION, instr.line_index, repr(last))
    if is_plural(last) or pluralize(last) in q:
        return "add_plural"
    return "ok"


def _plural_rule(last: str) -> str:
    return LOC_PLURAL_OBJECT if is_plural(last) else LOC_PLURAL_FLAG


def check_eval(instr: Instruction, dry_env: dict[str, Dry]) -> tuple[Instruction, list[str]]:
    """Return the (possibly rewritten) EVAL line and the rule ids that fired."""
    template = instr.arg("expr").value
    rewritten = evallang.rewrite_yes_no(template)
    fired = []
    targets = evallang.yes_no_targets(template)
    if "yes" in targets:
        fired.append(EVAL_YES)
    if "no" in targets:
        fired.append(EVAL_NO)
    try:
        filled = evallang.substitute(rewritten, _dry_format(dry_env))
    except UnboundVariable as exc:
        raise Fallback(VAR_UNBOUND, instr.line_index, exc.name) from None
    try:
        evallang.parse_expr(filled)
    except ExprSyntaxError as exc:
        raise Fallback(EVAL_SYNTAX, instr.line_index, str(exc)) from None
    if rewritten != template:
        old = instr.arg("expr")
        instr = instr.with_arg("expr", StringLiteral(rewritten, old.quote))
    return instr, fired


def rewrite_quantifier_block(
    instrs: list[Instruction], loc_pos: int, ctx: RepairContext
) -> tuple[list[Instruction], RepairRecord]:
    """Turn ``LOC -> CROP... -> VQA`` into array form.

    The LOC output becomes ``BOX_ARRAY_k``; the CROPs that read it become one
    per-box ``IMAGE_ARRAY_m`` crop followed by ``GET`` lookups that keep the
    original image variable names, so the VQA lines are untouched.
    """
    loc = instrs[loc_pos]
    box_var = loc.output_var
    later = instrs[loc_pos + 1 :]
    crops = [j for j, ins in enumerate(later, loc_pos + 1) if box_var in ins.var_refs()]
    if not crops:
        raise RewriteUnsupported(f"{box_var} is never cropped")
    crop_image = None
    for j in crops:
        ins = instrs[j]
        if ins.module_name != "CROP" or ins.arg("box") != VarRef(box_var) or ins.has_arg("per_box"):
            raise RewriteUnsupported(f"line {ins.line_index} is not a plain CROP of {box_var}")
        image = ins.arg("image")
        if crop_image is not None and image != crop_image:
            raise RewriteUnsupported("crops read different images")
        crop_image = image
        readers = [r for r in instrs[j + 1 :] if ins.output_var in r.var_refs()]
        if not readers or any(r.module_name != "VQA" for r in readers):
            raise RewriteUnsupported(f"{ins.output_var} does not feed VQA steps only")

    box_array = ctx.fresh("BOX_ARRAY")
    image_array = ctx.fresh("IMAGE_ARRAY")
    new_loc = Instruction(
        box_array, "LOC", tuple((k, v) for k, v in loc.args if k != "plural"), loc.line_index
    )
    out = list(instrs)
    out[loc_pos] = new_loc
    first = instrs[crops[0]]
    replacements = {
        crops[0]: [
            Instruction(image_array, "CROP", (("image", crop_image), ("box", VarRef(box_array)),
                                             ("per_box", BoolLiteral(True))), first.line_index),
        ]
    }
    for n, j in enumerate(crops):
        get = Instruction(instrs[j].output_var, "GET",
                          (("array", VarRef(image_array)), ("index", NumberLiteral(n))),
                          instrs[j].line_index)
        replacements.setdefault(j, []).append(get)
    rebuilt = []
    for j, ins in enumerate(out):
        rebuilt.extend(replacements.get(j, [ins]))
    before = "\n".join(render_step(instrs[j]) for j in [loc_pos, *crops])
    after = "\n".join([render_step(new_loc)] + [render_step(i) for j in crops for i in replacements[j]])
    return rebuilt, RepairRecord(loc.line_index, LOC_QUANTIFIER_ARRAY, before, after)


# -- driver -----------------------------------------------------------------------


def _consumers(instrs: list[Instruction], pos: int) -> list[Instruction]:
    var = instrs[pos].output_var
    return [i for i in instrs[pos + 1 :] if var in i.var_refs()]


def _walk(instrs: list[Instruction], ctx: RepairContext, registry: ModuleRegistry,
          repairs: list[RepairRecord]) -> list[Instruction]:
    env = ctx.dry_env
    quantified = bool(QUANTIFIERS & set(ctx.question_tokens))
    pos = 0
    while pos < len(instrs):
        instr = instrs[pos]
        _check_signature(instr, registry)
        if instr.output_var in env:
            raise Fallback(VAR_REASSIGNED, instr.line_index, instr.output_var)
        mod = instr.module_name

        if mod == "LOC":
            verdict = check_loc(instr, ctx.question_tokens, env)
            if quantified and not _BOX_ARRAY.fullmatch(instr.output_var):
                try:
                    instrs, record = rewrite_quantifier_block(instrs, pos, ctx)
                except RewriteUnsupported as exc:
                    raise Fallback(LOC_QUANTIFIER_UNSUPPORTED, instr.line_index, str(exc)) from None
                repairs.append(record)
                instr = instrs[pos]
            elif (
                not quantified
                and verdict == "add_plural"
                and instr.arg("plural") != BoolLiteral(True)
                and not any(c.module_name == "COUNT" for c in _consumers(instrs, pos))
            ):
                fixed = instr.with_arg("plural", BoolLiteral(True))
                repairs.append(RepairRecord(instr.line_index, _plural_rule(last_object_word(instr)),
                                            render_step(instr), render_step(fixed)))
                instrs[pos] = instr = fixed
            env[instr.output_var] = Dry("BoxArray")

        elif mod == "EVAL":
            fixed, fired = check_eval(instr, env)
            for rule in fired:
                repairs.append(RepairRecord(instr.line_index, rule, render_step(instr), render_step(fixed)))
            instrs[pos] = fixed
            env[instr.output_var] = Dry("Boolean")

        elif mod == "VQA":
            _bound(instr, "image", env, "ImageRef")
            env[instr.output_var] = Dry("Text")

        elif mod.startswith("CROP"):
            _bound(instr, "image", env, "ImageRef")
            if instr.arg("per_box") == BoolLiteral(True):
                _bound(instr, "box", env, "BoxArray")
                env[instr.output_var] = Dry("ImageArray")
            else:
                _bound(instr, "box", env, "Box", "BoxArray")
                env[instr.output_var] = Dry("ImageRef")

        elif mod == "COUNT":
            _bound(instr, "box", env, "BoxArray")
            env[instr.output_var] = Dry("Number")

        elif mod == "GET":
            array = _bound(instr, "array", env, "BoxArray", "ImageArray")
            if instr.arg("index").value < 0:
                raise Fallback(DRYRUN_TYPE, instr.line_index, "negative index")
            env[instr.output_var] = Dry("Box" if array.kind == "BoxArray" else "ImageRef")

        elif mod == "RESULT":
            _bound(instr, "var", env)
            env[instr.output_var] = Dry("Text")

        elif mod == "SELECT":
            _bound(instr, "evidence", env)
            env[instr.output_var] = Dry("Text")

        else:
            raise Fallback(MODULE_UNKNOWN, instr.line_index, f"no dry-run rule for {mod}")
        pos += 1

    if not instrs or instrs[-1].module_name != "RESULT":
        raise Fallback(FORMAT_NO_RESULT, instrs[-1].line_index if instrs else 0, "script must end in RESULT")
    return instrs


def validate_and_repair(
    script: Script | str,
    question: str,
    registry: ModuleRegistry | None = None,
    task_kind: str = "gqa",
) -> RepairOutcome:
    """Dry-run ``script``; never raises."""
    source = script if isinstance(script, str) else (script.source_text or render_script(script))
    try:
        if registry is None:
            registry = registry_for(task_kind)
        if isinstance(script, str):
            script = parse_script(script)
        ctx = RepairContext(
            tokenize_question(question),
            {name: Dry("ImageRef") for name in seed_variables(task_kind)},
        )
        ctx.taken = {i.output_var for i in script.instructions}
        repairs: list[RepairRecord] = []
        instrs = _walk(list(script.instructions), ctx, registry, repairs)
    except MalformedLine as exc:
        rec = RepairRecord(exc.line_index, FORMAT_MALFORMED, exc.line, "")
        return RepairOutcome(FALLBACK, make_fallback(question, task_kind), [rec])
    except Fallback as exc:
        before = _line_text(source, exc.line_index)
        rec = RepairRecord(exc.line_index, exc.rule_id, before, "")
        return RepairOutcome(FALLBACK, make_fallback(question, task_kind), [rec])
    except Exception as exc:  # totality: a bug here must not take the pipeline down
        rec = RepairRecord(-1, INTERNAL, repr(exc), "")
        return RepairOutcome(FALLBACK, make_fallback(question, task_kind), [rec])

    if not repairs:
        return RepairOutcome(CLEAN, script, [])
    fixed = Script(tuple(instrs))
    return RepairOutcome(REPAIRED, Script(fixed.instructions, render_script(fixed)), repairs)


def _line_text(source: str, line_index: int) -> str:
    lines = source.splitlines()
    if 0 <= line_index < len(lines):
        return lines[line_index].strip()
    return ""
