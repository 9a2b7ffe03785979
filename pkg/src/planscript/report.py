"""Render a pipeline trace as text or HTML."""

from __future__ import annotations

import difflib
import html
import json
from pathlib import Path

from .pipeline import TRACE_SCHEMA_VERSION

_REQUIRED = ("question", "answer", "status", "execution")


class TraceSchemaError(ValueError):
    pass


def load_trace(path: str | Path) -> dict:
    text = Path(path).read_text("utf-8")
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceSchemaError(f"trace is not JSON: {exc}") from None
    check_trace(data)
    return data


def check_trace(data) -> None:
    if data in ({}, []):
        return
    if not isinstance(data, dict):
        raise TraceSchemaError("trace must be a JSON object")
    version = data.get("schema_version")
    if version != TRACE_SCHEMA_VERSION:
        raise TraceSchemaError(f"unsupported trace schema_version {version!r}")
    missing = [k for k in _REQUIRED if k not in data]
    if missing:
        raise TraceSchemaError(f"trace is missing {missing}")


def script_diff(trace: dict) -> list[str]:
    """Unified diff from the planned script to the one that ran, without headers."""
    repair = trace.get("repair")
    if not repair or not repair.get("repairs"):
        return []
    before = (trace.get("source_script") or "").splitlines()
    after = (repair.get("script") or "").splitlines()
    lines = difflib.unified_diff(before, after, lineterm="", n=len(before) + len(after))
    return [line for line in lines if not line.startswith(("---", "+++", "@@"))]


def _steps(trace: dict) -> list[dict]:
    return (trace.get("execution") or {}).get("trace") or []


def _call(step: dict) -> str:
    args = ",".join(f"{k}={v}" for k, v in step.get("inputs", {}).items())
    return f"{step['output_var']}={step['module_name']}({args})"


def render_text(trace: dict) -> str:
    if not trace:
        return ""
    out = [f"question: {trace['question']}", f"answer: {trace['answer']}  [{trace['status']}]"]
    if trace.get("plan_error"):
        out.append(f"planning failed: {trace['plan_error']}")
    repair = trace.get("repair")
    if repair:
        out.append(f"ss-parser: {repair['verdict']}")
        for rec in repair.get("repairs", []):
            out.append(f"  line {rec['line']}: {rec['rule']}")
        diff = script_diff(trace)
        if diff:
            out.append("script changes:")
            out.extend(f"  {line}" for line in diff)
    out.append("steps:")
    for step in _steps(trace):
        tag = " (fallback)" if step.get("attempt") else ""
        out.append(f"  [{step['line_index']}]{tag} {_call(step)} -> {step['output']}")
        votes = step.get("details", {}).get("votes")
        if votes:
            for backend, vote in votes.items():
                out.append(f"      {backend}: {json.dumps(vote)}")
    verdict = trace.get("verifier")
    if verdict:
        note = "overwritten" if verdict["overwritten"] else verdict["confidence"] + " confidence"
        out.append(f"verifier: caption {verdict['caption']!r} -> {verdict['final_answer']} ({note})")
    video = trace.get("video")
    if video:
        out.append(f"video fusion: choice {video['chosen_index']}"
                   f"{' (caption branch)' if video['overwritten'] else ''}")
    return "\n".join(out) + "\n"


def render_html(trace: dict) -> str:
    esc = html.escape
    if not trace:
        return "<!doctype html>\n<html><body></body></html>\n"
    parts = [
        "<!doctype html>",
        "<html><head><meta charset=\"utf-8\"><title>trace</title>",
        "<style>del{background:#fdd}ins{background:#dfd}pre{margin:0}td{vertical-align:top;padding:2px 8px}</style>",
        "</head><body>",
        f"<h1>{esc(trace['question'])}</h1>",
        f"<p>answer: <b>{esc(str(trace['answer']))}</b> <small>{esc(trace['status'])}</small></p>",
    ]
    diff = script_diff(trace)
    if diff:
        parts.append(f"<h2>ss-parser: {esc(trace['repair']['verdict'])}</h2><div class=\"diff\">")
        for line in diff:
            body = esc(line[1:])
            if line.startswith("-"):
                parts.append(f"<pre><del>- {body}</del></pre>")
            elif line.startswith("+"):
                parts.append(f"<pre><ins>+ {body}</ins></pre>")
            else:
                parts.append(f"<pre>  {body}</pre>")
        parts.append("</div>")
    parts.append("<h2>steps</h2><table>")
    for step in _steps(trace):
        votes = step.get("details", {}).get("votes")
        cell = ""
        if votes:
            items = "".join(f"<li>{esc(b)}: {esc(json.dumps(v))}</li>" for b, v in votes.items())
            cell = f"<details><summary>votes</summary><ul>{items}</ul></details>"
        parts.append(
            f"<tr><td>{step['line_index']}</td><td><code>{esc(_call(step))}</code></td>"
            f"<td>{esc(str(step['output']))}</td><td>{cell}</td></tr>"
        )
    parts.append("</table>")
    verdict = trace.get("verifier")
    if verdict:
        parts.append(
            f"<h2>verifier</h2><p>caption: {esc(verdict['caption'])}<br>"
            f"final: {esc(verdict['final_answer'])} "
            f"({'overwritten' if verdict['overwritten'] else esc(verdict['confidence'])})</p>"
        )
    parts.append("</body></html>")
    return "\n".join(parts) + "\n"
