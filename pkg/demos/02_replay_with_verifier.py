"""End-to-end replay with recorded model answers, then a trace report.

Every model response here comes from the fixture stores under
tests/fixtures/suite, so the run is exact and needs no network. We answer the
"same gender" question twice: once with the SS-parser switched off, where the
caption verifier has to step in, and once with everything on.
"""

from pathlib import Path

from planscript.config import Settings
from planscript.pipeline import PipelineOptions, run_pipeline
from planscript.planner import TaskRepository
from planscript.report import render_text
from planscript.values import ImageRef

SUITE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "suite"
QUESTION = "Do both people have the same gender?"
IMAGE = ImageRef("people.jpg", 800, 600)


def main():
    repo = TaskRepository.load()

    bare = Settings(impl="fixture", fixtures=str(SUITE), strict=True, use_ensemble=False).gateway()
    result = run_pipeline(QUESTION, [IMAGE], bare, repo, options=PipelineOptions(use_ssparser=False))
    v = result.verdict
    print(f"parser off: executor said {result.execution.final_answer!r}, caption says {v.caption!r}")
    print(f"  verifier final answer {v.final_answer!r} (overwritten={v.overwritten})\n")

    full = Settings(impl="fixture", fixtures=str(SUITE), strict=True).gateway()
    result = run_pipeline(QUESTION, [IMAGE], full, repo, options=PipelineOptions(parallel=True))
    print("everything on:")
    print(render_text(result.to_json()))


if __name__ == "__main__":
    main()
