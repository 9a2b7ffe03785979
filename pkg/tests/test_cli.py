import io
import json

import pytest

from corpus import CORPUS
from make_fixtures import GRASS_QUESTION, PEOPLE_QUESTION
from planscript.cli import EXIT_ERROR, EXIT_FAILED, EXIT_OK, main, parse_image


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def fx(suite_dir):
    return ["--backend", "fixture", "--fixtures", str(suite_dir), "--strict"]


def test_run_grass(fx):
    assert cli("run", GRASS_QUESTION, "grass.jpg:640x480", *fx)[:2] == (EXIT_OK, "no\n")


def test_run_no_verifier_returns_executor_answer(fx):
    code, out, _ = cli("run", PEOPLE_QUESTION, "people.jpg:800x600", *fx, "--no-ssparser", "--no-ensemble",
                       "--no-verifier")
    assert (code, out) == (EXIT_OK, "yes\n")
    code, out, _ = cli("run", PEOPLE_QUESTION, "people.jpg:800x600", *fx, "--no-ssparser", "--no-ensemble")
    assert (code, out) == (EXIT_OK, "no\n")


def test_run_writes_trace_and_report_renders_it(fx, tmp_path):
    trace = tmp_path / "trace.json"
    assert cli("run", PEOPLE_QUESTION, "people.jpg:800x600", *fx, "--parallel", "--trace", str(trace))[0] == EXIT_OK
    assert json.loads(trace.read_text())["answer"] == "no"
    code, out, _ = cli("report", str(trace))
    assert code == EXIT_OK and "script changes:" in out
    page = tmp_path / "trace.html"
    assert cli("report", str(trace), "--html", "--out", str(page))[0] == EXIT_OK
    assert "<details>" in page.read_text()


def test_missing_fixture_names_key(fx):
    code, _, err = cli("run", "What is never asked?", "grass.jpg:640x480", *fx)
    assert code == EXIT_ERROR
    assert "fixture miss" in err and '"role": "llm"' in err


@pytest.mark.parametrize("row, question, text, verdict, rules", CORPUS, ids=[f"{c[0]}-{n}" for n, c in enumerate(CORPUS)])
def test_validate_corpus_exit_codes(row, question, text, verdict, rules, tmp_path):
    path = tmp_path / "s.txt"
    path.write_text(text)
    code, out, _ = cli("validate", str(path), question)
    assert code == {"CleanPass": 0, "Repaired": 1, "Fallback": 2}[verdict]
    assert json.loads(out)["verdict"] == verdict


def test_validate_clean_and_unreadable(tmp_path):
    path = tmp_path / "ok.txt"
    path.write_text("ANSWER0=VQA(image=IMAGE,question='What color is the car?')\nFINAL_RESULT=RESULT(var=ANSWER0)")
    assert cli("validate", str(path), "What color is the car?")[0] == 0
    code, _, err = cli("validate", str(tmp_path / "nope.txt"), "q")
    assert code == EXIT_ERROR and "cannot read" in err


def test_bench_and_ablation(fx, suite_dir, tmp_path):
    out_file = tmp_path / "report.json"
    code, out, _ = cli("bench", str(suite_dir / "samples.jsonl"), *fx, "--workers", "2", "--out", str(out_file))
    assert code == EXIT_OK and "accuracy: 100.0% (20/20)" in out
    assert json.loads(out_file.read_text())["network_calls"] == 0
    code, out, _ = cli("bench", str(suite_dir / "samples.jsonl"), *fx, "--ablation", "--out", str(out_file))
    assert code == EXIT_OK and out.count("== ") == 4
    assert set(json.loads(out_file.read_text())["ablation"]) == {"baseline", "baseline+capverif", "plan+ssparser", "all"}


def test_bench_empty_file(fx, tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    code, out, _ = cli("bench", str(empty), *fx)
    assert code == EXIT_OK and "accuracy: n/a" in out


def test_report_empty_trace(tmp_path):
    path = tmp_path / "t.json"
    path.write_text("")
    assert cli("report", str(path)) == (EXIT_OK, "", "")


def test_bad_config_is_usage_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"nope": 1}')
    code, _, err = cli("run", "q", "a:1x1", "--config", str(cfg))
    assert code == 2 and "unknown config keys" in err


def test_failed_run_exit_code(tmp_path, suite_dir):
    # every backend down: the fallback script runs but VQA cannot answer
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"backends": [{"role": "llm", "name": "gpt35", "impl": "fixture"}],
                               "fixtures": str(tmp_path)}))
    code, _, err = cli("run", "Is it red?", "a:10x10", "--config", str(cfg))
    assert code == EXIT_FAILED and err.startswith("error:")


def test_parse_image():
    img = parse_image("cam/01.jpg:1920x1080")
    assert (img.id, img.width, img.height) == ("cam/01.jpg", 1920, 1080)
