import dataclasses
import json
import socket

import pytest

from planscript.bench import (
    ABLATIONS,
    BenchAborted,
    BenchmarkSample,
    NetworkSentinel,
    NetworkUsed,
    RunReport,
    SampleError,
    is_correct,
    load_samples,
    parse_sample,
    run_ablation,
    run_bench,
)
from planscript.config import Settings
from planscript.registry import UnknownTaskKind


@pytest.fixture
def settings(suite_dir):
    return Settings(impl="fixture", fixtures=str(suite_dir), strict=True)


@pytest.fixture
def samples(suite_dir):
    return load_samples(suite_dir / "samples.jsonl")


def test_suite_is_twenty_samples(samples):
    assert len(samples) == 20


def test_full_config_scores_everything(samples, settings, repo):
    report = run_bench(samples, settings, repo)
    assert report.network_calls == 0
    assert report.accuracy == 1.0


def test_deterministic_report(samples, settings, repo):
    a = run_bench(samples, settings, repo).dumps(include_timings=False)
    b = run_bench(samples, dataclasses.replace(settings, workers=4), repo).dumps(include_timings=False)
    assert a == b


def test_ablation_matrix(samples, settings, repo):
    reports = run_ablation(samples, settings, repo)
    assert list(reports) == [name for name, _ in ABLATIONS]
    for name, flags in ABLATIONS:
        cfg = reports[name].config
        assert (cfg["ssparser"], cfg["verifier"], cfg["ensemble"]) == (
            flags["use_ssparser"], flags["use_verifier"], flags["use_ensemble"])
        assert reports[name].network_calls == 0


def test_empty_file_is_na(tmp_path, settings, repo):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    report = run_bench(load_samples(path), settings, repo)
    assert report.accuracy is None
    assert report.to_json()["accuracy"] == "n/a"
    assert "accuracy: n/a" in report.summary()


def _unknown_sample():
    return parse_sample({"id": "x", "task_kind": "gqa", "question": "What is never asked?",
                         "images": [{"id": "grass.jpg", "width": 640, "height": 480}], "answer": "no"})


def test_strict_miss_aborts(samples, settings, repo):
    with pytest.raises(BenchAborted, match="sample x"):
        run_bench([samples[0], _unknown_sample()], settings, repo)


def test_lenient_miss_skips_and_counts(samples, settings, repo):
    report = run_bench([samples[0], _unknown_sample()], dataclasses.replace(settings, strict=False), repo)
    data = report.to_json(include_timings=False)
    assert (data["evaluated"], data["skipped"], data["accuracy"]) == (1, 1, 1.0)


def test_stage_table(samples, settings, repo):
    report = run_bench(samples[:3], settings, repo)
    assert set(report.stage_timings()) == {"plan", "parse", "execute", "verify", "total"}
    assert "execute" in report.summary()


def test_sentinel_blocks_and_counts():
    sentinel = NetworkSentinel()
    with sentinel.active():
        with pytest.raises(NetworkUsed):
            socket.create_connection(("203.0.113.1", 80))
    assert len(sentinel.attempts) == 1
    assert socket.socket.connect.__qualname__ == "socket.connect"


def test_normalized_exact_match():
    assert is_correct(" Yes. ", "yes")
    assert is_correct("NO!", "no")
    assert not is_correct("rug", "carpet")


def test_sample_validation(tmp_path):
    with pytest.raises(SampleError):
        BenchmarkSample("a", "gqa", (), "q", "  ")
    with pytest.raises(UnknownTaskKind):
        BenchmarkSample("a", "audio", (), "q", "x")
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"id": "a", "question": "q", "answer": "x"}) + "\n")
    with pytest.raises(SampleError, match="bad.jsonl:1"):
        load_samples(bad)


def test_image_paths_read_size(tmp_path):
    from PIL import Image

    Image.new("RGB", (32, 24)).save(tmp_path / "pic.png")
    sample = parse_sample({"id": "a", "images": ["pic.png"], "question": "q", "answer": "x"}, tmp_path)
    assert (sample.images[0].width, sample.images[0].height) == (32, 24)


def test_report_accuracy_counts_only_evaluated():
    from planscript.bench import SampleOutcome

    outcomes = [SampleOutcome("a", "no", "no", True, "ok"), SampleOutcome("b", None, "x", None, "skipped", skipped="m")]
    assert RunReport({}, outcomes).accuracy == 1.0
