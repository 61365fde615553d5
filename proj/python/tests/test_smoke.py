import math

import pytest

import frameprobe as fp


def test_canonicalize_and_match():
    assert fp.canonicalize("The Lion King (1994)") == "lion king"
    hit = fp.match_title("The movie is Frozen.", "Frozen")
    assert hit["verdict"] == "exact" and hit["correct"]
    assert fp.match_title("Toy Story 2", "Toy Story 3")["verdict"] == "none"
    assert fp.parse_mcqa("B", ["Up", "Cars", "Coco", "Soul"]) == 1


def test_auc_counts_ties_as_half():
    assert fp.auc([1.0, 2.0], [0.0, 3.0]) == 0.5
    assert fp.auc([1.0], [1.0]) == 0.5
    assert fp.auc([3.0, 4.0], [1.0, 2.0]) == 1.0


def test_bootstrap_is_seeded():
    a = fp.bootstrap_auc([0.9, 0.8, 0.4], [0.1, 0.5, 0.2], iterations=10, seed=3)
    b = fp.bootstrap_auc([0.9, 0.8, 0.4], [0.1, 0.5, 0.2], iterations=10, seed=3)
    assert a == b
    assert len(a["per_iteration_auc"]) == 10


def test_renyi_uniform_is_log_support():
    for v in (1, 2, 7, 50):
        assert abs(fp.renyi_entropy([1.0 / v] * v, 0.5) - math.log(v)) < 1e-12
    assert fp.max_renyi_k([1.0, 2.0, 3.0, 4.0], 50, "max") == 3.5
    with pytest.raises(fp.FrameprobeError):
        fp.renyi_entropy([0.5, 0.6], 0.5)


def test_chance_and_partition():
    assert fp.chance_mcqa(4) == 0.25
    assert fp.classify("2022-12-31") == "suspect"
    assert fp.classify("2023-05-10") == "excluded"
    assert fp.classify("2023-10-01") == "clean"


def test_mock_run_end_to_end(tmp_path):
    manifest = fp.write_synthetic_corpus(tmp_path / "corpus", suspect=6, clean=6, main_frames=6,
                                         neutral_frames=4, seed=2)
    backends = fp.write_mock_backends(tmp_path / "backends.json", "mock-vlm", seed=2)
    groups = fp.partition(manifest)
    assert len(groups["suspect"]) == 6 and len(groups["clean"]) == 6
    assert fp.validate(manifest) == []

    result = fp.run(manifest, backends, "mock-vlm", tmp_path / "run", detectors="disco", seed=1)
    assert result["queries"] == 120
    views = {r["view"]: r for r in result["reports"]}
    assert set(views) == {"weighted", "main", "neutral"}
    assert views["weighted"]["auc_mean"] > 0.9

    again = fp.run(manifest, backends, "mock-vlm", tmp_path / "run", detectors="disco", seed=1)
    assert again["backend_calls"] == 0 and again["cache_hits"] == 120
    assert (tmp_path / "run" / "predictions.jsonl").exists()

    written = fp.report([tmp_path / "run"], tmp_path / "report")
    assert written
