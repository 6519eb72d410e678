import json
from pathlib import Path

import pytest

from vidtag.config import load_config, make_config
from vidtag.corpus import Source
from vidtag.errors import ConfigError, InputError, InvariantError
from vidtag.pipeline import STAGES, StageTimer, ablate_sources, annotate_video, run
from vidtag.synthetic import planted, write_planted


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    data = planted(n_images=300, n_frames=12, seed=4)
    return data, write_planted(data, root), root


def cfg(**kw):
    return make_config(K=20, max_checks=64, **kw)


def test_run_writes_outputs(demo, tmp_path):
    data, paths, _ = demo
    res = run(cfg(), paths["corpus"], paths["manifests"], paths["ground_truth"], out_dir=tmp_path)
    assert {p.name for p in tmp_path.iterdir()} == {
        "annotations.jsonl", "report.json", "report.txt", "run_manifest.json"
    }
    lines = [json.loads(x) for x in (tmp_path / "annotations.jsonl").read_text().splitlines()]
    frames = [r for r in lines if r["type"] == "frame"]
    videos = [r for r in lines if r["type"] == "video"]
    assert len(frames) == 12 and len(videos) == 1
    assert set(frames[0]) >= {"frame_id", "timestamp", "localized", "suggested", "smoothed"}
    assert videos[0]["video_tags"] == sorted(data.video.video_tags)
    assert res.report.overall["P@1"] >= 0.9
    man = json.loads((tmp_path / "run_manifest.json").read_text())
    assert set(man["timing"]["stages"]) == set(STAGES)
    assert all(v >= 0 for v in man["timing"]["stages"].values())
    assert set(man["inputs"]) == {str(p) for p in [*paths["corpus"], *paths["manifests"], paths["ground_truth"]]}


def test_runs_are_byte_identical(demo, tmp_path):
    _, paths, _ = demo
    for sub in ("a", "b"):
        run(cfg(seed=3), paths["corpus"], paths["manifests"], paths["ground_truth"], out_dir=tmp_path / sub)
    for name in ("annotations.jsonl", "report.json", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_count_does_not_change_output(demo):
    _, paths, _ = demo
    one = run(cfg(workers=1), paths["corpus"], paths["manifests"])
    four = run(cfg(workers=4), paths["corpus"], paths["manifests"])
    assert one.annotation_lines() == four.annotation_lines()


def test_search_engine_sources_give_no_suggestions(demo):
    _, paths, _ = demo
    for mask in ("G", "B", "G+B"):
        res = run(cfg(sources=mask), paths["corpus"], paths["manifests"])
        frames = res.videos[0].frames
        assert all(fr.annotation.suggested == () for fr in frames)
        assert any(fr.annotation.localized for fr in frames)


def test_annotated_tags_in_vocabulary(demo):
    _, paths, _ = demo
    res = run(cfg(), paths["corpus"], paths["manifests"])
    for v in res.videos:
        assert v.refined_tags <= v.vocabulary
        for fr in v.frames:
            assert set(fr.ranked) <= v.vocabulary
            assert {s.tag for s in fr.annotation.suggested} <= v.vocabulary


def test_stage_timing_covers_wall(demo):
    _, paths, _ = demo
    res = run(cfg(), paths["corpus"], paths["manifests"], paths["ground_truth"])
    t = res.manifest["timing"]
    assert sum(t["stages"].values()) >= 0.95 * t["wall"]


def test_missing_file_is_input_error(demo):
    _, paths, _ = demo
    with pytest.raises(InputError) as e:
        run(cfg(), [*paths["corpus"], "/nonexistent.jsonl"], paths["manifests"])
    assert e.value.stage == "load" and e.value.exit_code == 1


def test_failed_run_writes_nothing(demo, tmp_path):
    _, paths, root = demo
    bad = root / "bad_manifest.json"
    bad.write_text(json.dumps({"video_id": "x", "video_tags": ["beach"], "keyframes": [
        {"frame_id": "a", "timestamp_s": 0.0, "descriptor": [0.0] * 32},
        {"frame_id": "b", "timestamp_s": 0.0, "descriptor": [0.0] * 32},
    ]}))
    with pytest.raises(InputError):
        run(cfg(), paths["corpus"], [str(bad)], out_dir=tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_stage_wraps_unexpected_errors():
    timer = StageTimer()
    with pytest.raises(InvariantError) as e:
        with timer.stage("scoring", "f1"):
            raise ZeroDivisionError("boom")
    assert e.value.stage == "scoring" and e.value.item == "f1" and e.value.exit_code == 3


def test_retrieval_set_empty_reports_video(demo):
    data, _, _ = demo
    from vidtag.corpus import VideoManifest

    video = VideoManifest("lonely", frozenset({"volcano"}), data.video.keyframes)
    with pytest.raises(InputError) as e:
        annotate_video(video, data.images, cfg())
    assert e.value.stage == "retrieval_set" and e.value.item == "lonely"


def test_transition_table_too_short(demo, tmp_path):
    _, paths, _ = demo
    from vidtag.temporal import TransitionTable

    TransitionTable({("beach", 1): 0.9}, 1).save(tmp_path / "t.csv")
    with pytest.raises(ConfigError):
        run(cfg(d=3), paths["corpus"], paths["manifests"], transitions=tmp_path / "t.csv")


def test_ablation_rows_and_tags(demo, tmp_path):
    _, paths, _ = demo
    reports, text = ablate_sources(cfg(), [["V"], ["V", "B", "G", "F"]], paths["corpus"], paths["manifests"],
                                   paths["ground_truth"], out_dir=tmp_path)
    assert list(reports) == ["V", "V+B+G+F"]
    assert set(reports["V"].per_tag) == set(reports["V+B+G+F"].per_tag)
    assert len(text.strip().splitlines()) == 3
    assert (tmp_path / "ablation.txt").exists() and (tmp_path / "ablation.json").exists()


def test_ablation_config_errors(demo):
    _, paths, _ = demo
    with pytest.raises(ConfigError):
        ablate_sources(cfg(), [["V"], []], paths["corpus"], paths["manifests"], paths["ground_truth"])
    with pytest.raises(ConfigError):
        ablate_sources(cfg(), [["V"]], paths["corpus"], paths["manifests"], paths["ground_truth"])
    with pytest.raises(ConfigError):
        ablate_sources(cfg(), [["V"], ["F"]], paths["corpus"], paths["manifests"], None)


def test_empty_source_file_is_noop(demo, tmp_path):
    _, paths, _ = demo
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    a = run(cfg(), paths["corpus"], paths["manifests"], paths["ground_truth"])
    b = run(cfg(), [*paths["corpus"], str(empty)], paths["manifests"], paths["ground_truth"])
    assert a.annotation_lines() == b.annotation_lines()
    assert a.report.to_json() == b.report.to_json()


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        make_config(sources=[])
    with pytest.raises(ConfigError):
        make_config(K=600, max_checks=512)
    with pytest.raises(ConfigError):
        make_config(bogus=1)
    assert make_config(K=600, max_checks=512, index_mode="exact").K == 600
    c = make_config(sources="F+V")
    assert c.sources == [Source.VIDEO, Source.FLICKR] and c.source_label == "V+F"
    p = tmp_path / "c.yaml"
    p.write_text("K: 50\nd: 1\nsources: V+B\n")
    c = load_config(p, d=2)
    assert (c.K, c.d, c.source_label) == (50, 2, "V+B")
    p.write_text("- not a mapping\n")
    with pytest.raises(ConfigError):
        load_config(p)
