import csv
import json

import numpy as np
import pytest

from snipmotion import cli
from snipmotion.io import load_corpus, read_motion, write_motion
from snipmotion.model import load_checkpoint
from snipmotion.skeleton import MotionSequence
from snipmotion.train import evaluate_by_tag

TINY = {"model": {"history": 6, "horizon": 8, "hidden": 4, "blocks": 1, "snippets": 3, "stages": 2},
        "train": {"learning_rate": 0.003, "epochs": 3, "batch_size": 2}}


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def synth(path, capsys, **kw):
    flags = {"joints": 3, "knots": 3, "frames": 14, "seed": 0, "min-gap": 2}
    flags.update(kw)
    argv = ["synth", "--out", path]
    for k, v in flags.items():
        argv += [f"--{k}", v]
    code, _, err = run(argv, capsys)
    assert code == 0, err
    return path


@pytest.fixture
def corpus_dir(tmp_path, capsys):
    root = tmp_path / "corpus"
    for tag, seeds in [("walk", [0, 1]), ("jump", [2, 3])]:
        (root / tag).mkdir(parents=True)
        for s in seeds:
            synth(root / tag / f"m{s}.snpm", capsys, seed=s, frames=28, noise=0.5)
    return root


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(TINY))
    return p


@pytest.fixture
def trained(tmp_path, corpus_dir, config_file, capsys):
    ck = tmp_path / "m.ckpt"
    code, _, err = run(["train", "--corpus", corpus_dir, "--config", config_file, "--ckpt-out", ck,
                        "--log-out", tmp_path / "log.jsonl"], capsys)
    assert code == 0, err
    return ck


def error_of(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


class TestSynth:
    def test_deterministic(self, tmp_path, capsys):
        a = synth(tmp_path / "a.snpm", capsys, noise=0)
        b = synth(tmp_path / "b.snpm", capsys, noise=0)
        assert a.read_bytes() == b.read_bytes()

    def test_two_knots_empty_sidecar(self, tmp_path, capsys):
        p = synth(tmp_path / "a.snpm", capsys, knots=2)
        assert json.loads((tmp_path / "a.snpm.transitions.json").read_text())["transitions"] == []
        assert read_motion(p).frames == 14

    def test_frames_too_small(self, tmp_path, capsys):
        code, _, err = run(["synth", "--joints", 3, "--knots", 5, "--frames", 4, "--out", tmp_path / "x"], capsys)
        assert code != 0 and error_of(err)["code"] == "invalid_flag"

    def test_missing_flag_is_usage_error(self, tmp_path, capsys):
        code, _, err = run(["synth", "--joints", 3], capsys)
        e = error_of(err)
        assert code == 2 and e["code"] == "usage" and "usage:" in e["message"]


class TestSegment:
    def test_matches_sidecar(self, tmp_path, capsys):
        p = synth(tmp_path / "a.snpm", capsys, knots=4, frames=30, **{"min-gap": 4})
        truth = json.loads((tmp_path / "a.snpm.transitions.json").read_text())["transitions"]
        code, out, _ = run(["segment", "--in", p, "--snippets", 3], capsys)
        assert code == 0
        report = json.loads(out)
        assert report["transitions"] == truth
        assert sorted(e["frame"] for e in report["trail"]) == truth

    def test_one_snippet(self, tmp_path, capsys):
        p = synth(tmp_path / "a.snpm", capsys)
        code, out, _ = run(["segment", "--in", p, "--snippets", 1], capsys)
        assert json.loads(out)["transitions"] == [] and json.loads(out)["trail"] == []

    def test_shared_single_file_equals_non_shared(self, tmp_path, capsys):
        p = synth(tmp_path / "a.snpm", capsys, knots=4, frames=30)
        outs = [json.loads(run(["segment", "--in", p, "--snippets", 3, "--scheme", s], capsys)[1])["transitions"]
                for s in ("shared", "non_shared")]
        assert outs[0] == outs[1]

    def test_too_many_snippets(self, tmp_path, capsys):
        p = synth(tmp_path / "a.snpm", capsys)
        code, _, err = run(["segment", "--in", p, "--snippets", 14], capsys)
        e = error_of(err)
        assert code == 1 and e["code"] == "too_many_snippets" and "at most 13" in e["message"]

    def test_writes_file(self, tmp_path, capsys):
        p = synth(tmp_path / "a.snpm", capsys)
        run(["segment", "--in", p, "--snippets", 2, "--out", tmp_path / "seg.json"], capsys)
        assert json.loads((tmp_path / "seg.json").read_text())["scheme"] == "non_shared"


class TestTrain:
    def test_outputs(self, trained, tmp_path):
        log = [json.loads(l) for l in (tmp_path / "log.jsonl").read_text().splitlines()]
        assert len(log) == 3
        manifest = json.loads((tmp_path / "m.ckpt.manifest.json").read_text())
        assert set(manifest) >= {"config", "corpus_checksum", "seed", "git_describe", "wall_clock_s"}
        assert manifest["config"]["model"]["joints"] == 3

    def test_same_seed_bit_identical(self, trained, tmp_path, corpus_dir, config_file, capsys):
        ck2 = tmp_path / "m2.ckpt"
        run(["train", "--corpus", corpus_dir, "--config", config_file, "--ckpt-out", ck2,
             "--log-out", tmp_path / "log2.jsonl"], capsys)
        assert trained.read_bytes() == ck2.read_bytes()
        assert (tmp_path / "log.jsonl").read_bytes() == (tmp_path / "log2.jsonl").read_bytes()

    def test_stages_zero(self, tmp_path, corpus_dir, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"model": dict(TINY["model"], stages=0), "train": TINY["train"]}))
        code, _, err = run(["train", "--corpus", corpus_dir, "--config", cfg, "--ckpt-out", tmp_path / "x",
                            "--log-out", tmp_path / "y"], capsys)
        e = error_of(err)
        assert code == 1 and e["code"] == "invalid_config" and "stages" in e["message"]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nan_surfaces(self, tmp_path, corpus_dir, capsys):
        cfg = tmp_path / "nan.json"
        cfg.write_text(json.dumps({"model": TINY["model"], "train": dict(TINY["train"], learning_rate=1e308)}))
        code, _, err = run(["train", "--corpus", corpus_dir, "--config", cfg, "--ckpt-out", tmp_path / "x",
                            "--log-out", tmp_path / "y"], capsys)
        e = error_of(err)
        assert code == 1 and e["code"] == "NonFiniteError" and "non-finite" in e["message"]


class TestEval:
    def test_matches_in_process(self, trained, tmp_path, corpus_dir, capsys):
        out = tmp_path / "table.csv"
        code, _, err = run(["eval", "--ckpt", trained, "--corpus", corpus_dir, "--timestamps", "320,80,160",
                            "--out", out, "--svg", tmp_path / "curve.svg"], capsys)
        assert code == 0, err
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["tag", "320ms", "80ms", "160ms"]
        assert [r[0] for r in rows[1:]] == ["jump", "walk", "all"]
        model = load_checkpoint(trained)
        table = evaluate_by_tag(model, load_corpus(corpus_dir, 6, 8), [320, 80, 160])
        for r in rows[1:]:
            assert [float(v) for v in r[1:]] == [table[r[0]][t] for t in (320, 80, 160)]
        svg = (tmp_path / "curve.svg").read_text()
        assert svg.startswith("<svg") and svg.count("<polyline") == 3

    def test_perfect_oracle_gives_zeros(self, trained, tmp_path, corpus_dir, monkeypatch, capsys):
        corpus = load_corpus(corpus_dir, 6, 8)
        monkeypatch.setattr(cli, "evaluate_by_tag",
                            lambda m, c, ts: evaluate_by_tag(m, c, ts, predictions=c.future.copy()))
        out = tmp_path / "zero.csv"
        assert run(["eval", "--ckpt", trained, "--corpus", corpus_dir, "--out", out,
                    "--timestamps", "80,320"], capsys)[0] == 0
        rows = list(csv.reader(out.open()))
        assert all(float(v) == 0.0 for r in rows[1:] for v in r[1:])
        assert len(rows) == 1 + len(set(corpus.tags)) + 1

    def test_incompatible(self, trained, tmp_path, capsys):
        other = tmp_path / "other"
        other.mkdir()
        synth(other / "a.snpm", capsys, joints=4, frames=20)
        code, _, err = run(["eval", "--ckpt", trained, "--corpus", other, "--out", tmp_path / "t.csv"], capsys)
        e = error_of(err)
        assert code == 1 and e["code"] == "shape_mismatch"
        assert "'joints': 3" in e["message"] and "'joints': 4" in e["message"]

    def test_timestamp_beyond_horizon(self, trained, tmp_path, corpus_dir, capsys):
        code, _, err = run(["eval", "--ckpt", trained, "--corpus", corpus_dir, "--timestamps", "1000",
                            "--out", tmp_path / "t.csv"], capsys)
        assert code == 1 and "horizon" in error_of(err)["message"]


class TestPredict:
    def test_shape_and_determinism(self, trained, tmp_path, corpus_dir, capsys):
        src = next(corpus_dir.rglob("*.snpm"))
        outs = []
        for name in ("p1.snpm", "p2.snpm"):
            code, _, err = run(["predict", "--ckpt", trained, "--in", src, "--out", tmp_path / name], capsys)
            assert code == 0, err
            outs.append(tmp_path / name)
        seq = read_motion(outs[0])
        assert seq.data.shape == (8, 3, 3)
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_dump_transitionals_consistent(self, trained, tmp_path, corpus_dir, capsys):
        src = next(corpus_dir.rglob("*.snpm"))
        dump = tmp_path / "t.json"
        run(["predict", "--ckpt", trained, "--in", src, "--out", tmp_path / "p.snpm",
             "--dump-transitionals", dump], capsys)
        d = json.loads(dump.read_text())
        assert d["targets"][0] == 0 and d["targets"][-1] == 7
        np.testing.assert_array_equal(d["approx_at_targets"], d["transitionals"])

    def test_short_input(self, trained, tmp_path, capsys):
        short = tmp_path / "s.snpm"
        write_motion(MotionSequence(np.zeros((4, 3, 3))), short)
        code, _, err = run(["predict", "--ckpt", trained, "--in", short, "--out", tmp_path / "p"], capsys)
        assert code == 1 and error_of(err)["code"] == "short_input"
