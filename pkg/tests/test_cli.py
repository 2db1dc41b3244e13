"""End-to-end tests for the command-line surface.

Every test drives main() in-process and checks the contract: exit code
0/2/3/4, exactly one machine-readable line on stdout, human chatter on
stderr only, and byte-identical artifacts for identical invocations.
"""

import json

import numpy as np
import pytest

from emgtcn import stats, train as tr
from emgtcn.cli import main
from emgtcn.model import AttentionTcn


def run(argv):
    return main([str(a) for a in argv])


def machine_line(capsys):
    """Parse stdout, asserting it carries exactly one key=value line."""
    out = capsys.readouterr().out
    lines = [ln for ln in out.splitlines() if ln.strip()]
    assert len(lines) == 1, f"expected one stdout line, got {lines!r}"
    return dict(pair.split("=", 1) for pair in lines[0].split())


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One small synth -> preprocess -> train -> eval run, shared."""
    root = tmp_path_factory.mktemp("cli")
    raw = root / "raw"
    segs = root / "segs.sseg"
    ckpt = root / "model.ckpt"
    trace = root / "trace.csv"
    reports = root / "reports"
    assert run([
        "synth", "--out-dir", raw, "--subjects", 2, "--num-classes", 3,
        "--reps", 6, "--seed", 9, "--gesture-seconds", 0.3,
        "--rest-seconds", 0.1,
    ]) == 0
    inputs = sorted(str(p) for p in raw.iterdir())
    assert run(["preprocess", *inputs, "--out", segs]) == 0
    assert run([
        "train", segs, "--checkpoint", ckpt, "--trace", trace,
        "--epochs", 2, "--lr", 0.01, "--model-dim", 4,
        "--num-classes", 3, "--seed", 5,
    ]) == 0
    assert run([
        "eval", ckpt, segs, "--out-dir", reports, "--num-classes", 3,
    ]) == 0
    return {
        "root": root, "raw": raw, "segs": segs, "ckpt": ckpt,
        "trace": trace, "reports": reports, "inputs": inputs,
    }


def test_pipeline_artifacts_exist(pipeline):
    assert pipeline["segs"].exists()
    assert pipeline["ckpt"].exists()
    assert pipeline["trace"].exists()
    assert (pipeline["reports"] / "model_per_subject.csv").exists()
    assert (pipeline["reports"] / "model_summary.csv").exists()


def test_preprocess_stdout_is_single_machine_line(pipeline, tmp_path, capsys):
    out = tmp_path / "again.sseg"
    assert run(["preprocess", *pipeline["inputs"], "--out", out]) == 0
    fields = machine_line(capsys)
    assert fields["segments"] == str(out)
    assert fields["count"].isdigit() and int(fields["count"]) > 0
    assert fields["classes"] == "3"


def test_train_stdout_fields(pipeline, tmp_path, capsys):
    ck, trc = tmp_path / "m.ckpt", tmp_path / "t.csv"
    assert run([
        "train", pipeline["segs"], "--checkpoint", ck, "--trace", trc,
        "--epochs", 1, "--model-dim", 4, "--num-classes", 3, "--seed", 5,
    ]) == 0
    fields = machine_line(capsys)
    assert fields["checkpoint"] == str(ck)
    assert float(fields["final_loss"]) > 0.0
    assert 0.0 <= float(fields["final_train_acc"]) <= 1.0


def test_eval_stdout_and_reports_agree(pipeline, capsys, tmp_path):
    out_dir = tmp_path / "rep"
    assert run([
        "eval", pipeline["ckpt"], pipeline["segs"], "--out-dir", out_dir,
        "--num-classes", 3, "--model-id", "trial",
    ]) == 0
    fields = machine_line(capsys)
    per_subject = stats.read_per_subject(fields["per_subject"])
    assert sorted(per_subject) == [1, 2]
    values = np.array([per_subject[s] for s in sorted(per_subject)])
    assert float(fields["mean"]) == pytest.approx(values.mean(), abs=1e-15)
    assert "trial_per_subject.csv" in fields["per_subject"]


def test_invalid_patch_count_exits_2(pipeline, tmp_path, capsys):
    code = run([
        "preprocess", pipeline["inputs"][0], "--out", tmp_path / "x.sseg",
        "--num-patches", 7,
    ])
    captured = capsys.readouterr()
    assert code == 2
    assert captured.out == ""
    assert "7" in captured.err


def test_corrupt_checkpoint_exits_4(pipeline, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage here")
    assert run(["eval", bad, pipeline["segs"], "--out-dir", tmp_path]) == 4
    assert capsys.readouterr().out == ""


def test_missing_input_exits_4(pipeline, tmp_path):
    assert run([
        "eval", tmp_path / "absent.ckpt", pipeline["segs"],
        "--out-dir", tmp_path,
    ]) == 4


def test_eval_window_mismatch_exits_2(pipeline, tmp_path, capsys):
    narrow = tmp_path / "narrow.sseg"
    assert run([
        "preprocess", *pipeline["inputs"], "--out", narrow,
        "--window-ms", 100,
    ]) == 0
    capsys.readouterr()
    code = run([
        "eval", pipeline["ckpt"], narrow, "--out-dir", tmp_path,
        "--num-classes", 3,
    ])
    assert code == 2
    assert "200" in capsys.readouterr().err  # 100 ms at 2 kHz


def test_compare_happy_path(pipeline, tmp_path, capsys):
    paths = []
    for name, bump in (("alpha", 0.0), ("beta", 0.05), ("gamma", -0.1)):
        p = tmp_path / f"{name}_per_subject.csv"
        p.write_text(
            "subject,accuracy\n"
            + "".join(f"{s},{0.5 + bump + 0.01 * s}\n" for s in range(1, 7))
        )
        paths.append(p)
    out = tmp_path / "cmp.csv"
    assert run(["compare", *paths, "--out", out]) == 0
    fields = machine_line(capsys)
    assert fields["rows"] == "2"
    lines = out.read_text().splitlines()
    assert lines[0] == "model_a,model_b,W,p,band"
    assert [ln.split(",")[:2] for ln in lines[1:]] == [
        ["alpha", "beta"], ["alpha", "gamma"],
    ]
    for ln in lines[1:]:
        band, p_val = ln.split(",")[4], float(ln.split(",")[3])
        assert band == stats.significance_band(p_val)


def test_compare_subject_mismatch_exits_2(tmp_path, capsys):
    a = tmp_path / "a_per_subject.csv"
    b = tmp_path / "b_per_subject.csv"
    a.write_text("subject,accuracy\n1,0.5\n2,0.6\n")
    b.write_text("subject,accuracy\n1,0.5\n3,0.6\n")
    assert run(["compare", a, b, "--out", tmp_path / "c.csv"]) == 2
    err = capsys.readouterr().err
    assert "2" in err and "3" in err


def test_train_rerun_is_byte_identical(pipeline, tmp_path):
    outs = []
    for tag in ("one", "two"):
        ck, trc = tmp_path / f"{tag}.ckpt", tmp_path / f"{tag}.csv"
        assert run([
            "train", pipeline["segs"], "--checkpoint", ck, "--trace", trc,
            "--epochs", 2, "--model-dim", 4, "--num-classes", 3,
            "--seed", 5,
        ]) == 0
        outs.append((ck.read_bytes(), trc.read_bytes()))
    assert outs[0] == outs[1]


def test_synth_env_seed_matches_flag(tmp_path, monkeypatch):
    flag_dir, env_dir = tmp_path / "flag", tmp_path / "env"
    monkeypatch.delenv("TCHGR_SEED", raising=False)
    assert run([
        "synth", "--out-dir", flag_dir, "--subjects", 2, "--num-classes", 3,
        "--reps", 2, "--seed", 11, "--gesture-seconds", 0.2,
        "--rest-seconds", 0.05,
    ]) == 0
    monkeypatch.setenv("TCHGR_SEED", "11")
    assert run([
        "synth", "--out-dir", env_dir, "--subjects", 2, "--num-classes", 3,
        "--reps", 2, "--gesture-seconds", 0.2, "--rest-seconds", 0.05,
    ]) == 0
    for name in ("subject01.semg", "subject02.semg"):
        assert (flag_dir / name).read_bytes() == (env_dir / name).read_bytes()


def test_flag_seed_beats_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("TCHGR_SEED", "99")
    assert run([
        "synth", "--out-dir", tmp_path / "s", "--subjects", 1,
        "--num-classes", 2, "--reps", 1, "--seed", 3,
        "--gesture-seconds", 0.2, "--rest-seconds", 0.05,
    ]) == 0
    assert machine_line(capsys)["seed"] == "3"


def test_bad_env_seed_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("TCHGR_SEED", "zebra")
    assert run([
        "synth", "--out-dir", tmp_path / "s", "--subjects", 1,
        "--num-classes", 2, "--reps", 1,
    ]) == 2
    assert "TCHGR_SEED" in capsys.readouterr().err


def test_zero_epochs_checkpoint_equals_initialization(pipeline, tmp_path):
    ck = tmp_path / "init.ckpt"
    assert run([
        "train", pipeline["segs"], "--checkpoint", ck,
        "--trace", tmp_path / "t.csv", "--epochs", 0,
        "--model-dim", 4, "--num-classes", 3, "--seed", 5,
    ]) == 0
    restored = tr.restore_model(tr.load_checkpoint(ck))
    fresh = AttentionTcn(restored.cfg, seed=5)
    for name, param in fresh.named_parameters().items():
        stored = restored.named_parameters()[name]
        assert param.data.tobytes() == stored.data.tobytes(), name


def test_largest_published_geometry_accepted(capsys):
    # 300 ms window, 15 patches of 40 samples, 16-dim embedding
    assert run([
        "params", "--window-ms", 300, "--num-patches", 15,
        "--model-dim", 16,
    ]) == 0
    fields = machine_line(capsys)
    embedding = 12 * 40 * 16 + 16
    attention = 4 * (16 * 16 + 16)
    blocks = 4 * 2 * (16 * 16 * 3 + 16)
    classifier = 15 * 16 * 17 + 17
    assert int(fields["embedding"]) == embedding
    assert int(fields["attention"]) == attention
    assert int(fields["blocks"]) == blocks
    assert int(fields["classifier"]) == classifier
    assert int(fields["total"]) == embedding + attention + blocks + classifier
    assert int(fields["baseline"]) == 1_102_801
    assert float(fields["ratio"]) > 10.0


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"num_patches": 10, "model_dim": 12}))
    assert run([
        "params", "--config", cfg, "--window-ms", 200, "--model-dim", 4,
    ]) == 0
    fields = machine_line(capsys)
    # flag D=4 wins over the file's 12; file's N=10 still applies
    assert int(fields["attention"]) == 4 * (4 * 4 + 4)
    assert int(fields["classifier"]) == 10 * 4 * 17 + 17


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"learning_rate": 0.1}))
    assert run(["params", "--config", cfg]) == 2
    assert "learning_rate" in capsys.readouterr().err


def test_malformed_config_json_exits_2(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text("{not json")
    assert run(["params", "--config", cfg]) == 2
    assert "JSON" in capsys.readouterr().err


def test_train_rep_filter_affects_segment_count(pipeline, tmp_path, capsys):
    ck, trc = tmp_path / "m.ckpt", tmp_path / "t.csv"
    with pytest.warns(UserWarning, match="outside both repetition sets"):
        code = run([
            "train", pipeline["segs"], "--checkpoint", ck, "--trace", trc,
            "--epochs", 0, "--model-dim", 4, "--num-classes", 3,
            "--train-reps", "1", "--test-reps", "2",
        ])
    assert code == 0
    err = capsys.readouterr().err
    assert "training on 6 segments" in err  # 2 subjects x 3 classes x rep 1


def test_overlapping_rep_split_exits_2(pipeline, tmp_path, capsys):
    assert run([
        "train", pipeline["segs"], "--checkpoint", tmp_path / "m.ckpt",
        "--trace", tmp_path / "t.csv", "--epochs", 1,
        "--model-dim", 4, "--num-classes", 3, "--train-reps", "1,2",
        "--test-reps", "2,5",
    ]) == 2
    assert capsys.readouterr().out == ""


def test_out_of_range_rep_exits_2(pipeline, tmp_path):
    assert run([
        "train", pipeline["segs"], "--checkpoint", tmp_path / "m.ckpt",
        "--trace", tmp_path / "t.csv", "--epochs", 1,
        "--model-dim", 4, "--num-classes", 3, "--train-reps", "1,7",
    ]) == 2
