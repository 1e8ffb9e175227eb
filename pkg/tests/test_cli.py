import json

import numpy as np
import pytest

from dynstress.cli import main
from dynstress.features import read_fseq
from dynstress.segmentation import write_wav

SR = 16000


def manifest_line(name, spans, split="train", stress_spans=None, extra=None):
    obj = {
        "audio_path": f"{name}.wav",
        "speaker_id": "spk",
        "utterance_id": name,
        "text_id": "t1",
        "spans": [
            {"start_s": a, "end_s": b, "label": lab} for a, b, lab in spans
        ],
        "split": split,
    }
    if stress_spans:
        obj["stress_spans"] = [
            {"start_s": a, "end_s": b, "label": lab} for a, b, lab in stress_spans
        ]
    if extra:
        obj.update(extra)
    return json.dumps(obj)


@pytest.fixture()
def data_dir(tmp_path):
    rng = np.random.default_rng(0)
    for name in ("a", "b"):
        write_wav(tmp_path / f"{name}.wav", 0.1 * rng.normal(size=30 * SR))
    lines = [
        manifest_line("a", [(0, 15, "fear"), (15, 30, "happiness")],
                      stress_spans=[(0, 15, "fear"), (15, 30, "happiness")]),
        manifest_line("b", [(0, 30, "anger")], split="test",
                      stress_spans=[(0, 30, "anger")]),
    ]
    (tmp_path / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    return tmp_path


def run(args):
    return main([str(a) for a in args])


def test_unknown_flag_exits_usage(data_dir, capsys):
    with pytest.raises(SystemExit) as e:
        run(["label", "--manifest", data_dir / "manifest.jsonl", "--frobnicate"])
    assert e.value.code == 1


def test_missing_subcommand_exits_usage():
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 1


def test_missing_wav_exits_data(tmp_path, capsys):
    (tmp_path / "m.jsonl").write_text(
        manifest_line("ghost", [(0, 30, "fear")]) + "\n"
    )
    code = run(["label", "--manifest", tmp_path / "m.jsonl",
                "--out", tmp_path / "run"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_bad_manifest_exits_data(tmp_path):
    (tmp_path / "m.jsonl").write_text('{"speaker_id": "s"}\n')
    assert run(["segment", "--manifest", tmp_path / "m.jsonl",
                "--out", tmp_path / "run"]) == 2


def test_segment_writes_windows(data_dir):
    out = data_dir / "seg"
    assert run(["segment", "--manifest", data_dir / "manifest.jsonl",
                "--out", out]) == 0
    rows = [json.loads(l) for l in (out / "windows.jsonl").read_text().splitlines()]
    assert len(rows) == 10  # two 30 s clips, 5 windows each
    assert {r["label"] for r in rows} == {"0,1,0", "1,1,1", "0,1,1"}
    assert (out / "resolved_config.json").exists()


def test_label_happy_path_and_determinism(data_dir):
    out1, out2 = data_dir / "lab1", data_dir / "lab2"
    args = ["label", "--manifest", data_dir / "manifest.jsonl",
            "--n", "2", "--lambda", "0.8", "--tau", "0.5"]
    assert run(args + ["--out", out1]) == 0
    assert run(args + ["--out", out2]) == 0
    body1 = (out1 / "labels.jsonl").read_bytes()
    assert body1 == (out2 / "labels.jsonl").read_bytes()
    rows = [json.loads(l) for l in body1.decode().splitlines()]
    assert len(rows) == 10
    assert all(set(r) == {"clip_id", "window", "emotion", "stress_code",
                          "stress"} for r in rows)
    resolved = json.loads((out1 / "resolved_config.json").read_text())
    assert resolved["n"] == 2 and resolved["lam"] == 0.8


def test_config_file_merge(data_dir):
    cfg = data_dir / "run.cfg"
    cfg.write_text("n = 1  # short history\ntau = 0.75\n")
    out = data_dir / "cfglab"
    assert run(["label", "--manifest", data_dir / "manifest.jsonl",
                "--config", cfg, "--tau", "0.25", "--out", out]) == 0
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["n"] == 1       # filled from the file
    assert resolved["tau"] == 0.25  # explicit flag beats the file


def test_extract_writes_fseq(data_dir):
    out = data_dir / "feats"
    assert run(["extract", "--manifest", data_dir / "manifest.jsonl",
                "--out", out]) == 0
    mat = read_fseq(out / "a.fseq")
    assert mat.shape == (5, 40)


def test_sweep_writes_grids(data_dir):
    out = data_dir / "sweep"
    assert run(["sweep", "--manifest", data_dir / "manifest.jsonl",
                "--n", "0..2", "--lambda", "0.1,0.8", "--out", out]) == 0
    lines = (out / "sweep_binary.csv").read_text().strip().splitlines()
    assert lines[0] == "n,lambda=0.1,lambda=0.8"
    assert len(lines) == 4
    assert (out / "sweep_exact.csv").exists()


def test_sweep_without_references_exits_data(tmp_path):
    write_wav(tmp_path / "c.wav", np.zeros(10 * SR))
    (tmp_path / "m.jsonl").write_text(
        manifest_line("c", [(0, 10, "fear")]) + "\n"
    )
    assert run(["sweep", "--manifest", tmp_path / "m.jsonl",
                "--out", tmp_path / "run"]) == 2


def test_train_then_eval_roundtrip(data_dir):
    out = data_dir / "train"
    code = run([
        "train", "--manifest", data_dir / "manifest.jsonl", "--out", out,
        "--n", "2", "--hidden", "8", "--dropout", "0.0",
        "--epochs", "1", "--iterations", "5", "--batch-size", "4",
        "--seed", "1",
    ])
    assert code == 0
    assert (out / "best.ckpt").exists()
    assert (out / "metrics.csv").exists()

    ev = data_dir / "eval"
    code = run([
        "eval", "--manifest", data_dir / "manifest.jsonl", "--out", ev,
        "--ckpt", out / "best.ckpt", "--n", "2", "--split", "test",
    ])
    assert code == 0
    summary = json.loads((ev / "eval.json").read_text())
    assert summary["level"] == "segment"
    assert 0.0 <= summary["accuracy"] <= 1.0
    assert summary["tp"] + summary["fp"] + summary["tn"] + summary["fn"] == 5

    seq = data_dir / "eval-seq"
    code = run([
        "eval", "--manifest", data_dir / "manifest.jsonl", "--out", seq,
        "--ckpt", out / "best.ckpt", "--n", "2", "--split", "test",
        "--level", "sequence",
    ])
    assert code == 0
    assert json.loads((seq / "eval.json").read_text())["level"] == "sequence"

    abl = data_dir / "ablate"
    code = run([
        "ablate", "--manifest", data_dir / "manifest.jsonl", "--out", abl,
        "--ckpt", out / "best.ckpt", "--n-values", "0..2", "--split", "test",
    ])
    assert code == 0
    lines = (abl / "ablation.csv").read_text().strip().splitlines()
    assert len(lines) == 4  # header + one row per n value


def test_augment_command(tmp_path):
    rng = np.random.default_rng(4)
    for name in ("u1", "u2"):
        write_wav(tmp_path / f"{name}.wav", 0.1 * rng.normal(size=5 * SR))
    lines = [
        manifest_line("u1", [(0, 5, "happiness")]),
        manifest_line("u2", [(0, 5, "fear")]),
    ]
    (tmp_path / "m.jsonl").write_text("\n".join(lines) + "\n")
    out = tmp_path / "aug"
    assert run(["augment", "--manifest", tmp_path / "m.jsonl",
                "--out", out]) == 0
    rows = [json.loads(l) for l in (out / "augmented.jsonl").read_text().splitlines()]
    assert len(rows) == 1
    assert rows[0]["final_label"] == "0,1,0"
    assert (out / f"{rows[0]['utterance_id']}.wav").exists()


def test_run_dir_env_fallback(data_dir, monkeypatch, tmp_path):
    target = tmp_path / "envrun"
    monkeypatch.setenv("DYNSTRESS_RUN_DIR", str(target))
    assert run(["label", "--manifest", data_dir / "manifest.jsonl"]) == 0
    assert (target / "labels.jsonl").exists()
