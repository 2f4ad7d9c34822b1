import json

import numpy as np
import pytest

from grcattn import cli
from grcattn import training as tr

SMALL = {
    "seed": 1,
    "task": {"n_train": 12, "n_dev": 3, "n_test": 4, "max_len": 4},
    "model": {"enc": 6, "dec": 6, "att": 6, "emb": 3},
    "optim": {"epochs": 1, "batch_size": 4, "eval_every": 2},
    "decode": {"max_len": 8},
}


def write_config(path, **overrides):
    raw = json.loads(json.dumps(SMALL))
    raw.update(overrides)
    path.write_text(json.dumps(raw))
    return str(path)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    conf = write_config(root / "c.json")
    assert cli.main(["train", "--config", conf, "--out", str(root / "run")]) == 0
    gsa = write_config(root / "g.json", attention={"kind": "gsa"})
    assert cli.main(["train", "--config", gsa, "--out", str(root / "gsa")]) == 0
    return root


def test_train_outputs(trained):
    run = trained / "run"
    assert sorted(p.name for p in run.iterdir()) == ["checkpoint.json", "config.json", "loss.csv"]
    lines = (run / "loss.csv").read_text().splitlines()
    assert lines[0] == "iteration,epoch,train_ce,dev_ce"
    assert len(lines) == 1 + 3
    assert lines[2].split(",")[3] != "" and lines[1].split(",")[3] == ""


def test_train_is_byte_reproducible(trained, tmp_path):
    conf = write_config(tmp_path / "c.json")
    assert cli.main(["train", "--config", conf, "--out", str(tmp_path / "again")]) == 0
    for name in ("loss.csv", "checkpoint.json"):
        assert (tmp_path / "again" / name).read_bytes() == (trained / "run" / name).read_bytes()
    # the stored config alone reproduces the run
    assert cli.main(["train", "--config", str(trained / "run" / "config.json"), "--out", str(tmp_path / "third")]) == 0
    assert (tmp_path / "third" / "loss.csv").read_bytes() == (trained / "run" / "loss.csv").read_bytes()


def test_seed_flag_overrides(tmp_path, trained):
    conf = write_config(tmp_path / "c.json")
    assert cli.main(["train", "--config", conf, "--seed", "2", "--out", str(tmp_path / "s2")]) == 0
    assert json.loads((tmp_path / "s2" / "config.json").read_text())["seed"] == 2
    assert (tmp_path / "s2" / "loss.csv").read_bytes() != (trained / "run" / "loss.csv").read_bytes()


@pytest.mark.parametrize("att", [{"kind": "grc", "w": 2}, {"kind": "decgrc", "w": 2}, {"kind": "mocha"}])
def test_attention_schema(tmp_path, att):
    conf = write_config(tmp_path / "c.json", attention=att)
    assert cli.main(["train", "--config", conf, "--out", str(tmp_path / "o")]) == 2


def test_unknown_key_and_bad_flags(tmp_path):
    conf = write_config(tmp_path / "c.json", epochs=3)
    assert cli.main(["train", "--config", conf]) == 2
    assert cli.main(["train", "--bogus"]) == 2
    assert cli.main([]) == 2


def test_divergence_exit_code(tmp_path, monkeypatch):
    def boom(self, batch):
        raise tr.TrainingDiverged("non-finite loss")

    monkeypatch.setattr(tr.Trainer, "step", boom)
    conf = write_config(tmp_path / "c.json")
    assert cli.main(["train", "--config", conf, "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o" / "checkpoint.json").exists()


def test_verify(tmp_path, capsys):
    assert cli.main(["verify", "--trials", "10", "--seed", "4", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "verify.txt").read_text()
    assert "all invariants hold" in text and "model_gradients" in text
    assert cli.main(["verify", "--trials", "0"]) == 2
    assert cli.main(["verify", "--trials", "3", "--inject-fault", "dual-sign"]) == 1
    assert "FAIL duality" in capsys.readouterr().out


def test_sweep(trained, tmp_path):
    conf = str(trained / "c.json")
    ck = str(trained / "run" / "checkpoint.json")
    args = ["sweep", "--config", conf, "--checkpoint", ck, "--nu", "0,0.01,0.1,0.5"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    rows = (tmp_path / "a" / "sweep.csv").read_text().splitlines()
    assert rows[0] == "nu,wer,al_frames,al_seconds,endpoint_fraction"
    assert [float(r.split(",")[0]) for r in rows[1:]] == [0.0, 0.01, 0.1, 0.5]
    details = (tmp_path / "a" / "sweep_utterances.jsonl").read_text().splitlines()
    assert len(details) == 4 * 4
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("sweep.csv", "sweep_utterances.jsonl", "config.json"):
        a = (tmp_path / "a" / name).read_text().replace(str(tmp_path / "a"), "")
        b = (tmp_path / "b" / name).read_text().replace(str(tmp_path / "b"), "")
        assert a == b
    assert cli.main(["sweep", "--config", conf, "--checkpoint", ck, "--nu", ""]) == 2
    assert cli.main(["sweep", "--config", conf, "--checkpoint", ck, "--nu", "0,1.5"]) == 2
    gsa = str(trained / "gsa" / "checkpoint.json")
    assert cli.main(["sweep", "--config", str(trained / "g.json"), "--checkpoint", gsa, "--out", str(tmp_path / "c")]) == 2
    assert cli.main(["sweep", "--config", conf, "--out", str(tmp_path / "d")]) == 2


def read_csv(path):
    return np.array([[float(v) for v in line.split(",")] for line in path.read_text().splitlines()])


def read_pgm(path):
    raw = path.read_bytes()
    header, _, body = raw.partition(b"\n")
    return header.decode(), np.frombuffer(body, dtype=np.uint8)


def test_dump_attention_gsa(trained, tmp_path):
    out = tmp_path / "gsa"
    args = ["dump-attention", "--config", str(trained / "g.json"), "--checkpoint",
            str(trained / "gsa" / "checkpoint.json"), "--utt", "1", "--out", str(out)]
    assert cli.main(args) == 0
    A = read_csv(out / "attention.csv")
    np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-12)
    header, body = read_pgm(out / "attention.pgm")
    U, T = A.shape
    assert header == f"P5 {T} {U} 255"
    assert body.size == T * U
    np.testing.assert_array_equal(body.reshape(U, T), np.rint(A * 255))
    assert not (out / "gates.csv").exists()


def test_dump_attention_decgrc(trained, tmp_path):
    args = ["dump-attention", "--config", str(trained / "c.json"), "--checkpoint",
            str(trained / "run" / "checkpoint.json"), "--out", str(tmp_path)]
    assert cli.main(args + ["--utt", "0"]) == 0
    Z = read_csv(tmp_path / "gates.csv")
    assert np.all(Z[:, 0] == 1.0)
    assert np.all(np.diff(Z[:, 1:], axis=1) <= 0)
    np.testing.assert_allclose(read_csv(tmp_path / "attention.csv").sum(axis=1), 1.0, atol=1e-12)
    header, _ = read_pgm(tmp_path / "gates.pgm")
    assert header == f"P5 {Z.shape[1]} {Z.shape[0]} 255"
    assert cli.main(args + ["--utt", "17"]) == 2


def test_decode(trained, tmp_path, capsys):
    base = ["decode", "--config", str(trained / "c.json"), "--checkpoint", str(trained / "run" / "checkpoint.json")]
    assert cli.main(base + ["--out", str(tmp_path / "off")]) == 0
    assert cli.main(base + ["--nu", "0", "--out", str(tmp_path / "on")]) == 0
    off = [json.loads(l)["hyp"] for l in (tmp_path / "off" / "hypotheses.jsonl").read_text().splitlines()]
    on = [json.loads(l)["hyp"] for l in (tmp_path / "on" / "hypotheses.jsonl").read_text().splitlines()]
    assert off == on
    assert cli.main(base + ["--nu", "0.1,0.2"]) == 2
