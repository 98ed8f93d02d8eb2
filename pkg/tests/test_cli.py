import json
import subprocess
import sys

import numpy as np
import pytest

from effcrn.cli import main
from effcrn.topology import build_model, save_checkpoint
from effcrn.training.metrics import delta_snr
from effcrn.training.mixing import mix_at_snr
from effcrn.training.synth import shaped_noise, tone_utterance
from effcrn.wavio import read_wav, write_wav


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_table_variants(capsys):
    code, out, _ = run(capsys, "analyze", "FCRN15", "EffCRN23", "EffCRN23lite", "--format", "json-lines")
    rows = [json.loads(l) for l in out.splitlines()]
    params = {r["variant"]: r["params"] for r in rows if "variant" in r}
    assert code == 0
    assert params["FCRN15"] == pytest.approx(875_000, rel=0.1)
    assert params["EffCRN23"] == pytest.approx(997_000, rel=0.1)
    assert params["EffCRN23lite"] == pytest.approx(396_000, rel=0.1)
    assert all("published_params" in r for r in rows if "variant" in r)


def test_analyze_minus_c_and_default(capsys):
    code, out, _ = run(capsys, "analyze", "FCRN15⊖C", "--format", "json-lines")
    assert code == 0 and json.loads(out.splitlines()[0])["params"] == pytest.approx(777_000, rel=0.1)
    code, out, _ = run(capsys, "analyze")
    assert code == 0 and out.count("FCRN15+F+D+P") >= 1 and "EffCRN23lite" in out


def test_analyze_unknown_variant(capsys):
    code, _, err = run(capsys, "analyze", "Nope")
    assert code == 2 and "unknown variant" in err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_describe(capsys, tmp_path):
    code, out, _ = run(capsys, "describe", "--variant", "EffCRN23")
    doc = json.loads(out)
    assert code == 0 and doc["depth"] == 23 and len(doc["layers"]) > 20


def test_enhance_zero_signal(tmp_path, capsys):
    write_wav(tmp_path / "z.wav", np.zeros(8000))
    save_checkpoint(build_model("EffCRN23lite", seed=0), tmp_path / "m.ckpt")
    code, out, _ = run(capsys, "enhance", "--model", str(tmp_path / "m.ckpt"),
                       "--in", str(tmp_path / "z.wav"), "--out", str(tmp_path / "o.wav"),
                       "--format", "json-lines")
    y, _ = read_wav(tmp_path / "o.wav")
    stats = json.loads(out)
    assert code == 0 and y.size == 8000 and np.all(y == 0)
    assert stats["ms_per_frame"] > 0 and stats["real_time_factor"] > 0


def test_enhance_rate_mismatch(tmp_path, capsys):
    write_wav(tmp_path / "r.wav", np.zeros(4410), rate=44100)
    code, _, err = run(capsys, "enhance", "--variant", "EffCRN23lite", "--in", str(tmp_path / "r.wav"),
                       "--out", str(tmp_path / "o.wav"))
    assert code != 0 and "44100" in err


def test_enhance_corrupt_checkpoint(tmp_path, capsys):
    (tmp_path / "bad.ckpt").write_bytes(b"EFFCRNCK\x01\x00")
    write_wav(tmp_path / "z.wav", np.zeros(1000))
    code, _, err = run(capsys, "enhance", "--model", str(tmp_path / "bad.ckpt"),
                       "--in", str(tmp_path / "z.wav"), "--out", str(tmp_path / "o.wav"))
    assert code == 1 and "truncated" in err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Synthetic corpus plus a short training run through the CLI."""
    root = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--out", str(root), "--n-train", "4", "--n-val", "1",
                 "--seconds", "0.5"]) == 0
    ckpt = root / "model.ckpt"
    code = main(["train", "--manifest", str(root / "manifest.txt"), "--variant", "EffCRN23lite",
                 "--out", str(ckpt), "--steps", "50", "--batch-size", "2", "--seq-len", "30",
                 "--lr", "1e-3", "--log", str(root / "log.jsonl")])
    assert code == 0
    return root, ckpt


def test_train_writes_decreasing_log(trained):
    root, ckpt = trained
    log = [json.loads(l) for l in (root / "log.jsonl").read_text().splitlines()]
    losses = np.array([r["train_loss"] for r in log])
    assert log[-1]["steps"] == 50
    slope = np.polyfit(np.arange(losses.size), losses, 1)[0]
    assert slope < 0 and losses[-5:].mean() < losses[:5].mean()
    assert ckpt.exists()


def test_resume_requires_same_spec(trained, capsys):
    root, ckpt = trained
    code, _, err = run(capsys, "train", "--manifest", str(root / "manifest.txt"), "--variant", "FCRN15",
                       "--resume", str(ckpt), "--out", str(root / "x.ckpt"), "--steps", "1")
    assert code == 2 and "spec hash" in err
    code, _, _ = run(capsys, "train", "--manifest", str(root / "manifest.txt"),
                     "--variant", "EffCRN23lite", "--resume", str(ckpt), "--out", str(root / "y.ckpt"),
                     "--steps", "1", "--batch-size", "2", "--seq-len", "30")
    assert code == 0


def test_train_bad_manifest_line(tmp_path, capsys):
    m = tmp_path / "m.txt"
    m.write_text("a.wav b.wav 0 train\nbroken line\n")
    code, _, err = run(capsys, "train", "--manifest", str(m), "--out", str(tmp_path / "o.ckpt"))
    assert code == 1 and ":2:" in err


def test_enhance_overfit_model_improves_snr(trained, tmp_path, capsys):
    """A model overfit on tones in noise raises the SNR of such a mixture."""
    from effcrn.training.trainer import TrainConfig, train
    from effcrn.training.data import SegmentSet

    rng = np.random.default_rng(11)
    s = tone_utterance(rng, 16000)
    ex = mix_at_snr(s, rng.standard_normal(16000) * 0.1, 0.0)
    model = build_model("EffCRN23lite", seed=0)
    train(model, SegmentSet([ex], seq_len=60), None,
          TrainConfig(batch_size=1, seq_len=60, lr=1e-3, max_steps=40, max_epochs=100))
    save_checkpoint(model, tmp_path / "o.ckpt")
    write_wav(tmp_path / "y.wav", ex.mixture, fmt="float")
    code, _, _ = run(capsys, "enhance", "--model", str(tmp_path / "o.ckpt"),
                     "--in", str(tmp_path / "y.wav"), "--out", str(tmp_path / "e.wav"),
                     "--wav-format", "float")
    enhanced, _ = read_wav(tmp_path / "e.wav")
    assert code == 0
    assert delta_snr(ex.clean, ex.mixture, enhanced).delta > 0


def test_selftest_quick(capsys):
    code, out, _ = run(capsys, "selftest", "--quick")
    assert code == 0 and "FAIL" not in out and out.count("PASS") > 10


def test_selftest_reports_failure(monkeypatch, capsys):
    from effcrn.topology import accounting

    monkeypatch.setitem(accounting.PUBLISHED, "FCRN15", (875_000, 60_000_000))
    code, out, err = run(capsys, "selftest", "--quick")
    assert code == 1 and "FAIL  accounting:FCRN15" in out and "accounting:FCRN15" in err


def test_thread_env(monkeypatch, capsys):
    monkeypatch.setenv("EFFCRN_NUM_THREADS", "1")
    assert run(capsys, "analyze", "EffCRN23")[0] == 0
    monkeypatch.setenv("EFFCRN_NUM_THREADS", "zero")
    assert run(capsys, "analyze", "EffCRN23")[0] == 2


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "effcrn.cli", "analyze", "EffCRN23lite",
                          "--format", "json-lines"], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout.splitlines()[0])["variant"] == "EffCRN23lite"
