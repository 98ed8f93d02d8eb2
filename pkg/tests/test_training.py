import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from effcrn.autodiff import Parameter, Tensor, grad_check
from effcrn.exceptions import ConfigError, DataError, ShapeError, TrainingError, UsageError
from effcrn.topology import build_model
from effcrn.training import (Adam, LossConfig, PlateauSchedule, SegmentSet, TrainConfig,
                             active_speech_level, compressed_loss, delta_snr, mix_at_snr,
                             parse_manifest, train)
from effcrn.training.data import datasets_from_manifest
from effcrn.training.synth import synthetic_pairs, write_corpus


# -- loss --------------------------------------------------------------------

def test_loss_zero_for_perfect_estimate(rng):
    s = rng.standard_normal((2, 257, 3, 2))
    assert compressed_loss(s, s).item() == 0.0


def test_loss_unit_magnitudes_against_zero():
    est = np.zeros((1, 257, 2, 2))
    est[..., 0] = 1.0
    assert compressed_loss(est, np.zeros_like(est), LossConfig(alpha=0.0)).item() == pytest.approx(1.0)


def test_loss_bruteforce(rng):
    est, ref = rng.standard_normal((2, 2, 5, 3, 2))
    c, a = 0.3, 0.3
    ze, zr = est[..., 0] + 1j * est[..., 1], ref[..., 0] + 1j * ref[..., 1]
    pe, pr = np.abs(ze) ** c, np.abs(zr) ** c
    want = np.mean((1 - a) * (pe - pr) ** 2 + a * np.abs(pe * np.exp(1j * np.angle(ze))
                                                         - pr * np.exp(1j * np.angle(zr))) ** 2)
    assert compressed_loss(est, ref).item() == pytest.approx(want, rel=1e-10)


def test_loss_gradient(rng):
    est = rng.standard_normal((2, 257, 2, 2))
    est[np.hypot(est[..., 0], est[..., 1]) < 1e-3] = 1e-2
    e = Tensor(est, requires_grad=True)
    ref = rng.standard_normal((2, 257, 2, 2))
    assert grad_check(lambda: compressed_loss(e, ref), [e], samples=60) < 1e-3


@given(seed=st.integers(0, 2**16), zero=st.booleans())
def test_loss_nonnegative_finite_grad(seed, zero):
    from effcrn.autodiff import Tape
    rng = np.random.default_rng(seed)
    est = rng.standard_normal((1, 4, 2, 2))
    if zero:
        est[0, :2] = 0.0
    e = Tensor(est, requires_grad=True)
    with Tape() as tape:
        loss = compressed_loss(e, rng.standard_normal((1, 4, 2, 2)))
    assert loss.item() >= 0
    tape.backward(loss)
    assert np.all(np.isfinite(e.grad))


def test_loss_config_and_shapes():
    with pytest.raises(ConfigError):
        LossConfig(compression=0.0)
    with pytest.raises(ConfigError):
        LossConfig(alpha=1.5)
    with pytest.raises(UsageError):
        compressed_loss(np.zeros((2, 3, 2)), np.zeros((2, 4, 2)))


# -- level meter and mixing --------------------------------------------------

def _square(n=64000, amp=1.0):
    return amp * np.sign(np.sin(2 * np.pi * 100 * (np.arange(n) + 0.5) / 16000))


def test_full_scale_square_is_0_dbov():
    assert active_speech_level(_square()) == pytest.approx(0.0, abs=0.1)


def test_half_amplitude_is_6_02_db_lower(rng):
    x = rng.standard_normal(32000) * 0.1
    assert active_speech_level(x) - active_speech_level(0.5 * x) == pytest.approx(6.02, abs=0.01)


def test_burst_active_level_vs_labels(rng):
    x = 0.05 * rng.standard_normal(16000 * 16)
    label = (np.arange(x.size) // (4 * 16000)) % 2 == 0
    x[~label] = 0.0
    truth = 10 * np.log10(np.mean(x[label] ** 2))
    full = 10 * np.log10(np.mean(x**2))
    assert active_speech_level(x) == pytest.approx(truth, abs=0.5)
    assert truth == pytest.approx(full + 3.01, abs=0.05)


def test_silent_inputs_rejected():
    with pytest.raises(DataError):
        active_speech_level(np.zeros(1000))
    with pytest.raises(DataError):
        mix_at_snr(np.ones(1000), np.zeros(100), 0.0)


@pytest.mark.parametrize("snr", [0.0, 5.0, 10.0, -3.0])
def test_mix_snr_and_level(snr, rng):
    s, d, _ = synthetic_pairs(1, 20000, 3)[0]
    ex = mix_at_snr(s, d, snr)
    assert ex.measured_snr() == pytest.approx(snr, abs=0.1)
    assert active_speech_level(ex.clean) == pytest.approx(-26.0, abs=0.1)
    np.testing.assert_array_equal(ex.mixture, ex.clean + ex.noise)
    np.testing.assert_allclose(ex.speech_gain * s + ex.noise_gain * d, ex.mixture, atol=1e-15)


def test_coherent_mix_doubles(rng):
    s = rng.standard_normal(20000) * 0.1
    ex = mix_at_snr(s, s, 0.0)
    # gains agree up to the meter's 0.1 dB SNR tolerance (~1.2% in amplitude)
    np.testing.assert_allclose(ex.mixture, 2 * ex.clean, rtol=0.012)
    assert ex.noise_gain / ex.speech_gain == pytest.approx(1.0, abs=0.012)


def test_noise_loops_and_crops(rng):
    s = rng.standard_normal(5000) * 0.1
    d = rng.standard_normal(700)
    ex = mix_at_snr(s, d, 5.0, noise_offset=100)
    assert ex.noise.size == 5000
    np.testing.assert_allclose(ex.noise[:600] / ex.noise_gain, d[100:])
    np.testing.assert_allclose(ex.noise[600:1300] / ex.noise_gain, d)


# -- delta SNR -----------------------------------------------------------------

def test_delta_snr_examples(rng):
    s = rng.standard_normal(16000) * 0.1
    y = s + 0.05 * rng.standard_normal(16000)
    assert delta_snr(s, y, y).delta == pytest.approx(0.0, abs=1e-12)
    assert delta_snr(s, y, s + 0.5 * (y - s)).delta == pytest.approx(6.0206, abs=1e-3)
    perfect = delta_snr(s, y, s)
    assert perfect.clamped and perfect.snr_out == 100.0
    with pytest.raises(ShapeError):
        delta_snr(s, y, s[:-1])


# -- optimizer and schedule ----------------------------------------------------

def test_adam_zero_gradient_keeps_params(rng):
    p = Parameter(rng.standard_normal(5))
    before = p.data.copy()
    opt = Adam([p], lr=1e-3)
    for _ in range(3):
        opt.step()
    np.testing.assert_array_equal(p.data, before)


def test_adam_first_step_is_lr_times_sign():
    p = Parameter(np.array([1.0, -2.0]), name="p")
    p.grad = np.array([0.3, -5.0])
    Adam([p], lr=0.1).step()
    np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-6)


def test_adam_matches_reference(rng):
    p = Parameter(rng.standard_normal(4), name="p")
    x = p.data.copy()
    m = v = np.zeros(4)
    opt = Adam([p], lr=0.01)
    for t in range(1, 6):
        g = rng.standard_normal(4)
        p.grad = g.copy()
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x = x - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p.data, x, rtol=1e-10)


def test_plateau_decay_after_four():
    s = PlateauSchedule(lr=1e-4)
    s.update(1.0)
    for _ in range(3):
        s.update(1.0)
    assert s.lr == 1e-4
    s.update(1.0)
    assert s.lr == pytest.approx(6e-5)


def test_stop_after_ten_stagnant():
    s = PlateauSchedule(lr=1.0, min_lr=1e-12)
    s.update(1.0)
    stops = [s.update(2.0) for _ in range(10)]
    assert stops[-1] and not any(stops[:-1]) and s.reason == "stagnation"


def test_stop_on_lr_floor_and_max_epochs():
    s = PlateauSchedule(lr=1.5e-6, patience=1)
    s.update(1.0)
    assert s.update(1.0) and s.reason == "lr_below_min"
    s = PlateauSchedule(max_epochs=3)
    assert [s.update(1.0 / (i + 1)) for i in range(3)] == [False, False, True]
    with pytest.raises(ConfigError):
        PlateauSchedule(factor=1.0)


# -- data ----------------------------------------------------------------------

def test_manifest_parsing(tmp_path):
    m = tmp_path / "m.txt"
    m.write_text("# header\na.wav n.wav 5 train\n\nb.wav n.wav -2.5 val  # trailing\n")
    entries = parse_manifest(m)
    assert [e.split for e in entries] == ["train", "val"]
    assert entries[1].snr_db == -2.5 and entries[1].line == 4
    assert entries[0].clean == tmp_path / "a.wav"


@pytest.mark.parametrize("line", ["a.wav n.wav 5", "a.wav n.wav five train", "a.wav n.wav 5 dev"])
def test_manifest_error_names_line(tmp_path, line):
    m = tmp_path / "m.txt"
    m.write_text(f"a.wav n.wav 0 train\n{line}\n")
    with pytest.raises(DataError, match=r":2:"):
        parse_manifest(m)


def test_corpus_segments_and_determinism(tmp_path):
    manifest = write_corpus(tmp_path, n_train=3, n_val=1, seconds=1.0, seed=2)
    a = datasets_from_manifest(manifest, seq_len=20, seed=5)
    b = datasets_from_manifest(manifest, seq_len=20, seed=5, workers=3)
    assert set(a) == {"train", "val"}
    assert a["train"].noisy.shape == (3 * 3, 257, 20, 2)
    np.testing.assert_array_equal(a["train"].noisy, b["train"].noisy)


def test_short_utterance_padded():
    ex = [mix_at_snr(s, d, snr) for s, d, snr in synthetic_pairs(1, 4000, 0)]
    data = SegmentSet(ex, seq_len=50)
    assert len(data) == 1 and not np.any(data.noisy[0, :, 20:])


# -- trainer -------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_sets():
    ex = [mix_at_snr(s, d, snr) for s, d, snr in synthetic_pairs(4, 6000, 1)]
    return SegmentSet(ex[:3], seq_len=20), SegmentSet(ex[3:], seq_len=20)


def test_train_log_and_best_state(tiny_sets, tmp_path):
    tr, va = tiny_sets
    model = build_model("EffCRN23lite", seed=0)
    cfg = TrainConfig(batch_size=2, seq_len=20, lr=1e-3, max_epochs=3, val_snr_utterances=1)
    res = train(model, tr, va, cfg, log_path=tmp_path / "log.jsonl")
    lines = [json.loads(l) for l in (tmp_path / "log.jsonl").read_text().splitlines()]
    assert len(lines) == 3 == len(res.history)
    assert {"epoch", "train_loss", "val_loss", "lr", "val_delta_snr_db"} <= set(lines[0])
    assert res.best_val_loss == min(h["val_loss"] for h in res.history)
    assert res.steps == 6 and res.stop_reason == "max_epochs"


def test_train_deterministic(tiny_sets):
    tr, va = tiny_sets
    cfg = TrainConfig(batch_size=2, seq_len=20, lr=1e-3, max_epochs=1, seed=9)
    runs = [train(build_model("EffCRN23lite", seed=0), tr, va, cfg).history[0]["train_loss"]
            for _ in range(2)]
    assert runs[0] == pytest.approx(runs[1], rel=1e-6)


def test_train_errors(tiny_sets):
    tr, va = tiny_sets
    empty = SegmentSet([], seq_len=20)
    with pytest.raises(UsageError):
        train(build_model("EffCRN23lite"), empty, va, TrainConfig(seq_len=20))
    model = build_model("EffCRN23lite")
    model.params["output.bias"].data[:] = np.nan
    with pytest.raises(TrainingError, match="non-finite"):
        train(model, tr, va, TrainConfig(seq_len=20, batch_size=2, max_epochs=1))
    with pytest.raises(ConfigError):
        TrainConfig(decay=1.2)
