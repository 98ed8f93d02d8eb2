"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed
in the "acceptance criteria" section of the pytest summary."""

import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from effcrn.autodiff import Tensor, grad_check
from effcrn.dsp import FrameConfig, bound_mask, istft, stft
from effcrn.selftest import layer_grad_reports, model_grad_report
from effcrn.topology import (FCRN15, PUBLISHED, TABLE_VARIANTS, apply_variant, build_model,
                             complexity_row, count_params, describe_layers, ordering_violations,
                             variant_spec)
from effcrn.training import LossConfig, SegmentSet, TrainConfig, compressed_loss, evaluate_loss
from effcrn.training import mean_delta_snr, mix_at_snr, train
from effcrn.training.synth import synthetic_pairs

PARAM_TOL, DELTA_TOL, FLOP_TOL = 0.10, 0.05, 0.20


def test_c1_parameter_accounting(acceptance):
    rows = [complexity_row(v) for v in TABLE_VARIANTS]
    worst = max(rows, key=lambda r: abs(r.params_deviation))
    delta = count_params("FCRN15") - count_params("FCRN15-C")
    delta_dev = delta / (PUBLISHED["FCRN15"][0] - PUBLISHED["FCRN15-C"][0]) - 1
    bad_order = [v for v in ordering_violations(rows) if v.startswith("params")]
    ok = (abs(worst.params_deviation) <= PARAM_TOL and abs(delta_dev) <= DELTA_TOL
          and not bad_order)
    acceptance("C1 parameter accounting", ok,
               f"worst {worst.variant} {worst.params_deviation:+.2%} (tol 10%), "
               f"-C delta {delta} ({delta_dev:+.2%}, tol 5%), order violations {len(bad_order)}")
    assert ok


def test_c2_flop_accounting(acceptance):
    rows = [complexity_row(v) for v in TABLE_VARIANTS]
    worst = max(rows, key=lambda r: abs(r.flops_deviation))
    bad_order = [v for v in ordering_violations(rows) if v.startswith("flops")]
    ok = abs(worst.flops_deviation) <= FLOP_TOL and not bad_order
    acceptance("C2 FLOP accounting", ok,
               f"worst {worst.variant} {worst.flops_deviation:+.2%} (tol 20%), "
               f"order violations {len(bad_order)}")
    assert ok


def test_c3_mask_bounding(acceptance):
    rng = np.random.default_rng(3)
    n = 100_000
    mags = 10.0 ** rng.uniform(-12, 7, n)
    mags[:3] = (0.0, 1e-9, 1e6)
    phase = rng.uniform(-np.pi, np.pi, n)
    g = np.stack([mags * np.cos(phase), mags * np.sin(phase)], axis=-1)
    out = bound_mask(g).data
    m = np.hypot(out[:, 0], out[:, 1])
    live = (mags > 0) & (m > 0)
    dphi = np.angle(np.exp(1j * (np.arctan2(out[live, 1], out[live, 0]) - phase[live])))
    finite = bool(np.all(np.isfinite(out)))
    ok = finite and m.max() <= 1.0 and np.abs(dphi).max() <= 1e-6 and np.all(out[0] == 0)
    acceptance("C3 mask bounding", ok,
               f"max |G'| {m.max():.17g}, max phase err {np.abs(dphi).max():.1e} rad, "
               f"finite {finite}")
    assert ok


def test_c4_stft_roundtrip(acceptance):
    cfg = FrameConfig()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(5):
        x = rng.standard_normal(3 * cfg.sample_rate)
        y = istft(stft(x, cfg), cfg, length=x.size)
        inner = slice(cfg.warmup, x.size - cfg.warmup)
        worst = max(worst, np.linalg.norm(y[inner] - x[inner]) / np.linalg.norm(x[inner]))
    ok = worst <= 1e-6
    acceptance("C4 STFT round trip", ok, f"max relative error {worst:.1e} (tol 1e-6)")
    assert ok


def test_c5_gradients(acceptance):
    layers = layer_grad_reports(seed=5)
    layer_worst = max((max(r.values()), k) for k, r in layers.items())
    models, kinks = {}, {}
    for v in ("FCRN15", "EffCRN23"):
        skipped: dict[str, int] = {}
        models[v] = max(model_grad_report(v, frames=5, samples=2, seed=5, skipped=skipped).values())
        kinks[v] = sum(skipped.values())
    rng = np.random.default_rng(5)
    est = rng.standard_normal((2, 257, 2, 2))
    est[np.hypot(est[..., 0], est[..., 1]) < 1e-3] = 1e-2
    e = Tensor(est, requires_grad=True)
    ref = rng.standard_normal((2, 257, 2, 2))
    loss_err = grad_check(lambda: compressed_loss(e, ref, LossConfig()), [e], samples=100)
    ok = layer_worst[0] <= 1e-3 and max(models.values()) <= 5e-3 and loss_err <= 1e-3
    acceptance("C5 gradient correctness", ok,
               f"layers max {layer_worst[0]:.1e} ({layer_worst[1]}), "
               + ", ".join(f"{k} {v:.1e} ({kinks[k]} kink coords redrawn)"
                           for k, v in models.items())
               + f", loss {loss_err:.1e}")
    assert ok


def test_c6_streaming_equivalence(acceptance):
    rng = np.random.default_rng(6)
    errs = {}
    for variant in ("FCRN15", "EffCRN23lite"):
        model = build_model(variant, seed=6)
        x = rng.standard_normal((1, 257, 100, 2)).astype(np.float32)
        full, _ = model.forward(x)
        state, frames = model.init_state(1), []
        for t in range(100):
            m, state = model.forward_frame(x[:, :, t : t + 1], state)
            frames.append(m.data)
        step = np.concatenate(frames, axis=2)
        errs[variant] = float(np.linalg.norm(step - full.data) / np.linalg.norm(full.data))
    ok = max(errs.values()) <= 1e-5
    acceptance("C6 streaming equivalence", ok,
               ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + " (tol 1e-5)")
    assert ok


@pytest.mark.slow
def test_c7_overfit_sanity(acceptance):
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        # 10 utterances of 103 frames -> one 100-frame segment each
        examples = [mix_at_snr(s, d, snr, -26.0) for s, d, snr in synthetic_pairs(10, 26_400, 7)]
        data = SegmentSet(examples, seq_len=100)
        model = build_model("EffCRN23lite", seed=0)
        before = evaluate_loss(model, data)
        cfg = TrainConfig(batch_size=5, lr=1e-3, max_steps=200, max_epochs=10_000,
                          patience=10_000, stop_patience=10_000, seed=7, val_snr_utterances=0)
        result = train(model, data, None, cfg)
        after = evaluate_loss(model, data)
        dsnr = mean_delta_snr(model, examples)
    minutes = (time.perf_counter() - t0) / 60
    reduction = 1 - after / before
    ok = result.steps == 200 and reduction >= 0.80 and dsnr > 3.0 and minutes <= 15
    acceptance("C7 overfit sanity", ok,
               f"loss {before:.4f} -> {after:.4f} ({reduction:.1%}, need 80%), "
               f"mean dSNR {dsnr:+.2f} dB (need >3), {minutes:.1f} min (limit 15), "
               f"{result.steps} steps")
    assert ok


def test_c8_variant_composition(acceptance):
    composed = apply_variant(FCRN15, {"⊕D", "⊕P", "⊕F", "⊖C", "⊕G"})
    same = describe_layers(composed) == build_model("EffCRN23").layers
    ok = same and composed.structure() == variant_spec("EffCRN23").structure()
    acceptance("C8 variant composition", ok, f"layer tables equal: {same}")
    assert ok


def test_c9_excluded(acceptance):
    acceptance("C9 quality metrics", True,
               "excluded: PESQ/DNSMOS/absolute dSNR need licensed corpora and 105 h training")
