"""Built-in consistency checks run by ``effcrn selftest``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import ops
from .autodiff.gradcheck import grad_check_report
from .autodiff.tensor import Tensor
from .dsp import FrameConfig, bound_and_apply_mask, istft, stft
from .recurrent import ConvLSTMCell, GRUCell
from .topology import (ABLATION_PAIRS, TABLE_VARIANTS, build_model, complexity_row,
                       describe_layers, ordering_violations, plan_padding, variant_spec)
from .topology.accounting import PUBLISHED
from .training.loss import LossConfig, compressed_loss

GRAD_TOL = 5e-3
LAYER_GRAD_TOL = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _t(rng, *shape, grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=grad)


def layer_grad_reports(seed: int = 0) -> dict[str, dict[str, float]]:
    """Finite-difference reports for each layer type on small float64 inputs."""
    rng = np.random.default_rng(seed)
    out = {}
    x, k, b = _t(rng, 2, 9, 3, 3), _t(rng, 3, 1, 3, 4), _t(rng, 4)
    w = _t(rng, 2, 5, 3, 4)
    out["conv"] = grad_check_report(
        lambda: ops.sum(ops.mul(ops.conv2d(x, k, b, 2), w)), [x, k, b], names=["x", "kernel", "bias"])
    xd, kd, bd, wd = _t(rng, 2, 5, 3, 4), _t(rng, 3, 1, 3, 4), _t(rng, 3), _t(rng, 2, 10, 3, 3)
    out["deconv"] = grad_check_report(
        lambda: ops.sum(ops.mul(ops.conv2d_transpose(xd, kd, bd, 2), wd)), [xd, kd, bd],
        names=["x", "kernel", "bias"])
    xs, ws, bs = _t(rng, 2, 6, 3, 4), _t(rng, 4), _t(rng, 4)
    out["depthwise"] = grad_check_report(
        lambda: ops.sum(ops.mul(ops.depthwise_1x1(xs, ws, bs), ops.depthwise_1x1(xs, ws, bs))),
        [xs, ws, bs], names=["x", "weight", "bias"])
    xa = _t(rng, 3, 4)
    xa.data[np.abs(xa.data) < 0.05] += 0.1  # keep clear of the leaky kink
    for name, fn in (("leaky_relu", lambda: ops.leaky_relu(xa, 0.2)), ("tanh", lambda: ops.tanh(xa)),
                     ("sigmoid", lambda: ops.sigmoid(xa))):
        out[name] = grad_check_report(lambda fn=fn: ops.sum(ops.mul(fn(), fn())), [xa], names=["x"])
    cell = ConvLSTMCell(3, 4, 3, rng=rng, dtype=np.float64)
    xc, wc = _t(rng, 1, 5, 4, 3), _t(rng, 1, 5, 4, 4)
    h0 = cell.zero_state(1, 5, np.float64)
    out["clstm"] = grad_check_report(
        lambda: ops.sum(ops.mul(cell.sequence(xc, h0)[0], wc)), [xc] + cell.parameters(),
        names=["x", "input_kernel", "recurrent_kernel", "bias"])
    gru = GRUCell(5, 4, rng=rng, dtype=np.float64)
    xg, wg = _t(rng, 2, 10, 5), _t(rng, 2, 10, 4)
    out["gru"] = grad_check_report(
        lambda: ops.sum(ops.mul(gru.sequence(xg, gru.zero_state(2, np.float64))[0], wg)),
        [xg] + gru.parameters(), names=["x", "input_weights", "recurrent_weights", "bias"])
    gm, ym = _t(rng, 4, 3, 2), rng.standard_normal((4, 3, 2))
    out["bounded_mask"] = grad_check_report(
        lambda: ops.sum(ops.mul(bound_and_apply_mask(gm, ym), Tensor(ym))), [gm], names=["mask"])
    est, ref = _t(rng, 2, 6, 2, 2), rng.standard_normal((2, 6, 2, 2))
    out["loss"] = grad_check_report(lambda: compressed_loss(est, ref), [est], names=["estimate"])
    return out


def model_grad_report(variant: str, frames: int = 5, samples: int = 2, seed: int = 0,
                      tensors: int | None = None,
                      skipped: dict[str, int] | None = None) -> dict[str, float]:
    """End-to-end check: float64 model, bounded mask, compressed loss."""
    rng = np.random.default_rng(seed)
    model = build_model(variant, seed=seed, dtype=np.float64)
    # zero biases leave pre-activations of exactly 0 over padded bins, i.e. on
    # the leaky kink where central differences average both slopes
    for name, p in model.params.items():
        if name.endswith(".bias"):
            p.assign(p.data + 0.1 * rng.standard_normal(p.shape))
    noisy = rng.standard_normal((1, 257, frames, 2))
    clean = rng.standard_normal((1, 257, frames, 2))
    params = model.parameters()
    if tensors is not None:
        params = [params[i] for i in rng.choice(len(params), tensors, replace=False)]

    def fn():
        mask, _ = model.forward(noisy)
        return compressed_loss(bound_and_apply_mask(mask, noisy), clean, LossConfig())

    return grad_check_report(fn, params, samples=samples, rng=rng, floor=1e-6,
                             kink_tol=1e-3, skipped=skipped)


def adjoint_gap(seed: int = 0) -> float:
    """Relative gap of ``<conv(x), y> = <x, deconv(y)>`` for a strided same conv."""
    rng = np.random.default_rng(seed)
    k = rng.standard_normal((5, 1, 3, 4))
    x = rng.standard_normal((2, 12, 3, 3))
    y = rng.standard_normal((2, 6, 3, 4))
    lhs = np.sum(ops.conv2d(Tensor(x), Tensor(k), None, 2).data * y)
    rhs = np.sum(x * ops.conv2d_transpose(Tensor(y), Tensor(k), None, 2).data)
    return abs(lhs - rhs) / max(abs(lhs), 1e-12)


def stft_roundtrip_error(seconds: float = 3.0, seed: int = 0) -> float:
    cfg = FrameConfig()
    x = np.random.default_rng(seed).standard_normal(int(seconds * cfg.sample_rate))
    rec = istft(stft(x, cfg), cfg, length=x.size)
    edge = cfg.warmup
    inner = slice(edge, x.size - edge)
    return float(np.linalg.norm(rec[inner] - x[inner]) / np.linalg.norm(x[inner]))


def _pad_plans() -> str | None:
    for name in TABLE_VARIANTS:
        spec = variant_spec(name)
        plan = plan_padding(spec.input_bins, spec.blocks, spec.pad_mode)
        layers = describe_layers(spec)
        enc = [l.f_in for l in layers if l.name.endswith(".conv") and l.name.startswith("enc")]
        dec = {int(l.name[3:l.name.index(".")]): l for l in layers if l.name.startswith("dec") and
               l.name.endswith(".conv")}
        for i, f in enumerate(enc, start=1):
            if dec[i].f_in - plan.crops[i - 1] != f - plan.pads[i - 1]:
                return f"{name}: block {i} decoder size does not mirror the encoder"
    return None


def run_checks(progress: Callable[[CheckResult], None] | None = None,
               full_models: bool = True) -> list[CheckResult]:
    results: list[CheckResult] = []

    def add(name, passed, detail):
        r = CheckResult(name, bool(passed), detail)
        results.append(r)
        if progress:
            progress(r)

    for layer, report in layer_grad_reports().items():
        worst = max(report, key=report.get)
        add(f"grad:{layer}", report[worst] <= LAYER_GRAD_TOL,
            f"max rel err {report[worst]:.2e} ({worst})")
    if full_models:
        for variant in ("FCRN15", "EffCRN23"):
            report = model_grad_report(variant, tensors=8)
            worst = max(report, key=report.get)
            add(f"grad:{variant}", report[worst] <= GRAD_TOL,
                f"max rel err {report[worst]:.2e} ({worst})")
    gap = adjoint_gap()
    add("adjoint:conv/deconv", gap < 1e-10, f"relative gap {gap:.1e}")
    err = stft_roundtrip_error()
    add("stft:roundtrip", err < 1e-6, f"relative error {err:.1e}")
    bad = _pad_plans()
    add("pad-plans", bad is None, bad or f"{len(TABLE_VARIANTS)} variants consistent")
    rows = [complexity_row(v) for v in TABLE_VARIANTS]
    for row in rows:
        add(f"accounting:{row.variant}", row.within_tolerance(),
            f"params {row.params_deviation:+.1%}, flops {row.flops_deviation:+.1%}")
    violations = ordering_violations(rows)
    add("accounting:orderings", not violations, "; ".join(violations) or "all orderings hold")
    by = {r.variant: r for r in rows}
    for a, b in ABLATION_PAIRS[:1]:
        ours = by[a].params - by[b].params
        pub = PUBLISHED[a][0] - PUBLISHED[b][0]
        add(f"accounting:delta {a}->{b}", abs(ours / pub - 1) <= 0.05,
            f"{ours} vs {pub} ({ours / pub - 1:+.1%})")
    return results
