"""Layer table derived from a :class:`ModelSpec`, with closed-form costs.

FLOP convention (per streaming frame): one multiply-accumulate is 2 FLOPs,
every bias add, activation, gate product or skip add is 1 FLOP per element.
Recurrent cells are counted for a single time step.  Transposed convolutions
are counted over their non-zero input positions only.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..exceptions import BuildError
from .spec import ModelSpec, plan_padding

WEIGHTED_KINDS = ("conv", "deconv", "clstm", "gru", "output")


@dataclass(frozen=True)
class LayerInfo:
    name: str
    kind: str  # conv | deconv | depthwise | clstm | gru | output
    c_in: int
    c_out: int
    kernel: int
    stride: int
    f_in: int
    f_out: int
    activation: str
    params: int
    flops: int

    def to_dict(self) -> dict:
        return asdict(self)


def _conv(name, c_in, c_out, n, stride, f_in, act, kind="conv"):
    f_out = -(-f_in // stride)
    params = n * c_in * c_out + c_out
    flops = 2 * f_out * n * c_in * c_out + f_out * c_out
    if act != "linear":
        flops += f_out * c_out
    return LayerInfo(name, kind, c_in, c_out, n, stride, f_in, f_out, act, params, flops)


def _deconv(name, c_in, c_out, n, stride, f_in, act):
    f_out = f_in * stride
    params = n * c_in * c_out + c_out
    flops = 2 * f_in * n * c_in * c_out + 2 * f_out * c_out
    return LayerInfo(name, "deconv", c_in, c_out, n, stride, f_in, f_out, act, params, flops)


def _depthwise(name, c, f):
    # MAC per element plus the add into the decoder path
    return LayerInfo(name, "depthwise", c, c, 1, 1, f, f, "linear", 2 * c, 3 * f * c)


def _clstm(name, c_in, hidden, n, f):
    params = 4 * n * (c_in + hidden) * hidden + 4 * hidden
    # gate bias 4, input+recurrent add 4, 3 sigmoid + 2 tanh, 4 products/sums
    flops = 2 * f * n * (c_in + hidden) * 4 * hidden + 17 * f * hidden
    return LayerInfo(name, "clstm", c_in, hidden, n, 1, f, f, "tanh/sigmoid", params, flops)


def _gru(name, n_in, hidden, f):
    params = 3 * ((n_in + hidden) * hidden + hidden)
    flops = 2 * 3 * (n_in + hidden) * hidden + 13 * hidden
    return LayerInfo(name, "gru", n_in, hidden, 1, 1, f, f, "tanh/sigmoid", params, flops)


def describe_layers(spec: ModelSpec) -> list[LayerInfo]:
    """Ordered layer table: encoder, bottleneck, decoder (with skips), output."""
    plan = plan_padding(spec.input_bins, spec.blocks, spec.pad_mode)
    act, n, s = "leaky_relu", spec.kernel, spec.stride
    layers: list[LayerInfo] = []
    c, taps = spec.c_in, []
    for i, f in enumerate(plan.sizes, start=1):
        width = i * spec.filters
        layers.append(_conv(f"enc{i}.conv", c, width, n, 1, f, act))
        taps.append((f, width))
        layers.append(_conv(f"enc{i}.down", width, width, n, s, f, act))
        c = width
    f = plan.bottleneck
    for k, (kind, width) in enumerate(spec.bottleneck, start=1):
        if kind == "clstm":
            layers.append(_clstm(f"clstm{k}", c, width, n, f))
            c = width
        elif kind == "gru":
            if width % f:
                raise BuildError(f"GRU width {width} not divisible by bottleneck size {f}")
            layers.append(_gru(f"gru{k}", f * c, width, f))
            c = width // f
        else:
            raise BuildError(f"unknown recurrent cell {kind!r}")
    for i in range(spec.blocks, 0, -1):
        f_skip, width = taps[i - 1]
        layers.append(_deconv(f"dec{i}.up", c, width, n, s, f, act))
        layers.append(_depthwise(f"dec{i}.skip", width, f_skip))
        layers.append(_conv(f"dec{i}.conv", width, width, n, 1, f_skip, act))
        f = f_skip - plan.crops[i - 1]
        c = width
    layers.append(_conv("output", c, spec.c_out, n, 1, f, "linear", kind="output"))
    if f != spec.input_bins:
        raise BuildError(f"decoder ends at {f} bins, expected {spec.input_bins}")
    return layers


def weighted_depth(layers: list[LayerInfo]) -> int:
    return sum(1 for layer in layers if layer.kind in WEIGHTED_KINDS)


def table_params(spec: ModelSpec) -> int:
    return sum(layer.params for layer in describe_layers(spec))


def table_flops(spec: ModelSpec) -> int:
    return sum(layer.flops for layer in describe_layers(spec))
