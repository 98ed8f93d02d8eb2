"""Executable layer graph for a :class:`ModelSpec`."""

from __future__ import annotations

import uuid

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import DEFAULT_DTYPE, Parameter, Tensor, as_tensor
from ..exceptions import ShapeError, UsageError
from ..recurrent import ConvLSTMCell, GRUCell, RecurrentState, glorot_uniform
from .layers import LayerInfo, describe_layers
from .spec import ModelSpec, plan_padding, variant_spec


class EnhancementModel:
    """Encoder / recurrent bottleneck / decoder network predicting a complex mask.

    Inputs are noisy spectra shaped ``(B, bins, T, 2)`` holding real and
    imaginary parts (``bins`` = 257, or ``ModelSpec.input_bins``).  The
    output is the raw, unbounded mask with the same layout and 257 bins.
    """

    def __init__(self, spec: ModelSpec, seed: int = 0, dtype=DEFAULT_DTYPE):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.layers: list[LayerInfo] = describe_layers(spec)
        self.plan = plan_padding(spec.input_bins, spec.blocks, spec.pad_mode)
        self._token = uuid.uuid4().hex
        rng = np.random.default_rng(seed)
        self.params: dict[str, Parameter] = {}
        self.cells: dict[str, ConvLSTMCell | GRUCell] = {}
        for layer in self.layers:
            self._init_layer(layer, rng)

    # -- construction -----------------------------------------------------

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Parameter(value.astype(self.dtype), name)

    def _init_layer(self, layer: LayerInfo, rng: np.random.Generator) -> None:
        n, ci, co = layer.kernel, layer.c_in, layer.c_out
        if layer.kind in ("conv", "output"):
            self._add(f"{layer.name}.kernel",
                      glorot_uniform(rng, (n, 1, ci, co), n * ci, n * co, np.float64))
            self._add(f"{layer.name}.bias", np.zeros(co))
        elif layer.kind == "deconv":
            self._add(f"{layer.name}.kernel",
                      glorot_uniform(rng, (n, 1, co, ci), n * ci, n * co, np.float64))
            self._add(f"{layer.name}.bias", np.zeros(co))
        elif layer.kind == "depthwise":
            self._add(f"{layer.name}.weight", np.ones(ci))
            self._add(f"{layer.name}.bias", np.zeros(ci))
        elif layer.kind == "clstm":
            cell = ConvLSTMCell(ci, co, n, name=layer.name, rng=rng, dtype=self.dtype)
            self.cells[layer.name] = cell
            for p in cell.parameters():
                self.params[p.name] = p
        elif layer.kind == "gru":
            cell = GRUCell(ci, co, name=layer.name, rng=rng, dtype=self.dtype)
            self.cells[layer.name] = cell
            for p in cell.parameters():
                self.params[p.name] = p

    # -- introspection ----------------------------------------------------

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise ShapeError(f"parameter name mismatch: {sorted(missing)[:5]}")
        for k, p in self.params.items():
            p.assign(state[k])

    def astype(self, dtype) -> "EnhancementModel":
        """Copy with parameters cast to ``dtype``."""
        other = EnhancementModel.__new__(EnhancementModel)
        other.__dict__.update(self.__dict__)
        other.dtype = np.dtype(dtype)
        other._token = uuid.uuid4().hex
        other.params, other.cells = {}, {}
        for layer in self.layers:
            other._init_layer(layer, np.random.default_rng(0))
        other.load_state_dict({k: v.astype(dtype) for k, v in self.state_dict().items()})
        return other

    # -- state ------------------------------------------------------------

    def init_state(self, batch: int = 1) -> RecurrentState:
        f = self.plan.bottleneck
        cells = []
        for layer in self.layers:
            cell = self.cells.get(layer.name)
            if isinstance(cell, ConvLSTMCell):
                cells.append(cell.zero_state(batch, f, self.dtype))
            elif isinstance(cell, GRUCell):
                cells.append(cell.zero_state(batch, self.dtype))
        return RecurrentState(self._token, cells, batch)

    # -- forward ----------------------------------------------------------

    def _prepare_input(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim == 3:
            x = ops.reshape(x, (1,) + x.shape)
        if x.ndim != 4 or x.shape[-1] != self.spec.c_in:
            raise ShapeError(f"expected (B, bins, T, {self.spec.c_in}) input, got {x.shape}")
        bins = x.shape[1]
        if bins == self.spec.bins:
            x = ops.pad(x, 1, 0, self.spec.external_pad)
        elif bins != self.spec.input_bins:
            raise ShapeError(
                f"expected {self.spec.bins} or {self.spec.input_bins} bins, got {bins}")
        if x.dtype != self.dtype:
            x = Tensor(x.data.astype(self.dtype)) if not x.requires_grad else x
        return x

    def forward(self, noisy, state: RecurrentState | None = None):
        """Run a batch of sequences; returns ``(mask, final_state)``.

        A fresh zero state is used when ``state`` is None.
        """
        squeeze = as_tensor(noisy).ndim == 3
        x = self._prepare_input(noisy)
        batch = x.shape[0]
        if state is None:
            state = self.init_state(batch)
        state.check_owner(self._token)
        if state.batch != batch:
            raise UsageError(f"state was created for batch {state.batch}, input has {batch}")
        spec, p, slope = self.spec, self.params, self.spec.leaky_slope
        taps = []
        for i in range(1, spec.blocks + 1):
            x = ops.pad(x, 1, 0, self.plan.pads[i - 1])
            x = ops.leaky_relu(ops.conv2d(x, p[f"enc{i}.conv.kernel"], p[f"enc{i}.conv.bias"]), slope)
            taps.append(x)
            x = ops.leaky_relu(
                ops.conv2d(x, p[f"enc{i}.down.kernel"], p[f"enc{i}.down.bias"], spec.stride), slope)
        new_cells = []
        k = 0
        for layer in self.layers:
            cell = self.cells.get(layer.name)
            if cell is None:
                continue
            if isinstance(cell, ConvLSTMCell):
                x, st = cell.sequence(x, state.cells[k])
            else:
                b, f, t, c = x.shape
                flat = ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (b, t, f * c))
                y, st = cell.sequence(flat, state.cells[k])
                x = ops.transpose(ops.reshape(y, (b, t, f, cell.hidden // f)), (0, 2, 1, 3))
            new_cells.append(st)
            k += 1
        for i in range(spec.blocks, 0, -1):
            u = ops.leaky_relu(
                ops.conv2d_transpose(x, p[f"dec{i}.up.kernel"], p[f"dec{i}.up.bias"], spec.stride),
                slope)
            u = ops.add(u, ops.depthwise_1x1(taps[i - 1], p[f"dec{i}.skip.weight"],
                                             p[f"dec{i}.skip.bias"]))
            x = ops.leaky_relu(ops.conv2d(u, p[f"dec{i}.conv.kernel"], p[f"dec{i}.conv.bias"]), slope)
            crop = self.plan.crops[i - 1]
            if crop:
                x = ops.take(x, 1, 0, x.shape[1] - crop)
        mask = ops.conv2d(x, p["output.kernel"], p["output.bias"])
        mask = ops.take(mask, 1, 0, spec.bins)
        if squeeze:
            mask = ops.reshape(mask, mask.shape[1:])
        return mask, RecurrentState(self._token, new_cells, batch)

    def forward_frame(self, frame, state: RecurrentState):
        """Single-frame streaming step; ``frame`` is ``(bins, 1, 2)`` or ``(B, bins, 1, 2)``."""
        f = as_tensor(frame)
        if f.shape[-2] != 1:
            raise ShapeError(f"forward_frame expects one time frame, got shape {f.shape}")
        return self.forward(f, state)

    __call__ = forward

    def __repr__(self) -> str:
        return f"EnhancementModel({self.spec.name}, params={self.n_params()})"

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())


def build_model(variant: str | ModelSpec = "EffCRN23", seed: int = 0, dtype=DEFAULT_DTYPE,
                **overrides) -> EnhancementModel:
    """Construct a model for a named variant (or an explicit spec)."""
    spec = variant if isinstance(variant, ModelSpec) else variant_spec(variant, **overrides)
    return EnhancementModel(spec, seed=seed, dtype=dtype)
