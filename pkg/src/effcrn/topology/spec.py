"""Model descriptions, topology changes and the frequency pad planner.

A :class:`ModelSpec` is a pure value.  Everything else (the layer table, the
parameter store, FLOP and parameter counts) is derived from it.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, replace

from ..exceptions import BuildError, ConfigError

N_BINS = 257  # K/2 + 1 for K = 512
IN_NETWORK_BINS = 260
STRIDE = 2

CHANGE_ORDER = ("+F", "+D", "+P", "-C", "+G")
SUPPORTED_CHANGES = (
    frozenset(),
    frozenset({"-C"}),
    frozenset({"-C", "+G"}),
    frozenset({"+D"}),
    frozenset({"+D", "+P"}),
    frozenset({"+F"}),
    frozenset({"+F", "+D", "+P"}),
    frozenset({"+F", "+D", "+P", "-C", "+G"}),
)


@dataclass(frozen=True)
class ModelSpec:
    """Hyperparameters of one topology instance.

    ``bottleneck`` lists the recurrent cells in order as ``(kind, width)``
    pairs, kind being ``"clstm"`` (width = hidden channels) or ``"gru"``
    (width = hidden size of the flattened bottleneck).
    """

    name: str
    filters: int
    kernel: int
    blocks: int
    input_bins: int
    pad_mode: str = "external"
    bottleneck: tuple[tuple[str, int], ...] = ()
    leaky_slope: float = 0.2
    bins: int = N_BINS
    c_in: int = 2
    c_out: int = 2
    stride: int = STRIDE

    @property
    def external_pad(self) -> int:
        return self.input_bins - self.bins

    @property
    def depth(self) -> int:
        """Weighted layers: four convs per block, recurrent cells, output conv."""
        return 4 * self.blocks + len(self.bottleneck) + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bottleneck"] = [list(b) for b in self.bottleneck]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["bottleneck"] = tuple((str(k), int(w)) for k, w in d.get("bottleneck", ()))
        return cls(**d)

    def structure(self) -> dict:
        """Everything but the display name."""
        d = self.to_dict()
        del d["name"]
        return d

    def hash(self) -> str:
        blob = json.dumps(self.structure(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class PadPlan:
    """Per-stage pad bits for the encoder and the mirrored decoder crops.

    ``sizes[i]`` is the frequency size entering block ``i`` after padding;
    ``bottleneck`` is the size after the last downsampling.
    """

    pads: tuple[int, ...]
    sizes: tuple[int, ...]
    bottleneck: int
    crops: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.crops:
            object.__setattr__(self, "crops", tuple(self.pads))


def plan_padding(m_raw: int, stages: int, mode: str = "external") -> PadPlan:
    """Pad plan for ``stages`` stride-2 downsamplings of ``m_raw`` bins.

    ``external`` mode requires every stage input to be even already.
    ``in-network`` mode pads one zero bin before any odd-sized stage.
    """
    if m_raw < 1 or stages < 0:
        raise ConfigError(f"invalid pad plan request ({m_raw}, {stages})")
    if mode not in ("external", "in-network"):
        raise ConfigError(f"unknown pad mode {mode!r}")
    size = m_raw
    pads, sizes = [], []
    for stage in range(stages):
        odd = size % 2
        if odd and mode == "external":
            raise ConfigError(
                f"{m_raw} bins cannot be halved {stages} times without padding "
                f"(odd size {size} before stage {stage + 1})")
        if size < 2 and not odd:
            raise ConfigError(f"{m_raw} bins too small for {stages} downsampling stages")
        pads.append(int(odd))
        size += odd
        sizes.append(size)
        size //= 2
    return PadPlan(tuple(pads), tuple(sizes), size)


def _round_up(n: int, multiple: int) -> int:
    return -(-n // multiple) * multiple


FCRN15 = ModelSpec(
    name="FCRN15", filters=32, kernel=12, blocks=3, input_bins=264,
    pad_mode="external", bottleneck=(("clstm", 32), ("clstm", 32)),
)


def bottleneck_size(spec: ModelSpec) -> int:
    return plan_padding(spec.input_bins, spec.blocks, spec.pad_mode).bottleneck


def normalize_changes(changes) -> frozenset[str]:
    if isinstance(changes, str):
        changes = _parse_changes(changes)
    out = set()
    for ch in changes:
        ch = ch.replace("⊕", "+").replace("⊖", "-").strip().upper()
        if ch not in CHANGE_ORDER:
            raise ConfigError(f"unknown topology change {ch!r}; expected one of {CHANGE_ORDER}")
        out.add(ch)
    return frozenset(out)


def _parse_changes(text: str) -> list[str]:
    text = text.replace("⊕", "+").replace("⊖", "-").replace(" ", "")
    if not re.fullmatch(r"([+-][A-Za-z])*", text):
        raise ConfigError(f"cannot parse change list {text!r}")
    return re.findall(r"[+-][A-Za-z]", text)


def change_label(changes) -> str:
    changes = normalize_changes(changes)
    return "".join(c for c in CHANGE_ORDER if c in changes)


def apply_variant(base: ModelSpec, changes) -> ModelSpec:
    """Apply a set of topology changes to ``base``.

    ``+F`` fewer/smaller filters (27, kernel 4); ``+D`` five blocks;
    ``+P`` in-network padding with 260 input bins; ``-C`` drop the second
    CLSTM; ``+G`` add a GRU sized to the flattened bottleneck.
    """
    changes = normalize_changes(changes)
    if changes not in SUPPORTED_CHANGES:
        raise ConfigError(f"unsupported change combination {change_label(changes) or '{}'}")
    if not changes:
        return base
    filters, kernel = (27, 4) if "+F" in changes else (base.filters, base.kernel)
    blocks = 5 if "+D" in changes else base.blocks
    if "+P" in changes:
        pad_mode, bins_in = "in-network", IN_NETWORK_BINS
    else:
        pad_mode = base.pad_mode
        bins_in = base.input_bins
        if pad_mode == "external":
            bins_in = max(_round_up(base.bins, STRIDE ** blocks), base.input_bins)
    clstms = [("clstm", filters) for kind, _ in base.bottleneck if kind == "clstm"]
    if "-C" in changes:
        clstms = clstms[:1]
    spec = replace(
        base,
        name=base.name + change_label(changes),
        filters=filters, kernel=kernel, blocks=blocks,
        input_bins=bins_in, pad_mode=pad_mode, bottleneck=tuple(clstms),
    )
    if "+G" in changes:
        spec = replace(spec, bottleneck=spec.bottleneck + (("gru", default_gru_width(spec)),))
    return spec


def default_gru_width(spec: ModelSpec) -> int:
    """Flattened bottleneck length (frequency x channels after the recurrent cells)."""
    channels = spec.blocks * spec.filters
    for kind, width in spec.bottleneck:
        channels = width if kind == "clstm" else width // bottleneck_size(spec)
    return bottleneck_size(spec) * channels


BASES = {"FCRN15": FCRN15}
ALIASES = {
    "EffCRN23": ("FCRN15", "+F+D+P-C+G", {}),
    "EffCRN23lite": ("FCRN15", "+F+D+P-C+G", {"filters": 17}),
}

TABLE_VARIANTS = (
    "FCRN15", "EffCRN23", "EffCRN23lite", "FCRN15-C", "FCRN15-C+G",
    "FCRN15+D", "FCRN15+D+P", "FCRN15+F", "FCRN15+F+D+P",
)

OVERRIDABLE = ("clstm_width", "gru_width", "leaky_slope")


def canonical_name(variant: str) -> str:
    text = variant.replace("⊕", "+").replace("⊖", "-").replace(" ", "")
    for name in sorted(list(BASES) + list(ALIASES), key=len, reverse=True):
        if text.lower().startswith(name.lower()):
            rest = text[len(name):]
            if rest and name in ALIASES:
                raise ConfigError(f"changes cannot be applied to {name}: {variant!r}")
            return name + (change_label(rest) if rest else "")
    raise ConfigError(f"unknown variant {variant!r}")


def variant_spec(variant: str, **overrides) -> ModelSpec:
    """Resolve a variant name (``"FCRN15+F+D+P"``, ``"FCRN15⊖C"``, ``"EffCRN23"``...)."""
    name = canonical_name(variant)
    if name in ALIASES:
        base_name, changes, fixed = ALIASES[name]
        spec = apply_variant(BASES[base_name], changes)
        if fixed:
            spec = _rescale(spec, **fixed)
        spec = replace(spec, name=name)
    else:
        base_name = next(b for b in BASES if name.startswith(b))
        spec = apply_variant(BASES[base_name], name[len(base_name):])
    return apply_overrides(spec, **overrides)


def _rescale(spec: ModelSpec, filters: int) -> ModelSpec:
    """Change the base filter count, keeping CLSTM width = filters and the GRU flat size."""
    clstms = tuple(("clstm", filters) for kind, _ in spec.bottleneck if kind == "clstm")
    has_gru = any(kind == "gru" for kind, _ in spec.bottleneck)
    spec = replace(spec, filters=filters, bottleneck=clstms)
    if has_gru:
        spec = replace(spec, bottleneck=clstms + (("gru", default_gru_width(spec)),))
    return spec


def apply_overrides(spec: ModelSpec, clstm_width: int | None = None,
                    gru_width: int | None = None, leaky_slope: float | None = None,
                    **unknown) -> ModelSpec:
    if unknown:
        raise ConfigError(f"not overridable: {sorted(unknown)}; allowed {OVERRIDABLE}")
    if leaky_slope is not None:
        if not 0.0 <= leaky_slope < 1.0:
            raise ConfigError("leaky_slope must lie in [0, 1)")
        spec = replace(spec, leaky_slope=float(leaky_slope))
    if clstm_width is not None:
        if clstm_width < 1:
            raise ConfigError("clstm_width must be positive")
        cells = [(k, clstm_width if k == "clstm" else w) for k, w in spec.bottleneck]
        spec = replace(spec, bottleneck=tuple(cells))
        if gru_width is None and any(k == "gru" for k, _ in cells):
            gru_width = bottleneck_size(spec) * clstm_width
    if gru_width is not None:
        if not any(k == "gru" for k, _ in spec.bottleneck):
            raise ConfigError(f"{spec.name} has no GRU to resize")
        if gru_width < 1 or gru_width % bottleneck_size(spec):
            raise BuildError(
                f"gru_width {gru_width} is not a multiple of the bottleneck "
                f"frequency size {bottleneck_size(spec)}")
        cells = [(k, gru_width if k == "gru" else w) for k, w in spec.bottleneck]
        spec = replace(spec, bottleneck=tuple(cells))
    return spec
