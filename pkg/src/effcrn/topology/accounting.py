"""Parameter and FLOP counts, plus the published reference values."""

from __future__ import annotations

from dataclasses import dataclass

from .layers import describe_layers
from .model import EnhancementModel
from .spec import ModelSpec, canonical_name, variant_spec

# variant -> (#parameters, #FLOPs per frame) as published
PUBLISHED = {
    "FCRN15": (875_000, 123_000_000),
    "EffCRN23": (997_000, 41_000_000),
    "EffCRN23lite": (396_000, 16_000_000),
    "FCRN15-C": (777_000, 112_000_000),
    "FCRN15-C+G": (7_400_000, 125_000_000),
    "FCRN15+D": (2_800_000, 183_000_000),
    "FCRN15+D+P": (2_800_000, 172_000_000),
    "FCRN15+F": (209_000, 29_000_000),
    "FCRN15+F+D+P": (665_000, 41_000_000),
}

# ablation pairs reported as deltas: (from, to)
ABLATION_PAIRS = (
    ("FCRN15", "FCRN15-C"),
    ("FCRN15-C", "FCRN15-C+G"),
    ("FCRN15", "FCRN15+D"),
    ("FCRN15+D", "FCRN15+D+P"),
    ("FCRN15", "FCRN15+F"),
    ("FCRN15+F", "FCRN15+F+D+P"),
    ("FCRN15+F+D+P", "EffCRN23"),
    ("EffCRN23", "EffCRN23lite"),
)

PARAM_TOLERANCE = 0.10
FLOP_TOLERANCE = 0.20


def _spec_of(model) -> ModelSpec:
    if isinstance(model, EnhancementModel):
        return model.spec
    if isinstance(model, ModelSpec):
        return model
    return variant_spec(model)


def count_params(model) -> int:
    """Exact number of scalar parameters, biases included.

    Built models are counted from their parameter arrays; specs and variant
    names from the closed-form layer table.
    """
    if isinstance(model, EnhancementModel):
        return sum(p.size for p in model.parameters())
    return sum(layer.params for layer in describe_layers(_spec_of(model)))


def count_flops_per_frame(model) -> int:
    return sum(layer.flops for layer in describe_layers(_spec_of(model)))


@dataclass(frozen=True)
class ComplexityRow:
    variant: str
    params: int
    flops: int
    depth: int
    published_params: int | None
    published_flops: int | None

    @property
    def params_deviation(self) -> float | None:
        if not self.published_params:
            return None
        return self.params / self.published_params - 1.0

    @property
    def flops_deviation(self) -> float | None:
        if not self.published_flops:
            return None
        return self.flops / self.published_flops - 1.0

    def within_tolerance(self) -> bool:
        ok = True
        if self.params_deviation is not None:
            ok &= abs(self.params_deviation) <= PARAM_TOLERANCE
        if self.flops_deviation is not None:
            ok &= abs(self.flops_deviation) <= FLOP_TOLERANCE
        return ok

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "params": self.params,
            "flops_per_frame": self.flops,
            "depth": self.depth,
            "published_params": self.published_params,
            "published_flops_per_frame": self.published_flops,
            "params_deviation": self.params_deviation,
            "flops_deviation": self.flops_deviation,
        }


def complexity_row(variant: str) -> ComplexityRow:
    name = canonical_name(variant)
    spec = variant_spec(name)
    pub = PUBLISHED.get(name, (None, None))
    return ComplexityRow(name, count_params(spec), count_flops_per_frame(spec),
                         spec.depth, pub[0], pub[1])


def ordering_violations(rows: list[ComplexityRow]) -> list[str]:
    """Pairs whose strict published ordering is not reproduced (ties skipped)."""
    bad = []
    for attr, pub_attr in (("params", "published_params"), ("flops", "published_flops")):
        for a in rows:
            for b in rows:
                pa, pb = getattr(a, pub_attr), getattr(b, pub_attr)
                if pa is None or pb is None or pa <= pb:
                    continue
                if not getattr(a, attr) > getattr(b, attr):
                    bad.append(f"{attr}: {a.variant} should exceed {b.variant}")
    return bad
