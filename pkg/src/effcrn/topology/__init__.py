"""FCRN15 / EffCRN23 family: specs, variants, layer graphs and cost accounting."""

from .accounting import (
    ABLATION_PAIRS,
    PUBLISHED,
    complexity_row,
    count_flops_per_frame,
    count_params,
    ordering_violations,
)
from .checkpoint import load_checkpoint, save_checkpoint, spec_document, write_spec
from .layers import LayerInfo, describe_layers, weighted_depth
from .model import EnhancementModel, build_model
from .spec import (
    FCRN15,
    TABLE_VARIANTS,
    ModelSpec,
    PadPlan,
    apply_variant,
    canonical_name,
    plan_padding,
    variant_spec,
)

__all__ = [
    "ABLATION_PAIRS", "FCRN15", "PUBLISHED", "TABLE_VARIANTS", "EnhancementModel",
    "LayerInfo", "ModelSpec", "PadPlan", "apply_variant", "build_model", "canonical_name",
    "complexity_row", "count_flops_per_frame", "count_params", "describe_layers", "load_checkpoint", "save_checkpoint", "spec_document",
    "write_spec",
    "ordering_violations", "plan_padding", "variant_spec", "weighted_depth",
]
