"""
Synthetic datasets, backdoor triggers and poisoning.
"""

from .dataset import DEFAULT_CONTRAST, Dataset, class_prototypes, generate_synthetic
from .poisoning import (
    NOT_POISONABLE,
    All2All,
    All2One,
    AttackConfig,
    AttackMode,
    One2One,
    duplicate_with_triggers,
    make_trigger_testset,
    map_label,
    map_labels,
    mode_name,
    poison_training_set,
)
from .triggers import (
    DEFAULT_BLEND_RATIO,
    DEFAULT_CHESSBOARD_INTENSITY,
    DEFAULT_PATCH_SIZE,
    BlendPatch,
    Chessboard,
    Patch,
    TriggerKind,
    TriggerSpec,
    chessboard_pattern,
    embed_trigger,
    make_trigger,
    trigger_kind,
    trigger_mask,
    validate_trigger,
)

__all__ = [
    "DEFAULT_CONTRAST",
    "All2All",
    "All2One",
    "AttackConfig",
    "AttackMode",
    "BlendPatch",
    "Chessboard",
    "DEFAULT_BLEND_RATIO",
    "DEFAULT_CHESSBOARD_INTENSITY",
    "DEFAULT_PATCH_SIZE",
    "Dataset",
    "NOT_POISONABLE",
    "One2One",
    "Patch",
    "TriggerKind",
    "TriggerSpec",
    "chessboard_pattern",
    "class_prototypes",
    "duplicate_with_triggers",
    "embed_trigger",
    "generate_synthetic",
    "make_trigger",
    "make_trigger_testset",
    "map_label",
    "map_labels",
    "mode_name",
    "poison_training_set",
    "trigger_kind",
    "trigger_mask",
    "validate_trigger",
]
