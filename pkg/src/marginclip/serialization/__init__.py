"""
Binary checkpoint, bounds and dataset files.
"""

from .checkpoint import (
    BOUNDS_MAGIC,
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    decode_bounds,
    decode_checkpoint,
    encode_bounds,
    encode_checkpoint,
    load_bounds,
    load_checkpoint,
    save_bounds,
    save_checkpoint,
)
from .dataset_file import (
    DATASET_MAGIC,
    DATASET_VERSION,
    POISON_MAGIC,
    decode_dataset,
    encode_dataset,
    load_dataset,
    save_dataset,
)

__all__ = [
    "BOUNDS_MAGIC",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "DATASET_MAGIC",
    "DATASET_VERSION",
    "POISON_MAGIC",
    "decode_bounds",
    "decode_checkpoint",
    "decode_dataset",
    "encode_bounds",
    "encode_checkpoint",
    "encode_dataset",
    "load_bounds",
    "load_checkpoint",
    "load_dataset",
    "save_bounds",
    "save_checkpoint",
    "save_dataset",
]
