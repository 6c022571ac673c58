"""Detail fusion network: model, configuration, checkpoints."""

from .config import ModelConfig, DEFAULT_ASPP, N_SCALES, SCALE_FACTORS
from .model import (
    NetInput,
    MultiScaleOutput,
    DFNet,
    build_model,
    radial_mask,
    forward_single,
    inspect,
    collate,
)
from .checkpoint import save_checkpoint, load_checkpoint, checkpoint_id, MAGIC

__all__ = [
    "ModelConfig", "DEFAULT_ASPP", "N_SCALES", "SCALE_FACTORS",
    "NetInput", "MultiScaleOutput", "DFNet", "build_model", "radial_mask",
    "forward_single", "inspect", "collate",
    "save_checkpoint", "load_checkpoint", "checkpoint_id", "MAGIC",
]
