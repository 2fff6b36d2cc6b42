from .checkpoint import CHECKPOINT_MAGIC, Checkpoint, load_checkpoint, save_checkpoint

__all__ = ["CHECKPOINT_MAGIC", "Checkpoint", "load_checkpoint", "save_checkpoint"]
