"""Task data, configs, optimization, checkpoints, and the training loop."""

from .config import (config_keys, default_config, load_config,
                     parse_config_items, parse_config_text, render_config,
                     resolve_config)
from .corpus import (Corpus, TaskSpec, generate_corpus, load_corpus,
                     make_batches, save_corpus, task_from_config)
from .checkpoint import (build_model, load_checkpoint, model_state,
                         read_checkpoint, restore_checkpoint, save_checkpoint)
from .optim import Adam, clip_global_norm, noam_lr
from .training import METRICS_HEADER, evaluate, train

__all__ = [
    "Adam", "Corpus", "METRICS_HEADER", "TaskSpec", "build_model",
    "clip_global_norm", "config_keys", "default_config", "evaluate",
    "generate_corpus", "load_checkpoint", "load_config", "load_corpus",
    "make_batches", "model_state", "noam_lr", "parse_config_items",
    "parse_config_text",
    "read_checkpoint", "render_config", "resolve_config",
    "restore_checkpoint", "save_checkpoint", "save_corpus",
    "task_from_config", "train",
]
