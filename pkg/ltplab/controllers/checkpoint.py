import json
import logging
from pathlib import Path

import numpy as np

from ltplab.controllers.encoder import EncoderModel, ModelConfig
from ltplab.controllers.pruning import ThresholdSet
from ltplab.core.errors import CheckpointError

logger = logging.getLogger("ltplab.checkpoint")

MAGIC = "LTPLAB1"
VERSION = 1
META_KEY = "__meta__"


def save_checkpoint(
    path: str | Path,
    model: EncoderModel,
    thresholds: ThresholdSet | None = None,
    stage: str | None = None,
) -> Path:
    """Writes config, thresholds and named parameter arrays to one .npz file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    meta = {
        "magic": MAGIC,
        "version": VERSION,
        "stage": stage,
        "config": model.config.to_dict(),
        "thresholds": thresholds.to_dict() if thresholds is not None else None,
    }
    arrays = {name: value for name, value in model.state_dict().items()}
    arrays[META_KEY] = np.array(json.dumps(meta))

    with open(path, "wb") as f:
        np.savez(f, **arrays)

    logger.info(f"Checkpoint saved | path={path} | stage={stage}")
    return path


def load_checkpoint(path: str | Path) -> tuple[EncoderModel, ThresholdSet | None, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")

    try:
        with np.load(path, allow_pickle=False) as archive:
            if META_KEY not in archive.files:
                raise CheckpointError(f"{path} has no metadata entry")
            meta = json.loads(str(archive[META_KEY]))
            state = {name: archive[name] for name in archive.files if name != META_KEY}
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if meta.get("magic") != MAGIC:
        raise CheckpointError(f"{path} is not an {MAGIC} checkpoint")
    if meta.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')!r}")

    model = EncoderModel(ModelConfig.from_dict(meta["config"]))
    try:
        model.load_state_dict(state)
    except Exception as e:
        raise CheckpointError(f"{path}: {e}") from e

    thresholds = ThresholdSet.from_dict(meta["thresholds"]) if meta.get("thresholds") else None
    logger.info(f"Checkpoint loaded | path={path} | stage={meta.get('stage')}")
    return model, thresholds, meta
