"""Model checkpoints: the parameter bundle format plus a model manifest in its header."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import torch

from .errors import CheckpointError
from .model import DisarmModel, ModelDims
from .params_io import load_bundle, save_bundle


def save_checkpoint(directory, model: DisarmModel, *, encoders: Optional[dict] = None,
                    threshold: float = 0.5, seed: Optional[int] = None, extra: Optional[dict] = None) -> Path:
    meta = {
        "kind": "disarm-checkpoint",
        "variant": model.variant,
        "dims": model.dims.to_dict(),
        "ct_nonlinear": model.ct_nonlinear,
        "vocab": model.vocab,
        "blocks": model.block_shapes(),
        "encoders": encoders or {},
        "threshold": threshold,
        "seed": model.seed if seed is None else seed,
    }
    if extra:
        meta.update(extra)
    return save_bundle(directory, model.state_dict(), meta)


def _block(key: str) -> str:
    return key.split(".", 1)[0]


def load_into(model: DisarmModel, directory) -> dict:
    """Copy checkpoint arrays into ``model``; any shape or name mismatch is a hard error."""
    arrays, meta = load_bundle(directory)
    state = model.state_dict()
    missing = sorted(set(state) - set(arrays))
    extra = sorted(set(arrays) - set(state))
    if missing or extra:
        names = sorted({_block(k) for k in missing + extra})
        raise CheckpointError(f"checkpoint blocks do not match model: {', '.join(names)}")
    for key, target in state.items():
        if tuple(arrays[key].shape) != tuple(target.shape):
            raise CheckpointError(
                f"block {_block(key)}: {key} has shape {tuple(arrays[key].shape)}, model expects {tuple(target.shape)}"
            )
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in arrays.items()})
    model.eval()
    return meta


def load_checkpoint(directory, dims: Optional[ModelDims] = None, variant: Optional[str] = None) -> tuple[DisarmModel, dict]:
    """Rebuild the model described by a checkpoint.

    ``dims``/``variant``, when given, are what the caller expects; a checkpoint
    built for anything else is rejected, naming the offending block.
    """
    _, meta = load_bundle(directory)
    if meta.get("kind") != "disarm-checkpoint":
        raise CheckpointError(f"{directory} is not a model checkpoint")
    saved_dims = ModelDims.from_dict(meta["dims"])
    if variant is not None and variant != meta["variant"]:
        raise CheckpointError(f"checkpoint holds variant {meta['variant']!r}, expected {variant!r}")
    model = DisarmModel(meta["vocab"], dims or saved_dims, meta["variant"], seed=meta.get("seed") or 0,
                        ct_nonlinear=meta.get("ct_nonlinear", True))
    load_into(model, directory)
    return model, meta
