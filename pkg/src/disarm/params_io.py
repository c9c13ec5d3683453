"""Parameter bundle format.

A bundle is a directory holding ``params.json`` (a header describing every
array plus caller metadata) and one ``<name>.f32`` sidecar per array with the
values as row-major little-endian float32.  Round trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np
import torch

from .errors import CheckpointError
from .fusion import FusionParams

FORMAT = "disarm-params/1"
HEADER = "params.json"


def _to_numpy(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        t = t.detach().cpu().to(torch.float32).numpy()
    return np.ascontiguousarray(t, dtype="<f4")


def save_bundle(directory, arrays: Mapping[str, object], meta: Mapping | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {}
    for name in sorted(arrays):
        arr = _to_numpy(arrays[name])
        fname = name.replace("/", "__") + ".f32"
        arr.tofile(directory / fname)
        index[name] = {"file": fname, "shape": list(arr.shape), "dtype": "float32"}
    header = {"format": FORMAT, "arrays": index, "meta": dict(meta or {})}
    with open(directory / HEADER, "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def load_bundle(directory) -> tuple[dict[str, np.ndarray], dict]:
    directory = Path(directory)
    try:
        header = json.loads((directory / HEADER).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CheckpointError(f"no {HEADER} in {directory}") from None
    if header.get("format") != FORMAT:
        raise CheckpointError(f"unsupported bundle format {header.get('format')!r}")
    arrays = {}
    for name, entry in header["arrays"].items():
        shape = tuple(entry["shape"])
        arr = np.fromfile(directory / entry["file"], dtype="<f4")
        if arr.size != int(np.prod(shape)):
            raise CheckpointError(f"{name}: sidecar holds {arr.size} values, header says {shape}")
        arrays[name] = arr.reshape(shape)
    return arrays, header.get("meta", {})


def save_fusion_params(directory, blocks: Mapping[str, FusionParams], seed: int | None = None) -> Path:
    arrays = {}
    meta = {"seed": seed, "blocks": {}}
    for block, p in blocks.items():
        meta["blocks"][block] = p.dims.to_dict()
        for key, t in p.tensors().items():
            arrays[f"{block}.{key}"] = t
    return save_bundle(directory, arrays, meta)


def load_fusion_params(directory) -> tuple[dict[str, FusionParams], dict]:
    arrays, meta = load_bundle(directory)
    blocks = {}
    for block, dims in meta.get("blocks", {}).items():
        get = lambda k: torch.from_numpy(arrays[f"{block}.{k}"].copy())
        b = get("b") if dims.get("bias") else None
        p = FusionParams(get("U"), get("V"), get("P"), b)
        if p.dims.to_dict() != dims:
            raise CheckpointError(f"block {block}: arrays {p.dims.to_dict()} disagree with header {dims}")
        blocks[block] = p
    return blocks, meta
