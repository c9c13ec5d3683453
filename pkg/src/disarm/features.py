"""Encoder outputs for a list of target instances, stacked into tensors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import torch

from .dataset.records import ContextDoc, MemeRecord, TargetInstance
from .encoders import EncoderSet


@dataclass
class FeatureSet:
    instances: list[TargetInstance]
    context: torch.Tensor  # [n x context_dim]
    image: torch.Tensor  # [n x image_dim]
    harm: torch.Tensor  # [n x harm_dim]
    labels: torch.Tensor  # [n], float

    def __len__(self):
        return len(self.instances)

    @property
    def entities(self) -> list[str]:
        return [i.entity for i in self.instances]

    @property
    def scenarios(self) -> list[str]:
        return [i.scenario for i in self.instances]

    def subset(self, idx) -> "FeatureSet":
        idx = torch.as_tensor(idx, dtype=torch.long)
        return FeatureSet([self.instances[i] for i in idx.tolist()], self.context[idx],
                          self.image[idx], self.harm[idx], self.labels[idx])

    def by_scenario(self) -> dict[str, "FeatureSet"]:
        groups: dict[str, list[int]] = {}
        for i, s in enumerate(self.scenarios):
            groups.setdefault(s, []).append(i)
        return {s: self.subset(ix) for s, ix in sorted(groups.items())}

    def to(self, dtype: torch.dtype) -> "FeatureSet":
        return FeatureSet(self.instances, self.context.to(dtype), self.image.to(dtype),
                          self.harm.to(dtype), self.labels.to(dtype))


def featurize(instances: Sequence[TargetInstance], records: Mapping[str, MemeRecord],
              encoders: EncoderSet, contexts: Mapping[str, ContextDoc] | None = None) -> FeatureSet:
    """Encode every instance.  ``contexts`` (keyed by meme id) overrides record contexts;
    a meme without any context encodes the empty string."""
    contexts = contexts or {}
    ctx, img, harm = [], [], []
    for inst in instances:
        rec = records[inst.meme_id]
        doc = contexts.get(rec.id, rec.context)
        ctx.append(encoders.encode_context(doc.text if doc is not None else ""))
        img.append(encoders.encode_image(rec.image_path))
        harm.append(encoders.encode_harm_text(rec.ocr_text, inst.entity))

    def stack(vs, dim):
        return torch.from_numpy(np.stack(vs)) if vs else torch.zeros(0, dim)

    return FeatureSet(
        list(instances),
        stack(ctx, encoders.context.output_dim),
        stack(img, encoders.image.output_dim),
        stack(harm, encoders.harm_text.output_dim),
        torch.tensor([float(i.label) for i in instances], dtype=torch.float32),
    )
