"""Minibatch training with decoupled weight decay and early stopping on validation macro-F1."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import torch

from .errors import ConfigError, ContractError, TrainingError
from .evaluation import compute_metrics, predict_proba
from .features import FeatureSet
from .model import DisarmModel, bce_with_logits

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 16
    max_epochs: int = 30
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    seed: int = 0
    early_stop_patience: int = 5
    threshold: float = 0.5
    # probability of swapping an entity for the out-of-vocabulary row during training
    entity_dropout: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")
        if self.learning_rate < 0 or self.weight_decay < 0 or self.early_stop_patience < 0:
            raise ConfigError("learning_rate, weight_decay and early_stop_patience must be non-negative")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        if not 0 <= self.entity_dropout < 1:
            raise ConfigError("entity_dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class TrainHistory:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_macro_f1: float = -1.0
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


class EarlyStopping:
    """Tracks the best score; ``update`` returns True once ``patience`` epochs passed without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, score: float) -> bool:
        if score > self.best:
            self.best, self.best_epoch, self.bad_epochs = score, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs > self.patience


def _param_groups(model: DisarmModel):
    no_decay = {id(model.entity_table.weight)} if model.uses_entity else set()
    decay = [p for p in model.parameters() if id(p) not in no_decay]
    keep = [p for p in model.parameters() if id(p) in no_decay]
    return decay, keep


def _macro_f1(model: DisarmModel, data: FeatureSet, threshold: float) -> float:
    pred = (predict_proba(model, data) >= threshold).long()
    return compute_metrics(pred.numpy(), data.labels.long().numpy()).macro_f1


def train(config: TrainConfig, train_set: FeatureSet, val_set: Optional[FeatureSet], model: DisarmModel,
          on_epoch: Optional[Callable[[dict], None]] = None) -> tuple[DisarmModel, TrainHistory]:
    """Train ``model`` in place and return it restored to its best-validation epoch.

    Weight decay is decoupled from the gradient step and not scaled by the
    learning rate: each step multiplies decayed weights by ``1 - weight_decay``.
    The entity table is not decayed, so rows that were not looked up stay put.
    Without a validation set, selection falls back to training macro-F1.
    """
    if len(train_set) == 0:
        raise ContractError("no training instances")
    select_on = val_set if val_set is not None and len(val_set) else train_set
    g = torch.Generator().manual_seed(int(config.seed))
    decay, _ = _param_groups(model)
    opt = make_optimizer(model, config)

    entity_idx = model.entity_indices(train_set.entities)
    oov = model.entity_table.oov_index if model.uses_entity else 0
    stopper = EarlyStopping(config.early_stop_patience)
    history = TrainHistory()
    best_state = copy.deepcopy(model.state_dict())
    n = len(train_set)

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        perm = torch.randperm(n, generator=g)
        total, seen = 0.0, 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            ix = perm[start:start + config.batch_size]
            ent = entity_idx[ix]
            if config.entity_dropout > 0 and model.uses_entity:
                drop = torch.rand(len(ix), generator=g) < config.entity_dropout
                ent = torch.where(drop, torch.full_like(ent, oov), ent)
            out = model(ent, train_set.context[ix], train_set.image[ix], train_set.harm[ix])
            loss = bce_with_logits(out["logit"], train_set.labels[ix].to(out["logit"].dtype))
            if not torch.isfinite(loss):
                ids = [train_set.instances[i].meme_id for i in ix.tolist()]
                raise TrainingError(f"non-finite loss {loss.item()} at epoch {epoch}, batch {b} (memes {ids})")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            if config.weight_decay:
                with torch.no_grad():
                    for p in decay:
                        p.mul_(1.0 - config.weight_decay)
            opt.step()
            total += loss.item() * len(ix)
            seen += len(ix)

        score = _macro_f1(model, select_on, config.threshold)
        row = {"epoch": epoch, "train_loss": total / seen, "val_macro_f1": score}
        history.epochs.append(row)
        if on_epoch is not None:
            on_epoch(row)
        log.info("epoch %d loss %.5f val macro-F1 %.4f", epoch, row["train_loss"], score)
        stop = stopper.update(epoch, score)
        if stopper.best_epoch == epoch:
            best_state = copy.deepcopy(model.state_dict())
        if stop:
            history.stopped_early = True
            break

    model.load_state_dict(best_state)
    model.eval()
    history.best_epoch = stopper.best_epoch
    history.best_val_macro_f1 = stopper.best
    return model, history


def train_step(model: DisarmModel, opt: torch.optim.Optimizer, batch: FeatureSet, weight_decay: float = 0.0) -> float:
    """One optimisation step on a batch without dropout; used by tests and probes."""
    model.train()
    out = model(model.entity_indices(batch.entities), batch.context, batch.image, batch.harm)
    loss = bce_with_logits(out["logit"], batch.labels.to(out["logit"].dtype))
    opt.zero_grad(set_to_none=True)
    loss.backward()
    if weight_decay:
        decay, _ = _param_groups(model)
        with torch.no_grad():
            for p in decay:
                p.mul_(1.0 - weight_decay)
    opt.step()
    return loss.item()


def make_optimizer(model: DisarmModel, config: TrainConfig) -> torch.optim.Optimizer:
    decay, keep = _param_groups(model)
    groups = [{"params": decay}] + ([{"params": keep}] if keep else [])
    return torch.optim.Adam(groups, lr=config.learning_rate, betas=config.betas, eps=config.eps)
