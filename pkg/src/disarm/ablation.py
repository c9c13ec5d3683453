"""Ablation runner: train and evaluate each model variant the same way as the full model."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import ConfigError
from .evaluation import EvalReport, evaluate
from .features import FeatureSet
from .model import VARIANTS, DisarmModel, ModelDims
from .training import TrainConfig, TrainHistory, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationSpec:
    variant: str

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")


@dataclass
class AblationData:
    train: FeatureSet
    validation: Optional[FeatureSet]
    test: FeatureSet

    @property
    def vocab(self) -> list[str]:
        return sorted(set(self.train.entities))


@dataclass
class AblationResult:
    variant: str
    reports: Optional[dict[str, EvalReport]]
    history: Optional[TrainHistory] = None
    error: Optional[str] = None


def run_ablation(spec: AblationSpec, config: TrainConfig, data: AblationData,
                 dims: ModelDims = ModelDims()) -> tuple[dict[str, EvalReport], TrainHistory, DisarmModel]:
    model = DisarmModel(data.vocab, dims, spec.variant, seed=config.seed)
    model, history = train(config, data.train, data.validation, model)
    reports = evaluate(model, data.test, config.threshold)
    for r in reports.values():
        r.meta["variant"] = spec.variant
    return reports, history, model


def run_all(variants: Iterable[str], config: TrainConfig, data: AblationData,
            dims: ModelDims = ModelDims()) -> list[AblationResult]:
    """Run variants in the given order; a failing variant is recorded and the rest still run."""
    results = []
    for v in variants:
        try:
            reports, history, _ = run_ablation(AblationSpec(v), config, data, dims)
            results.append(AblationResult(v, reports, history))
        except ConfigError:
            raise
        except Exception as exc:
            log.error("variant %s failed: %s", v, exc)
            results.append(AblationResult(v, None, error=f"{type(exc).__name__}: {exc}"))
    return results
