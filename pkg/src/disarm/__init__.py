"""Entity-level harmfulness detection for memes with low-rank bilinear fusion.

The library is layered: ``fusion`` (pooling kernels), ``encoders`` (stub and
adapter encoders), ``model`` (the classifier and its ablation variants),
``dataset`` (manifests, candidates, contexts, sampling, statistics),
``training``/``evaluation`` and the ``disarm`` command line in ``cli``.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DimensionError,
    DisarmError,
    EncoderError,
    EncoderInputError,
    SearchError,
    TrainingError,
)
from .fusion import BilinearFusion, FusionDims, FusionParams, JointProjection, hadamard_lrb_score, lrbp, mmlrbp
from .model import VARIANTS, DisarmModel, ModelDims
from .training import TrainConfig, train
from .evaluation import EvalReport, compute_metrics, evaluate

__version__ = "0.1.0"

__all__ = [
    "BilinearFusion", "CheckpointError", "ConfigError", "ContractError", "DimensionError", "DisarmError",
    "DisarmModel", "EncoderError", "EncoderInputError", "EvalReport", "FusionDims", "FusionParams",
    "JointProjection", "ModelDims", "SearchError", "TrainConfig", "TrainingError", "VARIANTS",
    "compute_metrics", "evaluate", "hadamard_lrb_score", "lrbp", "mmlrbp", "train",
]
