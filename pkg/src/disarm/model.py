"""The contextualized multimodal classifier and its ablation variants.

Pipeline for one (meme, entity) pair::

    entity -> embedding (300) -> projection e (512)
    (e, context c)            -> pooling with bias          -> c_ent (512)
    [o_ent (768), c_ent]      -> dense + tanh               -> c_txt (512)
    (c_txt, image c_img)      -> joint-space pooling        -> c_mm  (512)
    c_mm                      -> dense 256 + tanh -> dense 1 -> sigmoid
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
from torch import nn

from .encoders import ENTITY_DIM, EncoderSet, EntityEmbeddingTable
from .errors import ConfigError, DimensionError
from .fusion import INIT_STD, BilinearFusion, FusionParams, JointProjection, as_tensor, lrbp, mmlrbp

VARIANTS = (
    "CE",
    "EH",
    "CI",
    "CE+EH",
    "CE+CI-concat",
    "CE+CI-mmlrbp",
    "EH+CI-concat",
    "EH+CI-mmlrbp",
    "full",
)

VARIANT_LABELS = {
    "CE": "CE",
    "EH": "EH",
    "CI": "CI",
    "CE+EH": "CE + EH",
    "CE+CI-concat": "CE + CI (concat)",
    "CE+CI-mmlrbp": "CE + CI (MMLRBP)",
    "EH+CI-concat": "EH + CI (concat)",
    "EH+CI-mmlrbp": "EH + CI (MMLRBP)",
    "full": "DISARM",
}

EPS = 1e-7


@dataclass(frozen=True)
class ModelDims:
    entity_dim: int = ENTITY_DIM
    entity_proj_dim: int = 512
    context_dim: int = 512
    image_dim: int = 512
    harm_dim: int = 768
    rank: int = 256
    fused_dim: int = 512
    text_dim: int = 512
    joint_dim: int = 512
    head_hidden: int = 256

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDims":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model dims: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


# -- stage functions ---------------------------------------------------------

def contextualized_entity(e, c, p: FusionParams) -> torch.Tensor:
    return lrbp(e, c, p)


def contextualized_text(o_ent, c_ent, weight, bias=None, nonlinear: bool = True) -> torch.Tensor:
    """``tanh(W [o_ent, c_ent] + b)``, with ``W`` of shape ``[out x (dim o_ent + dim c_ent)]``."""
    weight = as_tensor(weight)
    o_ent, c_ent = as_tensor(o_ent, weight.dtype), as_tensor(c_ent, weight.dtype)
    z = torch.cat([o_ent, c_ent], dim=-1)
    if weight.dim() != 2 or weight.shape[1] != z.shape[-1]:
        raise DimensionError(f"concatenated input of size {z.shape[-1]} vs weight {tuple(weight.shape)}")
    z = z @ weight.T
    if bias is not None:
        z = z + as_tensor(bias, weight.dtype)
    return torch.tanh(z) if nonlinear else z


def contextualized_multimodal(c_txt, c_img, jp: JointProjection, p: FusionParams) -> torch.Tensor:
    return mmlrbp(c_txt, c_img, jp, p)


@dataclass
class HeadParams:
    W1: torch.Tensor  # [hidden x in]
    b1: torch.Tensor
    w2: torch.Tensor  # [hidden]
    b2: torch.Tensor  # scalar


def classify(c_mm, head: HeadParams) -> tuple[torch.Tensor, torch.Tensor]:
    c_mm = as_tensor(c_mm, head.W1.dtype)
    if c_mm.shape[-1] != head.W1.shape[1]:
        raise DimensionError(f"head expects size {head.W1.shape[1]}, got {c_mm.shape[-1]}")
    h = torch.tanh(c_mm @ head.W1.T + head.b1)
    logit = h @ head.w2 + head.b2
    return logit, torch.sigmoid(logit)


def bce_loss(probs, labels, eps: float = EPS) -> torch.Tensor:
    probs = as_tensor(probs)
    labels = as_tensor(labels, probs.dtype)
    if probs.shape != labels.shape:
        raise DimensionError(f"probs {tuple(probs.shape)} vs labels {tuple(labels.shape)}")
    p = probs.clamp(eps, 1 - eps)
    return -(labels * torch.log(p) + (1 - labels) * torch.log1p(-p)).mean()


def bce_with_logits(logits: torch.Tensor, labels: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    # same clamped objective as bce_loss, computed from logits via log-sigmoid
    lo, hi = torch.logit(torch.tensor(eps, dtype=logits.dtype)), torch.logit(torch.tensor(1 - eps, dtype=logits.dtype))
    z = logits.clamp(lo, hi)
    return -(labels * nn.functional.logsigmoid(z) + (1 - labels) * nn.functional.logsigmoid(-z)).mean()


# -- the model ---------------------------------------------------------------

def _linear(n_in: int, n_out: int, g: torch.Generator) -> nn.Linear:
    layer = nn.Linear(n_in, n_out)
    with torch.no_grad():
        layer.weight.copy_(torch.randn(n_out, n_in, generator=g) * INIT_STD)
        layer.bias.zero_()
    return layer


class DisarmModel(nn.Module):
    """Full model (``variant="full"``) or one of the ablation graphs in :data:`VARIANTS`.

    ``forward`` takes a batch of entity indices and the three encoder outputs and
    returns a dict of intermediate representations plus ``logit``.
    """

    def __init__(self, vocab, dims: ModelDims = ModelDims(), variant: str = "full",
                 seed: int = 0, ct_nonlinear: bool = True):
        super().__init__()
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
        self.dims = dims
        self.variant = variant
        self.seed = seed
        self.ct_nonlinear = ct_nonlinear
        g = torch.Generator().manual_seed(int(seed))
        d = dims
        uses_ce = variant in ("CE", "CE+EH", "CE+CI-concat", "CE+CI-mmlrbp", "full")
        uses_ct = variant in ("CE+EH", "full")

        if uses_ce:
            self.entity_table = EntityEmbeddingTable(vocab, d.entity_dim, generator=g)
            self.entity_proj = _linear(d.entity_dim, d.entity_proj_dim, g)
            self.ce = BilinearFusion(d.entity_proj_dim, d.context_dim, d.rank, d.fused_dim, generator=g)
        if uses_ct:
            self.concat_proj = _linear(d.harm_dim + d.fused_dim, d.text_dim, g)
        if variant == "full":
            self.cmm = BilinearFusion(d.text_dim, d.image_dim, d.rank, d.fused_dim, joint_dim=d.joint_dim, generator=g)
        elif variant == "CE+CI-mmlrbp":
            self.cmm = BilinearFusion(d.fused_dim, d.image_dim, d.rank, d.fused_dim, joint_dim=d.joint_dim, generator=g)
        elif variant == "EH+CI-mmlrbp":
            self.cmm = BilinearFusion(d.harm_dim, d.image_dim, d.rank, d.fused_dim, joint_dim=d.joint_dim, generator=g)
        elif variant == "CE+CI-concat":
            self.fuse_proj = _linear(d.fused_dim + d.image_dim, d.fused_dim, g)
        elif variant == "EH+CI-concat":
            self.fuse_proj = _linear(d.harm_dim + d.image_dim, d.fused_dim, g)

        head_in = {"EH": d.harm_dim, "CI": d.image_dim, "CE+EH": d.text_dim}.get(variant, d.fused_dim)
        self.head_hidden = _linear(head_in, d.head_hidden, g)
        self.head_out = _linear(d.head_hidden, 1, g)

    @property
    def uses_entity(self) -> bool:
        return hasattr(self, "entity_table")

    @property
    def vocab(self) -> list[str]:
        return self.entity_table.vocab if self.uses_entity else []

    def entity_indices(self, entities) -> torch.Tensor:
        if not self.uses_entity:
            return torch.zeros(len(entities), dtype=torch.long)
        return self.entity_table.indices(entities)

    def forward(self, entity_idx: torch.Tensor, context: torch.Tensor, image: torch.Tensor,
                harm: torch.Tensor) -> dict[str, torch.Tensor]:
        v = self.variant
        out: dict[str, torch.Tensor] = {"c": context, "c_img": image, "o_ent": harm}
        if self.uses_entity:
            out["ent"] = self.entity_table(entity_idx)
            out["e"] = self.entity_proj(out["ent"])
            out["c_ent"] = self.ce(out["e"], context)
        if hasattr(self, "concat_proj"):
            z = self.concat_proj(torch.cat([harm, out["c_ent"]], dim=-1))
            out["c_txt"] = torch.tanh(z) if self.ct_nonlinear else z

        if v == "full":
            rep = out["c_mm"] = self.cmm(out["c_txt"], image)
        elif v == "CE":
            rep = out["c_ent"]
        elif v == "EH":
            rep = harm
        elif v == "CI":
            rep = image
        elif v == "CE+EH":
            rep = out["c_txt"]
        elif v == "CE+CI-mmlrbp":
            rep = self.cmm(out["c_ent"], image)
        elif v == "EH+CI-mmlrbp":
            rep = self.cmm(harm, image)
        elif v == "CE+CI-concat":
            rep = self.fuse_proj(torch.cat([out["c_ent"], image], dim=-1))
        else:  # EH+CI-concat
            rep = self.fuse_proj(torch.cat([harm, image], dim=-1))
        out["rep"] = rep
        out["logit"] = self.head_out(torch.tanh(self.head_hidden(rep))).squeeze(-1)
        return out

    # views on the trained parameters, for the stage functions
    def ce_params(self) -> FusionParams:
        return self.ce.fusion_params()

    def cmm_params(self) -> tuple[JointProjection, FusionParams]:
        return self.cmm.joint_projection(), self.cmm.fusion_params()

    def head_params(self) -> HeadParams:
        return HeadParams(self.head_hidden.weight.detach(), self.head_hidden.bias.detach(),
                          self.head_out.weight.detach()[0], self.head_out.bias.detach()[0])

    def block_shapes(self) -> dict[str, list[int]]:
        return {k: list(t.shape) for k, t in self.state_dict().items()}


@dataclass
class ForwardTrace:
    entity: str
    e: torch.Tensor
    c: torch.Tensor
    c_ent: torch.Tensor
    o_ent: torch.Tensor
    c_txt: torch.Tensor
    c_img: torch.Tensor
    c_mm: torch.Tensor
    logit: float
    prob: float
    decision: bool = field(default=False)

    def is_finite(self) -> bool:
        tensors = (self.e, self.c, self.c_ent, self.o_ent, self.c_txt, self.c_img, self.c_mm)
        return all(bool(torch.isfinite(t).all()) for t in tensors) and bool(
            torch.isfinite(torch.tensor([self.logit, self.prob])).all())


def encode_pair(meme, entity: str, encoders: EncoderSet):
    """Encoder outputs ``(context, image, harm)`` for one meme/entity pair, as float32 tensors."""
    ctx = meme.context.text if getattr(meme, "context", None) is not None else ""
    c = torch.from_numpy(encoders.encode_context(ctx))
    img = torch.from_numpy(encoders.encode_image(meme.image_path))
    o = torch.from_numpy(encoders.encode_harm_text(meme.ocr_text, entity))
    return c, img, o


@torch.no_grad()
def forward(meme, entity: str, model: DisarmModel, encoders: EncoderSet, threshold: float = 0.5) -> ForwardTrace:
    """Run the full pipeline on one (meme, entity) pair and keep every intermediate."""
    if model.variant != "full":
        raise ConfigError("forward traces are defined for the full model only")
    c, img, o = encode_pair(meme, entity, encoders)
    idx = model.entity_indices([entity])
    out = model(idx, c[None], img[None], o[None])
    logit = float(out["logit"][0])
    prob = float(torch.sigmoid(out["logit"][0]))
    return ForwardTrace(entity=entity, e=out["e"][0], c=c, c_ent=out["c_ent"][0], o_ent=o,
                        c_txt=out["c_txt"][0], c_img=img, c_mm=out["c_mm"][0],
                        logit=logit, prob=prob, decision=prob >= threshold)
