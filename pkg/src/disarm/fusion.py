"""Bilinear scoring and low-rank bilinear pooling.

All functions accept a single vector or a batch (leading dimensions) and are
pure: parameters are read, never modified.  Matrices are stored ``in x out`` so
that ``U^T x`` is computed as ``x @ U``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from .errors import ContractError, DimensionError

INIT_STD = 0.02


def as_tensor(x, dtype: Optional[torch.dtype] = None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if dtype is None else x.to(dtype)
    return torch.as_tensor(x, dtype=dtype or torch.float32)


def _require_dim(name: str, t: torch.Tensor, axis: int, expected: int) -> None:
    if t.dim() == 0 or t.shape[axis] != expected:
        got = tuple(t.shape)
        raise DimensionError(f"{name}: expected size {expected} on axis {axis}, got shape {got}")


def _require_matrix(name: str, t: torch.Tensor) -> None:
    if t.dim() != 2:
        raise DimensionError(f"{name}: expected a matrix, got shape {tuple(t.shape)}")


@dataclass(frozen=True)
class FusionDims:
    in_x: int
    in_y: int
    rank: int
    out: int
    bias: bool = True

    def check(self) -> None:
        if min(self.in_x, self.in_y, self.rank, self.out) < 1:
            raise ContractError(f"fusion dims must be positive: {self}")
        if self.rank > min(self.in_x, self.in_y):
            raise ContractError(
                f"rank {self.rank} exceeds low-rank bound min({self.in_x}, {self.in_y})"
            )

    def to_dict(self) -> dict:
        return {"in_x": self.in_x, "in_y": self.in_y, "rank": self.rank,
                "out": self.out, "bias": self.bias}


@dataclass
class FusionParams:
    """Factor matrices ``U [in_x x d]``, ``V [in_y x d]``, ``P [d x out]`` and optional bias."""

    U: torch.Tensor
    V: torch.Tensor
    P: torch.Tensor
    b: Optional[torch.Tensor] = None

    def __post_init__(self):
        for name in ("U", "V", "P"):
            _require_matrix(name, getattr(self, name))
        rank = self.U.shape[1]
        _require_dim("V", self.V, 1, rank)
        _require_dim("P", self.P, 0, rank)
        if self.b is not None and tuple(self.b.shape) != (self.P.shape[1],):
            raise DimensionError(f"b: expected shape ({self.P.shape[1]},), got {tuple(self.b.shape)}")
        self.dims.check()
        for name, t in self.tensors().items():
            if not torch.isfinite(t).all():
                raise ContractError(f"{name} contains non-finite values")

    @property
    def dims(self) -> FusionDims:
        return FusionDims(self.U.shape[0], self.V.shape[0], self.U.shape[1],
                          self.P.shape[1], self.b is not None)

    def tensors(self) -> dict[str, torch.Tensor]:
        out = {"U": self.U, "V": self.V, "P": self.P}
        if self.b is not None:
            out["b"] = self.b
        return out


@dataclass
class JointProjection:
    """Linear maps of both modalities into a shared space of size ``joint_dim``."""

    A_x: torch.Tensor
    A_y: torch.Tensor

    def __post_init__(self):
        _require_matrix("A_x", self.A_x)
        _require_matrix("A_y", self.A_y)
        if self.A_x.shape[1] != self.A_y.shape[1]:
            raise DimensionError(
                f"joint projections disagree on output size: {self.A_x.shape[1]} vs {self.A_y.shape[1]}"
            )

    @property
    def joint_dim(self) -> int:
        return self.A_x.shape[1]


def dense_bilinear_score(x, y, W) -> torch.Tensor:
    """``x^T W y`` evaluated with the full weight matrix."""
    x, y, W = as_tensor(x), as_tensor(y), as_tensor(W)
    _require_matrix("W", W)
    _require_dim("x", x, -1, W.shape[0])
    _require_dim("y", y, -1, W.shape[1])
    return ((x @ W) * y).sum(-1)


def hadamard_lrb_score(x, y, U, V) -> torch.Tensor:
    """Low-rank bilinear score ``1^T (U^T x * V^T y)``; equals ``x^T (U V^T) y``."""
    x, y, U, V = as_tensor(x), as_tensor(y), as_tensor(U), as_tensor(V)
    _require_matrix("U", U)
    _require_matrix("V", V)
    _require_dim("V", V, 1, U.shape[1])
    _require_dim("x", x, -1, U.shape[0])
    _require_dim("y", y, -1, V.shape[0])
    if U.shape[1] > min(U.shape[0], V.shape[0]):
        raise ContractError(f"rank {U.shape[1]} exceeds min({U.shape[0]}, {V.shape[0]})")
    return ((x @ U) * (y @ V)).sum(-1)


def pool(x, y, U, V, P, b=None) -> torch.Tensor:
    # unchecked kernel shared by the public functions and the nn.Module
    f = torch.tanh((x @ U) * (y @ V)) @ P
    return f if b is None else f + b


def _check_inputs(x: torch.Tensor, y: torch.Tensor, p: FusionParams) -> None:
    _require_dim("x", x, -1, p.U.shape[0])
    _require_dim("y", y, -1, p.V.shape[0])


def lrbp(x, y, p: FusionParams) -> torch.Tensor:
    """``P^T tanh(U^T x * V^T y) + b``; the block must carry a bias."""
    if p.b is None:
        raise ContractError("lrbp requires a bias-bearing block (p.b is None)")
    x, y = as_tensor(x, p.U.dtype), as_tensor(y, p.V.dtype)
    _check_inputs(x, y, p)
    return pool(x, y, p.U, p.V, p.P, p.b)


def mmlrbp(x, y, jp: JointProjection, p: FusionParams) -> torch.Tensor:
    """Project both inputs into the joint space, then bias-free pooling."""
    if p.b is not None:
        raise ContractError("mmlrbp uses a bias-free block (p.b must be None)")
    x, y = as_tensor(x, jp.A_x.dtype), as_tensor(y, jp.A_y.dtype)
    _require_dim("x", x, -1, jp.A_x.shape[0])
    _require_dim("y", y, -1, jp.A_y.shape[0])
    if p.U.shape[0] != jp.joint_dim or p.V.shape[0] != jp.joint_dim:
        raise DimensionError(
            f"block input dims ({p.U.shape[0]}, {p.V.shape[0]}) do not match joint dim {jp.joint_dim}"
        )
    return pool(x @ jp.A_x, y @ jp.A_y, p.U, p.V, p.P)


def _normal(shape, generator: torch.Generator, dtype=torch.float32) -> torch.Tensor:
    return torch.randn(*shape, generator=generator, dtype=dtype) * INIT_STD


def init_fusion_params(dims: FusionDims, seed: int | torch.Generator) -> FusionParams:
    """Zero-mean Gaussian factors (std 0.02) and a zero bias when the block has one."""
    dims.check()
    g = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(int(seed))
    U = _normal((dims.in_x, dims.rank), g)
    V = _normal((dims.in_y, dims.rank), g)
    P = _normal((dims.rank, dims.out), g)
    b = torch.zeros(dims.out) if dims.bias else None
    return FusionParams(U, V, P, b)


def init_joint_projection(raw_x: int, raw_y: int, joint_dim: int,
                          seed: int | torch.Generator) -> JointProjection:
    g = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(int(seed))
    return JointProjection(_normal((raw_x, joint_dim), g), _normal((raw_y, joint_dim), g))


class BilinearFusion(nn.Module):
    """Trainable pooling block.

    With ``joint_dim`` set, both inputs first pass through learned linear
    projections into a shared space (multimodal variant, no bias); otherwise
    the block is plain pooling with a bias.
    """

    def __init__(self, in_x: int, in_y: int, rank: int, out: int, *,
                 joint_dim: Optional[int] = None, generator: Optional[torch.Generator] = None):
        super().__init__()
        g = generator if generator is not None else torch.Generator().manual_seed(0)
        self.joint = joint_dim is not None
        if self.joint:
            jp = init_joint_projection(in_x, in_y, joint_dim, g)
            self.A_x = nn.Parameter(jp.A_x)
            self.A_y = nn.Parameter(jp.A_y)
            dims = FusionDims(joint_dim, joint_dim, rank, out, bias=False)
        else:
            dims = FusionDims(in_x, in_y, rank, out, bias=True)
        p = init_fusion_params(dims, g)
        self.U = nn.Parameter(p.U)
        self.V = nn.Parameter(p.V)
        self.P = nn.Parameter(p.P)
        self.b = nn.Parameter(p.b) if p.b is not None else None

    def forward(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        if self.joint:
            x, y = x @ self.A_x, y @ self.A_y
        return pool(x, y, self.U, self.V, self.P, self.b)

    def fusion_params(self) -> FusionParams:
        return FusionParams(self.U.detach(), self.V.detach(), self.P.detach(),
                            None if self.b is None else self.b.detach())

    def joint_projection(self) -> Optional[JointProjection]:
        if not self.joint:
            return None
        return JointProjection(self.A_x.detach(), self.A_y.detach())

    @property
    def dims(self) -> FusionDims:
        return self.fusion_params().dims
