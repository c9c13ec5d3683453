"""Entity embedding table and encoder adapters.

Three encoders feed the model: context text and meme image (512-d each) and
the joint OCR-text/entity encoding (768-d).  Production encoders plug in as
named adapters; the ``stub`` adapters are seeded hash projections so the whole
pipeline runs offline and reproducibly.

Adapter names accepted by :func:`load_encoder`:

``stub``
    deterministic hash projection (seeded by the run seed)
``cmd:<shell command>``
    out-of-process adapter; the input (UTF-8 text, or the image path) is
    written to the command's stdin and the command must print exactly
    ``output_dim`` little-endian float32 values as raw bytes on stdout
``py:<module>:<callable>``
    in-process factory called as ``factory(kind=..., output_dim=..., seed=...)``
    and returning a callable from input to vector
"""

from __future__ import annotations

import hashlib
import importlib
import shlex
import subprocess
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, ContractError, DimensionError, EncoderError, EncoderInputError
from .fusion import INIT_STD
from .text import normalize, word_tokens

CONTEXT_TEXT = "context-text"
IMAGE = "image"
HARM_TEXT = "harm-text"
KINDS = (CONTEXT_TEXT, IMAGE, HARM_TEXT)
DEFAULT_DIMS = {CONTEXT_TEXT: 512, IMAGE: 512, HARM_TEXT: 768}
ENTITY_DIM = 300

SEP = " [SEP] "


def harm_text_input(ocr_text: str, entity: str) -> str:
    """The string handed to harm-text adapters: ``<ocr text> [SEP] <entity>``."""
    return f"{normalize(ocr_text)}{SEP}{normalize(entity)}"


class EntityEmbeddingTable(nn.Module):
    """Lookup table over the training entity vocabulary plus one out-of-vocabulary row.

    The OOV row sits after the vocabulary rows (``oov_index == len(vocab)``).
    """

    def __init__(self, vocab: Iterable[str], dim: int = ENTITY_DIM,
                 generator: Optional[torch.Generator] = None):
        super().__init__()
        names = []
        for v in vocab:
            n = normalize(v)
            if n and n not in names:
                names.append(n)
        self.vocab: list[str] = sorted(names)
        self.index = {name: i for i, name in enumerate(self.vocab)}
        self.oov_index = len(self.vocab)
        self.dim = dim
        g = generator if generator is not None else torch.Generator().manual_seed(0)
        self.weight = nn.Parameter(torch.randn(len(self.vocab) + 1, dim, generator=g) * INIT_STD)

    def lookup(self, entity: str) -> int:
        return self.index.get(normalize(entity), self.oov_index)

    def indices(self, entities: Iterable[str]) -> torch.Tensor:
        return torch.tensor([self.lookup(e) for e in entities], dtype=torch.long)

    def forward(self, idx: torch.Tensor) -> torch.Tensor:
        return self.weight[idx]

    @property
    def matrix(self) -> torch.Tensor:
        return self.weight.detach()


def embed_entity(table: EntityEmbeddingTable, entity: str) -> torch.Tensor:
    return table.weight[table.lookup(entity)]


def project_entity(e, weight, bias=None) -> torch.Tensor:
    """Affine map of an entity embedding into the fusion space; ``weight`` is ``[out x in]``."""
    e = torch.as_tensor(e, dtype=torch.as_tensor(weight).dtype)
    weight = torch.as_tensor(weight)
    if weight.dim() != 2 or e.shape[-1] != weight.shape[1]:
        raise DimensionError(f"entity vector of size {e.shape[-1]} vs projection {tuple(weight.shape)}")
    out = e @ weight.T
    if bias is not None:
        bias = torch.as_tensor(bias, dtype=out.dtype)
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"bias shape {tuple(bias.shape)} vs output {weight.shape[0]}")
        out = out + bias
    return out


class Encoder:
    """A named encoder of one kind with a fixed output size."""

    deterministic = False

    def __init__(self, name: str, kind: str, output_dim: Optional[int] = None):
        if kind not in KINDS:
            raise ConfigError(f"unknown encoder kind {kind!r}")
        self.name = name
        self.kind = kind
        self.output_dim = output_dim or DEFAULT_DIMS[kind]

    def encode(self, item: str) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, item) -> np.ndarray:
        vec = np.asarray(self.encode(item), dtype=np.float32)
        if vec.shape != (self.output_dim,):
            raise EncoderError(f"{self.name}: returned shape {vec.shape}, expected ({self.output_dim},)")
        if not np.isfinite(vec).all():
            raise EncoderError(f"{self.name}: returned non-finite values")
        return vec

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, kind={self.kind!r}, dim={self.output_dim})"


def _seed_for(*parts) -> int:
    h = hashlib.sha256("\x00".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


@lru_cache(maxsize=65536)
def _gaussian(seed: int, dim: int) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal(dim)
    v.setflags(write=False)
    return v


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0:
        return np.zeros(v.shape, dtype=np.float32)
    # shrink by one ulp-ish margin so the float32 norm never exceeds 1
    return (v / n * (1 - 1e-6)).astype(np.float32)


class StubTextEncoder(Encoder):
    """Bag of hashed word features, normalised to unit length; empty text maps to zero."""

    deterministic = True

    def __init__(self, kind: str = CONTEXT_TEXT, seed: int = 0, output_dim: Optional[int] = None):
        super().__init__("stub", kind, output_dim)
        self.seed = seed

    def _features(self, text: str) -> list[str]:
        if self.kind == HARM_TEXT:
            ocr, sep, entity = text.rpartition(SEP)
            if not sep:
                ocr, entity = text, ""
            # tag by segment so that moving a word across the separator changes the code
            return [f"ocr|{t}" for t in word_tokens(ocr)] + [f"ent|{t}" for t in word_tokens(entity)]
        return word_tokens(text)

    def encode(self, text: str) -> np.ndarray:
        acc = np.zeros(self.output_dim)
        for feat in self._features(text):
            acc += _gaussian(_seed_for(self.seed, self.kind, feat), self.output_dim)
        return _unit(acc)


class StubImageEncoder(Encoder):
    """Hashes the image file bytes to a seeded pseudo-random unit vector."""

    deterministic = True

    def __init__(self, seed: int = 0, output_dim: Optional[int] = None):
        super().__init__("stub", IMAGE, output_dim)
        self.seed = seed

    def encode(self, image_ref) -> np.ndarray:
        path = Path(image_ref)
        try:
            data = path.read_bytes()
        except (FileNotFoundError, IsADirectoryError):
            raise EncoderInputError(f"image not found: {path}") from None
        digest = hashlib.sha256(data).hexdigest()
        return _unit(_gaussian(_seed_for(self.seed, IMAGE, digest), self.output_dim))


class CommandEncoder(Encoder):
    def __init__(self, command: str, kind: str, output_dim: Optional[int] = None, timeout: float = 120):
        super().__init__(f"cmd:{command}", kind, output_dim)
        self.argv = shlex.split(command)
        self.timeout = timeout

    def encode(self, item) -> np.ndarray:
        try:
            proc = subprocess.run(self.argv, input=str(item).encode("utf-8"),
                                  capture_output=True, timeout=self.timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise EncoderError(f"{self.name}: {exc}") from exc
        if proc.returncode != 0:
            raise EncoderError(f"{self.name}: exit {proc.returncode}: {proc.stderr.decode(errors='replace').strip()}")
        if len(proc.stdout) != 4 * self.output_dim:
            raise EncoderError(f"{self.name}: got {len(proc.stdout)} bytes, expected {4 * self.output_dim}")
        return np.frombuffer(proc.stdout, dtype="<f4")


class CallableEncoder(Encoder):
    def __init__(self, name: str, fn: Callable, kind: str, output_dim: Optional[int] = None):
        super().__init__(name, kind, output_dim)
        self.fn = fn

    def encode(self, item) -> np.ndarray:
        return self.fn(item)


def load_encoder(name: str, kind: str, seed: int = 0, output_dim: Optional[int] = None) -> Encoder:
    """Resolve an adapter name (see module docstring) for an encoder kind."""
    if kind not in KINDS:
        raise ConfigError(f"unknown encoder kind {kind!r}")
    if name == "stub":
        if kind == IMAGE:
            return StubImageEncoder(seed=seed, output_dim=output_dim)
        return StubTextEncoder(kind=kind, seed=seed, output_dim=output_dim)
    if name.startswith("cmd:"):
        command = name[4:].strip()
        if not command:
            raise ConfigError("cmd: adapter needs a command")
        return CommandEncoder(command, kind, output_dim)
    if name.startswith("py:"):
        try:
            module, attr = name[3:].rsplit(":", 1)
            factory = getattr(importlib.import_module(module), attr)
        except (ValueError, ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot load encoder adapter {name!r}: {exc}") from exc
        fn = factory(kind=kind, output_dim=output_dim or DEFAULT_DIMS[kind], seed=seed)
        return CallableEncoder(name, fn, kind, output_dim)
    raise ConfigError(f"unknown encoder adapter {name!r}")


def _require_kind(h: Encoder, kind: str) -> None:
    if h.kind != kind:
        raise ContractError(f"encoder {h.name!r} has kind {h.kind!r}, expected {kind!r}")


def encode_context(h: Encoder, text: str) -> np.ndarray:
    _require_kind(h, CONTEXT_TEXT)
    return h(text)


def encode_image(h: Encoder, image_ref) -> np.ndarray:
    _require_kind(h, IMAGE)
    return h(image_ref)


def encode_harm_text(h: Encoder, ocr_text: str, entity: str) -> np.ndarray:
    _require_kind(h, HARM_TEXT)
    return h(harm_text_input(ocr_text, entity))


class EncoderSet:
    """The three encoders a model run needs, with per-input memoisation."""

    def __init__(self, context: Encoder, image: Encoder, harm_text: Encoder):
        _require_kind(context, CONTEXT_TEXT)
        _require_kind(image, IMAGE)
        _require_kind(harm_text, HARM_TEXT)
        self.context, self.image, self.harm_text = context, image, harm_text
        self._memo: dict = {}

    @classmethod
    def from_names(cls, names: dict, seed: int = 0) -> "EncoderSet":
        return cls(load_encoder(names.get("context", "stub"), CONTEXT_TEXT, seed),
                   load_encoder(names.get("image", "stub"), IMAGE, seed),
                   load_encoder(names.get("harm_text", "stub"), HARM_TEXT, seed))

    @classmethod
    def stub(cls, seed: int = 0) -> "EncoderSet":
        return cls.from_names({}, seed)

    def names(self) -> dict:
        return {"context": self.context.name, "image": self.image.name, "harm_text": self.harm_text.name}

    def _cached(self, key, fn):
        if key not in self._memo:
            self._memo[key] = fn()
        return self._memo[key]

    def encode_context(self, text: str) -> np.ndarray:
        return self._cached(("c", text), lambda: encode_context(self.context, text))

    def encode_image(self, image_ref) -> np.ndarray:
        return self._cached(("i", str(image_ref)), lambda: encode_image(self.image, image_ref))

    def encode_harm_text(self, ocr_text: str, entity: str) -> np.ndarray:
        return self._cached(("h", ocr_text, entity), lambda: encode_harm_text(self.harm_text, ocr_text, entity))
