"""Context retrieval: the meme text is the search query, the top hit's title and
first paragraph become the meme's context document.

Retrieved documents are cached in a JSON Lines file keyed by the normalised
query, so rebuilding a dataset replays the cache instead of searching again.
"""

from __future__ import annotations

import importlib
import json
import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Protocol

from ..errors import ConfigError, SearchError
from ..text import normalize
from .records import ContextDoc

log = logging.getLogger(__name__)


@dataclass
class SearchResult:
    title: str
    first_paragraph: str
    url: str = ""


class SearchClient(Protocol):
    def search(self, query: str) -> list[SearchResult]: ...


class ReplaySearchClient:
    """Serves recorded responses from a JSON file mapping query -> list of results.

    Queries are matched after normalisation.  Unknown queries raise
    :class:`SearchError`, like a failed live search would.
    """

    def __init__(self, responses: dict[str, list[dict]]):
        self.responses = {normalize(q): v for q, v in responses.items()}
        self.calls = 0

    @classmethod
    def from_file(cls, path) -> "ReplaySearchClient":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def search(self, query: str) -> list[SearchResult]:
        self.calls += 1
        hits = self.responses.get(normalize(query))
        if hits is None:
            raise SearchError(f"no recorded response for query {query!r}")
        return [SearchResult(h.get("title", ""), h.get("first_paragraph", h.get("snippet", "")),
                             h.get("url", "")) for h in hits]


def load_search_client(spec: str, base_dir: Path = Path(".")) -> SearchClient:
    """``replay:<path>`` or ``py:<module>:<factory>``."""
    if spec.startswith("replay:"):
        path = base_dir / spec[len("replay:"):]
        if not path.is_file():
            raise ConfigError(f"replay file not found: {path}")
        return ReplaySearchClient.from_file(path)
    if spec.startswith("py:"):
        try:
            module, attr = spec[3:].rsplit(":", 1)
            return getattr(importlib.import_module(module), attr)()
        except (ValueError, ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot load search client {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown search client {spec!r}")


class ContextCache:
    """Append-only JSON Lines store of context documents keyed by normalised query."""

    def __init__(self, path):
        self.path = Path(path)
        self._docs: dict[str, ContextDoc] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        doc = ContextDoc.from_dict(json.loads(line))
                        self._docs.setdefault(normalize(doc.query), doc)

    def __contains__(self, query: str) -> bool:
        return normalize(query) in self._docs

    def __len__(self):
        return len(self._docs)

    def get(self, query: str) -> Optional[ContextDoc]:
        return self._docs.get(normalize(query))

    def put(self, doc: ContextDoc) -> bool:
        """Store a document unless its key is already present; returns whether it was written."""
        key = normalize(doc.query)
        with self._lock:
            if key in self._docs:
                return False
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(doc.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
                fh.flush()
            self._docs[key] = doc
            return True


def fetch_context(ocr_text: str, client: Optional[SearchClient], cache: Optional[ContextCache]) -> ContextDoc:
    """Context document for a meme text; never raises on search failure.

    Failures come back flagged and are not cached, so a later run retries them.
    """
    if cache is not None:
        hit = cache.get(ocr_text)
        if hit is not None:
            return hit
    if client is None:
        return ContextDoc.failure(ocr_text)
    try:
        results = client.search(ocr_text)
        if not results:
            raise SearchError("empty result list")
    except Exception as exc:  # any client failure is recorded, never fatal for a batch
        log.warning("context search failed for %r: %s", ocr_text[:60], exc)
        return ContextDoc.failure(ocr_text)
    top = results[0]
    doc = ContextDoc(query=ocr_text, title=top.title, first_paragraph=top.first_paragraph,
                     source_url=top.url, fetched_at=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    if cache is not None:
        cache.put(doc)
        doc = cache.get(ocr_text)
    return doc
