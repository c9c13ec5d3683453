"""Dataset construction: records, candidates, context retrieval, sampling, agreement and statistics."""

from .agreement import KappaResult, fleiss_kappa
from .candidates import EntityLexicon, LexiconEntry, LexiconMatcher, extract_candidates
from .context import ContextCache, ReplaySearchClient, SearchResult, fetch_context, load_search_client
from .records import (
    ContextDoc,
    MemeRecord,
    TargetInstance,
    read_instances,
    read_manifest,
    validate_manifest,
    write_instances,
    write_manifest,
)
from .sampling import (
    assign_scenario,
    build_all_instances,
    build_test_instances,
    build_training_instances,
    lexical_similarity,
    sample_negatives,
)
from .stats import CorpusStats, corpus_stats

__all__ = [
    "ContextCache", "ContextDoc", "CorpusStats", "EntityLexicon", "KappaResult", "LexiconEntry",
    "LexiconMatcher", "MemeRecord", "ReplaySearchClient", "SearchResult", "TargetInstance",
    "assign_scenario", "build_all_instances", "build_test_instances", "build_training_instances",
    "corpus_stats", "extract_candidates", "fetch_context", "fleiss_kappa", "lexical_similarity",
    "load_search_client", "read_instances", "read_manifest", "sample_negatives", "validate_manifest",
    "write_instances", "write_manifest",
]
