"""taxolite: windowed, LLM-assisted quality evaluation for concept taxonomies."""

from .analysis import (
    AnnotationRecord,
    CorrelationReport,
    HumanAnnotationSet,
    correlate,
    fleiss_kappa,
    join_scores,
    pearson_r,
    render_report,
)
from .backends import (
    BackendConfig,
    HttpBackend,
    MockBackend,
    ScriptedBackend,
    TokenUsage,
    estimate_tokens,
    make_backend,
)
from .detectors import (
    DETECTOR_NAMES,
    DetectorContext,
    DetectorResult,
    Lexicon,
    LexiconKind,
    default_fuzzy_lexicon,
    detect_anomaly,
    detect_cluster,
    detect_cycle,
    detect_fuzzy,
    detect_modular,
    detect_redundant,
    detect_reverse,
    detect_semantic,
    load_lexicon,
    run_detector,
)
from .embeddings import HashEmbedding, VectorTable, label_vector, load_word_vectors
from .errors import TaxoliteError
from .metrics import EvalUnit, MetricKind, PromptBundle, PromptMode, build_prompt, extract_units
from .scoring import PenaltyParams, RunReport, apply_penalty, run_evaluation
from .selection import SubtreeSlice, SubtreeWindow, atomic_slices, compute_window, select_subtrees
from .taxonomy import (
    ConceptNode,
    Taxonomy,
    TaxonomyFormat,
    TaxonomyStats,
    TransformKind,
    TransformSpec,
    compute_stats,
    parse_taxonomy,
    random_taxonomy,
    serialize,
    transform,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "BackendConfig",
    "ConceptNode",
    "CorrelationReport",
    "DETECTOR_NAMES",
    "DetectorContext",
    "DetectorResult",
    "EvalUnit",
    "HashEmbedding",
    "HttpBackend",
    "HumanAnnotationSet",
    "Lexicon",
    "LexiconKind",
    "MetricKind",
    "MockBackend",
    "PenaltyParams",
    "PromptBundle",
    "PromptMode",
    "RunReport",
    "ScriptedBackend",
    "SubtreeSlice",
    "SubtreeWindow",
    "Taxonomy",
    "TaxonomyFormat",
    "TaxonomyStats",
    "TaxoliteError",
    "TokenUsage",
    "TransformKind",
    "TransformSpec",
    "VectorTable",
    "apply_penalty",
    "atomic_slices",
    "build_prompt",
    "compute_stats",
    "compute_window",
    "correlate",
    "default_fuzzy_lexicon",
    "detect_anomaly",
    "detect_cluster",
    "detect_cycle",
    "detect_fuzzy",
    "detect_modular",
    "detect_redundant",
    "detect_reverse",
    "detect_semantic",
    "estimate_tokens",
    "extract_units",
    "fleiss_kappa",
    "join_scores",
    "label_vector",
    "load_lexicon",
    "load_word_vectors",
    "make_backend",
    "parse_taxonomy",
    "pearson_r",
    "random_taxonomy",
    "render_report",
    "run_detector",
    "run_evaluation",
    "select_subtrees",
    "serialize",
    "transform",
]
