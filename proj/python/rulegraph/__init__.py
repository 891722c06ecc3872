"""Rule propagation for weakly supervised named entity tagging.

The heavy lifting happens in the compiled ``_core`` module; this package
re-exports it.
"""

from ._core import (
    Corpus,
    DataError,
    NumericError,
    Span,
    Tagger,
    UsageError,
    config_hash,
    label_model_summary,
    load_config,
    load_corpus,
    load_seed_rules,
    parse_conll,
    parse_jsonl,
    run_ablation,
    run_stage,
    span_f1,
    spans_from_bio,
    stages,
    write_synthetic,
)

__all__ = [
    "Corpus",
    "DataError",
    "NumericError",
    "Span",
    "Tagger",
    "UsageError",
    "config_hash",
    "label_model_summary",
    "load_config",
    "load_corpus",
    "load_seed_rules",
    "parse_conll",
    "parse_jsonl",
    "run_ablation",
    "run_stage",
    "span_f1",
    "spans_from_bio",
    "stages",
    "write_synthetic",
]
