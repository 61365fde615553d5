"""Python bindings for frameprobe."""

from ._frameprobe import (
    FrameprobeError,
    auc,
    best_threshold,
    bootstrap_auc,
    canonicalize,
    chance_freeform,
    chance_mcqa,
    classify,
    edit_similarity,
    extract_title,
    match_title,
    max_renyi_k,
    parse_mcqa,
    partition,
    renyi_entropy,
    report,
    run,
    validate,
    write_mock_backends,
    write_synthetic_corpus,
)

__all__ = [
    "FrameprobeError",
    "auc",
    "best_threshold",
    "bootstrap_auc",
    "canonicalize",
    "chance_freeform",
    "chance_mcqa",
    "classify",
    "edit_similarity",
    "extract_title",
    "match_title",
    "max_renyi_k",
    "parse_mcqa",
    "partition",
    "renyi_entropy",
    "report",
    "run",
    "validate",
    "write_mock_backends",
    "write_synthetic_corpus",
]
