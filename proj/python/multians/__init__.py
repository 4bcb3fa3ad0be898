from multians._core import (
    ComparabilityError,
    ConfigError,
    GoldRegime,
    GoldSpec,
    InputError,
    ParsedOutput,
    TagSchema,
    brier,
    canonicalize,
    ece,
    evaluate_file,
    grpo_advantages,
    multi_brier,
    ngram_overlap,
    overlap_file,
    parse,
    r_correct,
    r_rlcr_multi,
    r_rlcr_single,
    r_rlvr_multi,
    render,
    score,
    score_file,
    set_confidence,
    simulate,
    unique_count,
    validate_format,
    verify_set,
)

__all__ = [name for name in dir() if not name.startswith("_")]
