"""Python bindings for the multiqa retrieval QA engine."""

try:
    from multiqa._multiqa import *  # noqa: F401,F403  (wheel layout)
    from multiqa._multiqa import __doc__ as _core_doc
except ImportError:  # development layout: _multiqa.so next to this package on sys.path
    from _multiqa import *  # noqa: F401,F403
    from _multiqa import __doc__ as _core_doc

__all__ = [
    "Passage",
    "SearchIndex",
    "chunk_document",
    "sha256",
    "normalize_answer",
    "normalize_for_match",
    "parse_answer_list",
    "is_abstention",
    "parse_verification_plan",
    "rrf_fuse",
    "score_question",
    "retention_decision",
    "run",
]
