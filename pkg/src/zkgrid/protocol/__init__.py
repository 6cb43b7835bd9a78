"""Escrow protocol simulators and the marketplace cost calculators."""

from .econ import (
    EconError,
    EconParams,
    GriefPoint,
    as_fraction,
    cost_estimate,
    expected_gain_mp,
    format_currency,
    grief_thresholds,
    hoeffding_sample_size,
    retrieval_sample_size,
)
from .machines import (
    ACTIONS,
    KINDS,
    TERMINAL_STAGES,
    LedgerEntry,
    ProtocolError,
    ProtocolState,
    Transition,
    evaluate_predictions,
    legal_transitions,
    new_session,
    run_log,
    step,
)

__all__ = [
    "ACTIONS",
    "EconError",
    "EconParams",
    "GriefPoint",
    "KINDS",
    "LedgerEntry",
    "ProtocolError",
    "ProtocolState",
    "TERMINAL_STAGES",
    "Transition",
    "as_fraction",
    "cost_estimate",
    "evaluate_predictions",
    "expected_gain_mp",
    "format_currency",
    "grief_thresholds",
    "hoeffding_sample_size",
    "legal_transitions",
    "new_session",
    "retrieval_sample_size",
    "run_log",
    "step",
]
