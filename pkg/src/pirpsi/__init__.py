"""Multi-message private information retrieval with private side information."""

from .capacity import converse_bound, dpsi, verify_reduction_identity
from .errors import PirError, UsageError
from .protocol import Library, Params, SideInfo, decode, generate_queries, run_exchange

__all__ = [
    "Library",
    "Params",
    "PirError",
    "SideInfo",
    "UsageError",
    "converse_bound",
    "decode",
    "dpsi",
    "generate_queries",
    "run_exchange",
    "verify_reduction_identity",
]
