"""Sliced error correction with Cascade as the binary sub-protocol."""

from .cascade import CascadeParams, ReconciliationFailure, cascade_reconcile
from .sliced import CascadeSchedule, Direction, ReconciliationResult, reconcile_burst
from .slices import (
    GaussianPair,
    NoKeyPossible,
    SliceConfig,
    SlicePlan,
    build_slices,
    decode_slice,
    predicted_ber,
    slice_encode,
    slice_entropies,
)

__all__ = [
    "CascadeParams",
    "CascadeSchedule",
    "Direction",
    "GaussianPair",
    "NoKeyPossible",
    "ReconciliationFailure",
    "ReconciliationResult",
    "SliceConfig",
    "SlicePlan",
    "build_slices",
    "cascade_reconcile",
    "decode_slice",
    "predicted_ber",
    "reconcile_burst",
    "slice_encode",
    "slice_entropies",
]
