"""Exact two-party set intersection from compressed linear sketches."""

from .decoder import DecoderState, Outcome, delta, median_delta, mp_decode, revert, ssmp_decode
from .ids import IdArray
from .matrix import MatrixSpec, batch_supports, check_expander, check_rip1, column_support
from .sketch import Residue, Sketch, encode_set, residue_between, update

__version__ = "0.1.0"

__all__ = [
    "DecoderState",
    "IdArray",
    "MatrixSpec",
    "Outcome",
    "Residue",
    "Sketch",
    "batch_supports",
    "check_expander",
    "check_rip1",
    "column_support",
    "delta",
    "encode_set",
    "median_delta",
    "mp_decode",
    "residue_between",
    "revert",
    "ssmp_decode",
    "update",
]
