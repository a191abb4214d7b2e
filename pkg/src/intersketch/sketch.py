"""Linear sketches of sets and their residues.

A sketch is the length-l integer vector obtained by summing the matrix
columns of a set's elements.  Sketching is linear, so the coordinate-wise
difference of two parties' sketches measures only the symmetric difference
of their sets; shared elements cancel.

Counts are signed 64-bit even though batch sketches are nonnegative, so
streaming deletions and residues share one arithmetic path.
"""

from __future__ import annotations

import numpy as np

from .ids import IdArray
from .matrix import MatrixSpec, batch_supports, column_support


class SpecMismatchError(ValueError):
    """Two sketches from incompatible sessions were combined."""


class Sketch:
    """Measurement vector plus net element count."""

    __slots__ = ("values", "spec", "element_count")

    def __init__(self, values: np.ndarray, spec: MatrixSpec, element_count: int):
        values = np.asarray(values, dtype=np.int64)
        if values.shape != (spec.rows,):
            raise ValueError(f"values must have shape ({spec.rows},)")
        self.values = values
        self.spec = spec
        self.element_count = element_count

    @classmethod
    def zero(cls, spec: MatrixSpec) -> "Sketch":
        return cls(np.zeros(spec.rows, dtype=np.int64), spec, 0)

    def copy(self) -> "Sketch":
        return Sketch(self.values.copy(), self.spec, self.element_count)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Sketch):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.element_count == other.element_count
            and bool(np.array_equal(self.values, other.values))
        )

    def __repr__(self) -> str:
        return f"Sketch(l={self.spec.rows}, count={self.element_count}, sum={int(self.values.sum())})"


class Residue:
    """Signed measurement remainder; all-zero iff its L1 norm is zero."""

    __slots__ = ("values", "spec")

    def __init__(self, values: np.ndarray, spec: MatrixSpec):
        values = np.asarray(values, dtype=np.int64)
        if values.shape != (spec.rows,):
            raise ValueError(f"values must have shape ({spec.rows},)")
        self.values = values
        self.spec = spec

    def l1(self) -> int:
        return int(np.abs(self.values).sum())

    def copy(self) -> "Residue":
        return Residue(self.values.copy(), self.spec)


def encode_set(spec: MatrixSpec, elements: IdArray) -> Sketch:
    """Batch-encode a set of distinct ids.

    values[r] counts the elements whose column support contains row r, so the
    coordinate sum is ones_per_column * n.
    """
    values = np.zeros(spec.rows, dtype=np.int64)
    if len(elements):
        sup = batch_supports(spec, elements)
        np.add.at(values, sup.ravel(), 1)
    return Sketch(values, spec, len(elements))


def accumulate_supports(rows: int, supports: np.ndarray) -> np.ndarray:
    """Sum explicit column supports into a measurement vector (test helper)."""
    values = np.zeros(rows, dtype=np.int64)
    sup = np.asarray(supports, dtype=np.int64)
    if sup.size:
        np.add.at(values, sup.ravel(), 1)
    return values


def update(sketch: Sketch, element_id: int, sign: int) -> Sketch:
    """Streaming insert (+1) or delete (-1) of one element, in place.

    Multiset semantics: the caller owns set discipline, deletions of absent
    elements simply drive counts negative.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    sup = column_support(sketch.spec, element_id)
    sketch.values[sup] += sign
    sketch.element_count += sign
    return sketch


def residue_between(bob: Sketch, alice: Sketch) -> Residue:
    """Coordinate-wise bob - alice; requires identical matrix specs."""
    if bob.spec != alice.spec:
        raise SpecMismatchError(
            f"sketches come from different sessions: {bob.spec} vs {alice.spec}"
        )
    return Residue(bob.values - alice.values, bob.spec)
