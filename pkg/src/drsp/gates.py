"""Builders for the unitaries used by both preparation protocols.

Two-subsystem gates act on a pair ordered (first, second); the flat index of
|a, b> is a*d + b. Controlled gates take the control as the first factor
unless stated otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import NORM_TOL, TargetState, UnitaryMatrix

GATE_KINDS = (
    "controlled-add",
    "controlled-subtract",
    "controlled-phase",
    "branch-controlled",
    "completion",
    "filter",
)


@dataclass(frozen=True)
class GateSpec:
    """Descriptor of a gate as it appears in a protocol transcript."""

    kind: str
    d: int
    control_shift_map: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if any(not 0 <= k < self.d for k in self.control_shift_map):
            raise ValueError("shift map values must lie in [0, d)")

    @property
    def label(self) -> str:
        return self.kind


def identity_shift_map(d: int) -> tuple[int, ...]:
    return tuple(range(d))


def _check_shift_map(d: int, shift_map) -> tuple[int, ...]:
    if shift_map is None:
        return identity_shift_map(d)
    table = tuple(int(k) for k in shift_map)
    if len(table) != d or any(not 0 <= k < d for k in table):
        raise ValueError(f"shift map must have {d} entries in [0, {d})")
    return table


@lru_cache(maxsize=256)
def _controlled_add_cached(d: int, sign: int, table: tuple[int, ...]) -> UnitaryMatrix:
    u = np.zeros((d * d, d * d), dtype=complex)
    for m in range(d):
        for j in range(d):
            u[m * d + (j + sign * table[m]) % d, m * d + j] = 1.0
    return UnitaryMatrix(u)


def controlled_add(d: int, direction: str = "add", shift_map: Sequence[int] | None = None) -> UnitaryMatrix:
    """Permutation |m, j> -> |m, (j +/- k_m) mod d>; the first factor is the control."""
    if direction not in ("add", "subtract"):
        raise ValueError(f"direction must be 'add' or 'subtract', got {direction!r}")
    table = _check_shift_map(d, shift_map)
    return _controlled_add_cached(d, 1 if direction == "add" else -1, table)


def controlled_phase(d: int, phase_table) -> UnitaryMatrix:
    """Diagonal gate multiplying |s, k> by exp(i * phase_table[s][k])."""
    phases = np.asarray(phase_table, dtype=float)
    if phases.shape != (d, d):
        raise ValueError(f"phase table must be {d}x{d}")
    if not np.all(np.isfinite(phases)):
        raise ValueError("phase table has non-finite entries")
    return UnitaryMatrix(np.diag(np.exp(1j * phases.reshape(-1))))


def unitary_completion(v, column: int) -> UnitaryMatrix:
    """Unitary whose ``column``-th column is exactly ``v``.

    Built as phase * Householder reflection sending e_column to v / phase,
    where phase = v[column] / |v[column]| (or 1 when that entry vanishes).
    The output is a deterministic function of (v, column).
    """
    v = np.asarray(v, dtype=complex).reshape(-1)
    d = v.size
    if not 0 <= column < d:
        raise IndexError(f"column {column} out of range for dimension {d}")
    if abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
        raise ValueError("vector to complete is not a unit vector")
    anchor = v[column]
    phase = anchor / abs(anchor) if abs(anchor) > 0 else 1.0
    y = v / phase
    u = -y
    u[column] += 1.0
    uu = np.vdot(u, u).real
    h = np.eye(d, dtype=complex)
    if uu > 1e-30:
        h -= 2.0 * np.outer(u, u.conj()) / uu
    mat = phase * h
    mat[:, column] = v
    return UnitaryMatrix(mat)


def shifted_target(target: TargetState, m: int) -> np.ndarray:
    """Vector with entries x_{(s + m) mod d}."""
    return np.roll(target.amplitudes, -m)


def information_unitary(target: TargetState) -> UnitaryMatrix:
    """Alice's single-qudit step: |0> -> sum_s x_s |s>."""
    return unitary_completion(target.amplitudes, 0)


def branch_controlled_unitary(target: TargetState) -> UnitaryMatrix:
    """Block-diagonal W = sum_m w_m (x) |m><m| on (A, C), with C as control.

    Block m is the completion of the m-shifted target into column m, so the
    branch with A = |m> maps it to sum_s x_{s+m} |s>.
    """
    d = target.d
    w = np.zeros((d * d, d * d), dtype=complex)
    for m in range(d):
        block = unitary_completion(shifted_target(target, m), m).entries
        # rows (s, m), cols (a, m)
        w[m::d, m::d] = block
    return UnitaryMatrix(w)


def branch_correction(target: TargetState) -> UnitaryMatrix:
    """The phase step: W (U_info^dagger (x) I), so that it follows the information unitary."""
    d = target.d
    w = branch_controlled_unitary(target).entries
    u0 = information_unitary(target).entries
    return UnitaryMatrix(w @ np.kron(u0.conj().T, np.eye(d)))


def filter_unitary(alpha: complex, beta: complex) -> UnitaryMatrix:
    """Two-qubit filter on (A, C) used by the conventional scheme.

    Identity on A = 0; on A = 1 the rotation [[r, s], [-s, r]] with
    r = |alpha|/|beta| and s = sqrt(1 - r^2), which sends |1 1>_AC to
    r|1 1> + s|1 0>.
    """
    a, b = abs(alpha), abs(beta)
    if abs(a * a + b * b - 1.0) > NORM_TOL:
        raise ValueError("|alpha|^2 + |beta|^2 must equal 1")
    if b == 0.0:
        raise ValueError("beta must be nonzero")
    if a > b + NORM_TOL:
        raise ValueError("filter requires |alpha| <= |beta|")
    r = min(a / b, 1.0)
    s = np.sqrt(max(0.0, 1.0 - r * r))
    u = np.eye(4, dtype=complex)
    u[2:, 2:] = [[r, s], [-s, r]]
    return UnitaryMatrix(u)


def shift_gate(d: int, k: int = 1) -> UnitaryMatrix:
    """Single-qudit |j> -> |(j + k) mod d>."""
    return UnitaryMatrix(np.roll(np.eye(d, dtype=complex), k, axis=0))
