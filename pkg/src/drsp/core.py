"""Dense statevector primitives for registers of d-level subsystems.

Index convention: subsystem 0 is the most significant digit. For a register
(A, B, C) of equal dimension d the ket |a, b, c> lives at flat index
(a*d + b)*d + c, which is exactly ``np.reshape(amps, dims)`` in C order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

# Tolerances. Tests read these, so change them here only.
NORM_TOL = 1e-10
INPUT_NORM_TOL = 1e-6
UNITARY_TOL = 1e-12
GATE_NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-10
SCHMIDT_CLAMP = 1e-12
RECONSTRUCTION_TOL = 1e-10
RANK_TOL = 1e-10
MAX_DIM = 32


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def _renormalize(amps: np.ndarray, what: str) -> np.ndarray:
    norm = np.linalg.norm(amps)
    if norm == 0.0:
        raise ValueError(f"{what} is the zero vector")
    if abs(norm - 1.0) > INPUT_NORM_TOL:
        raise ValueError(f"{what} norm {norm:.12g} is not within {INPUT_NORM_TOL} of 1")
    return amps / norm


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector over an ordered register."""

    dims: tuple[int, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ValueError("a register needs at least one subsystem")
        if any(d < 2 for d in dims):
            raise ValueError(f"every dimension must be >= 2, got {dims}")
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != int(np.prod(dims)):
            raise ValueError(f"{amps.size} amplitudes do not fit dims {dims}")
        if abs(np.linalg.norm(amps) - 1.0) > NORM_TOL:
            raise ValueError("state is not normalized")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def n_subsystems(self) -> int:
        return len(self.dims)

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    dim: int
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (self.dim, self.dim):
            raise ValueError(f"expected a {self.dim}x{self.dim} matrix, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > NORM_TOL:
            raise ValueError("density matrix trace is not 1")
        if np.min(np.linalg.eigvalsh(m)) < -NORM_TOL:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", _frozen(m))

    @classmethod
    def from_pure(cls, amplitudes) -> "DensityMatrix":
        v = np.asarray(amplitudes, dtype=complex)
        return cls(v.size, np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class TargetState:
    """The d amplitudes Alice wants to appear on Bob's qudit."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size < 2:
            raise ValueError("target needs at least two amplitudes")
        if abs(np.linalg.norm(amps) - 1.0) > NORM_TOL:
            raise ValueError("target is not normalized")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_amplitudes(cls, amplitudes: Sequence[complex]) -> "TargetState":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(_renormalize(amps, "target"))

    @classmethod
    def random(cls, d: int, rng: np.random.Generator) -> "TargetState":
        """Uniform draw from the complex unit sphere (normalized complex Gaussian)."""
        v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        return cls(v / np.linalg.norm(v))

    @property
    def d(self) -> int:
        return self.amplitudes.size

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.amplitudes)

    @property
    def phases(self) -> np.ndarray:
        return np.angle(self.amplitudes)


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    """Square complex matrix whose unitarity was checked on construction."""

    entries: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.entries, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError(f"unitary must be square, got shape {u.shape}")
        residual = unitarity_residual(u)
        if residual > UNITARY_TOL:
            raise ValueError(f"matrix is not unitary (residual {residual:.3g})")
        object.__setattr__(self, "entries", _frozen(u))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def dagger(self) -> "UnitaryMatrix":
        return UnitaryMatrix(self.entries.conj().T)

    def __matmul__(self, other: "UnitaryMatrix") -> "UnitaryMatrix":
        return UnitaryMatrix(self.entries @ other.entries)


def unitarity_residual(u: np.ndarray) -> float:
    """Max-entry norm of U^dagger U - I."""
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


@dataclass(frozen=True, eq=False)
class SchmidtForm:
    """coefficient matrix == left @ diag(coefficients) @ right^dagger."""

    coefficients: np.ndarray
    left: UnitaryMatrix
    right: UnitaryMatrix

    def reconstruct(self) -> np.ndarray:
        return self.left.entries @ np.diag(self.coefficients) @ self.right.entries.conj().T

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.coefficients))


@dataclass(frozen=True, eq=False)
class ChannelState:
    """Bipartite pure state sum_mn lambda_mn |m n>_AB shared by Alice (A) and Bob (B)."""

    coefficients: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.coefficients, dtype=complex)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise ValueError(f"channel coefficients must be square, got {lam.shape}")
        if lam.shape[0] < 2:
            raise ValueError("channel dimension must be >= 2")
        if abs(np.linalg.norm(lam) - 1.0) > NORM_TOL:
            raise ValueError("channel is not normalized")
        object.__setattr__(self, "coefficients", _frozen(lam))

    @classmethod
    def from_matrix(cls, matrix) -> "ChannelState":
        lam = np.asarray(matrix, dtype=complex)
        return cls(_renormalize(lam.reshape(-1), "channel").reshape(lam.shape))

    @classmethod
    def diagonal(cls, coefficients: Sequence[complex]) -> "ChannelState":
        c = np.asarray(coefficients, dtype=complex)
        return cls.from_matrix(np.diag(c))

    @classmethod
    def from_theta(cls, theta: float) -> "ChannelState":
        """sin(theta)|00> + cos(theta)|11>, the two-qubit family swept in theta."""
        return cls(np.diag([np.sin(theta), np.cos(theta)]).astype(complex))

    @classmethod
    def random(cls, d: int, rng: np.random.Generator) -> "ChannelState":
        lam = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        return cls(lam / np.linalg.norm(lam))

    @property
    def d(self) -> int:
        return self.coefficients.shape[0]

    @cached_property
    def schmidt(self) -> SchmidtForm:
        return schmidt_decompose(self)

    def as_state(self) -> PureState:
        return PureState((self.d, self.d), self.coefficients.reshape(-1))

    def is_diagonal(self, tol: float = SCHMIDT_CLAMP) -> bool:
        lam = self.coefficients
        return bool(np.max(np.abs(lam - np.diag(np.diag(lam)))) <= tol)


def make_state(dims: Sequence[int], amplitudes: Sequence[complex]) -> PureState:
    amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
    dims = tuple(int(d) for d in dims)
    if any(d < 2 for d in dims):
        raise ValueError(f"every dimension must be >= 2, got {dims}")
    if amps.size != int(np.prod(dims)):
        raise ValueError(f"{amps.size} amplitudes do not fit dims {dims}")
    return PureState(dims, _renormalize(amps, "state"))


def basis_state(dims: Sequence[int], digits: Sequence[int]) -> PureState:
    dims = tuple(dims)
    amps = np.zeros(int(np.prod(dims)), dtype=complex)
    amps[np.ravel_multi_index(tuple(digits), dims)] = 1.0
    return PureState(dims, amps)


def tensor(left: PureState, right: PureState) -> PureState:
    return PureState(left.dims + right.dims, np.kron(left.amplitudes, right.amplitudes))


def _check_targets(dims: tuple[int, ...], targets: Sequence[int]) -> tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise ValueError(f"repeated target index in {targets}")
    for t in targets:
        if not 0 <= t < len(dims):
            raise IndexError(f"subsystem {t} out of range for {len(dims)} subsystems")
    return targets


def apply_matrix(state: PureState, u: np.ndarray, targets: Sequence[int]) -> PureState:
    """Apply a square matrix to ``targets`` (in the given order) without re-checking it."""
    targets = _check_targets(state.dims, targets)
    sub = int(np.prod([state.dims[t] for t in targets]))
    if u.shape != (sub, sub):
        raise ValueError(f"operator of size {u.shape[0]} does not act on targets of size {sub}")
    n = state.n_subsystems
    rest = [i for i in range(n) if i not in targets]
    order = list(targets) + rest
    psi = np.transpose(state.tensor_view(), order).reshape(sub, -1)
    psi = u @ psi
    psi = psi.reshape([state.dims[i] for i in order])
    out = np.transpose(psi, np.argsort(order)).reshape(-1)
    return PureState(state.dims, out)


def apply_unitary(state: PureState, u: UnitaryMatrix, targets: Sequence[int]) -> PureState:
    out = apply_matrix(state, u.entries, targets)
    if abs(out.norm() - 1.0) > GATE_NORM_TOL:
        raise ArithmeticError("gate application did not preserve the norm")
    return out


def _bipartite_matrix(state: PureState, part: Sequence[int]) -> np.ndarray:
    part = _check_targets(state.dims, part)
    rest = [i for i in range(state.n_subsystems) if i not in part]
    if not part or not rest:
        raise ValueError("partition must be a nonempty proper subset of the subsystems")
    rows = int(np.prod([state.dims[i] for i in part]))
    return np.transpose(state.tensor_view(), list(part) + rest).reshape(rows, -1)


def partial_trace(state: PureState, keep: int) -> DensityMatrix:
    """Reduced density matrix of the single subsystem ``keep``."""
    if not 0 <= keep < state.n_subsystems:
        raise IndexError(f"subsystem {keep} out of range")
    if state.n_subsystems == 1:
        return DensityMatrix.from_pure(state.amplitudes)
    m = _bipartite_matrix(state, [keep])
    rho = m @ m.conj().T
    return DensityMatrix(state.dims[keep], (rho + rho.conj().T) / 2)


def fidelity(rho: DensityMatrix, target: TargetState) -> float:
    if rho.dim != target.d:
        raise ValueError(f"dimension mismatch: rho is {rho.dim}, target is {target.d}")
    v = target.amplitudes
    f = v.conj() @ rho.entries @ v
    if abs(f.imag) > NORM_TOL:
        raise ArithmeticError(f"fidelity has imaginary residue {f.imag:.3g}")
    return float(np.clip(f.real, 0.0, 1.0))


def schmidt_decompose(channel: ChannelState) -> SchmidtForm:
    u, s, vh = np.linalg.svd(channel.coefficients)
    s = np.where(s < SCHMIDT_CLAMP, 0.0, s)
    form = SchmidtForm(s, UnitaryMatrix(u), UnitaryMatrix(vh.conj().T))
    err = np.max(np.abs(form.reconstruct() - channel.coefficients))
    if err > RECONSTRUCTION_TOL:
        raise ArithmeticError(f"Schmidt reconstruction error {err:.3g}")
    return form


def schmidt_rank(state: PureState, partition: Iterable[int], tol: float = RANK_TOL) -> int:
    s = np.linalg.svd(_bipartite_matrix(state, list(partition)), compute_uv=False)
    return int(np.count_nonzero(s > tol))
