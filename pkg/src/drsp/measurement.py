"""Projective measurement in the computational basis, shot sampling, and
single-qubit tomography from three Pauli bases."""
from __future__ import annotations

import csv
import io
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .core import DensityMatrix, PureState, apply_matrix
from .rng import derive_seed, derive_seeds, draw, keyed_uniform

Prep = Union[PureState, Callable[[int], PureState]]

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_SDG = np.diag([1, -1j])
# Applied before a Z measurement to read out X and Y respectively.
BASIS_CHANGES = {"z": np.eye(2, dtype=complex), "x": _H, "y": _H @ _SDG}


@dataclass
class OutcomeHistogram:
    shots: int
    counts: dict[tuple[int, ...], int] = field(default_factory=dict)

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to shots")

    def frequency(self, outcome: tuple[int, ...]) -> float:
        return self.counts.get(tuple(outcome), 0) / self.shots

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["outcome", "count", "frequency"])
        for outcome in sorted(self.counts):
            n = self.counts[outcome]
            w.writerow([":".join(str(i) for i in outcome), n, format(n / self.shots, ".12g")])
        return buf.getvalue()


def marginal_probabilities(state: PureState, index: int) -> np.ndarray:
    if not 0 <= index < state.n_subsystems:
        raise IndexError(f"subsystem {index} out of range")
    t = np.moveaxis(state.tensor_view(), index, 0).reshape(state.dims[index], -1)
    return np.sum(np.abs(t) ** 2, axis=1)


def _pick(cdf: np.ndarray, probs: np.ndarray, u):
    """Inverse-CDF lookup. Draws past a cdf total rounded below 1 fall on the last nonzero outcome."""
    k = np.searchsorted(cdf, u, side="right")
    last = int(np.flatnonzero(probs > 0)[-1])
    return np.minimum(k, last)


def project(state: PureState, index: int, outcome: int) -> tuple[float, PureState]:
    t = np.moveaxis(state.tensor_view(), index, 0).copy()
    keep = t[outcome].copy()
    t[:] = 0
    t[outcome] = keep
    p = float(np.sum(np.abs(keep) ** 2))
    if p == 0.0:
        raise ValueError(f"outcome {outcome} has zero probability")
    amps = np.moveaxis(t, 0, index).reshape(-1) / np.sqrt(p)
    return p, PureState(state.dims, amps)


def measure_qudit(state: PureState, index: int, random_draw: float) -> tuple[int, float, PureState]:
    """Measure subsystem ``index``; the outcome is the first k with cdf[k] > random_draw."""
    if not 0.0 <= random_draw < 1.0:
        raise ValueError("random draw must lie in [0, 1)")
    probs = marginal_probabilities(state, index)
    outcome = int(_pick(np.cumsum(probs), probs, random_draw))
    _, collapsed = project(state, index, outcome)
    return outcome, float(probs[outcome]), collapsed


def _sample_fixed(state: PureState, subsystems: Sequence[int], seeds: np.ndarray, stream0: int = 0) -> np.ndarray:
    """Sequential measurement of ``subsystems`` for every seed, grouped by outcome prefix.

    Shot i measures subsystems[j] with draw keyed_uniform(seeds[i], stream0 + j),
    so each row equals what repeated ``measure_qudit`` calls would give.
    """
    n = len(seeds)
    out = np.zeros((n, len(subsystems)), dtype=np.int64)

    def walk(st: PureState, level: int, rows: np.ndarray):
        if level == len(subsystems) or rows.size == 0:
            return
        idx = subsystems[level]
        probs = marginal_probabilities(st, idx)
        u = keyed_uniform(seeds[rows], stream0 + level)
        ks = _pick(np.cumsum(probs), probs, u)
        out[rows, level] = ks
        for k in np.unique(ks):
            _, collapsed = project(st, idx, int(k))
            walk(collapsed, level + 1, rows[ks == k])

    walk(state, 0, np.arange(n))
    return out


def _sample_one(prep: Callable[[int], PureState], subsystems: Sequence[int], shot_seed: int) -> tuple[int, ...]:
    # prep gets its own seed so its randomness never reuses the measurement draws
    st = prep(derive_seed(shot_seed, 0))
    result = []
    for j, idx in enumerate(subsystems):
        k, _, st = measure_qudit(st, idx, draw(shot_seed, j))
        result.append(k)
    return tuple(result)


def sample_counts(
    prep: Prep,
    subsystems: Sequence[int],
    shots: int,
    seed: int,
    workers: int = 1,
) -> OutcomeHistogram:
    """Histogram of joint outcomes over ``shots`` seeded repetitions.

    ``prep`` is either a fixed state or a callable mapping a seed to a state.
    Shot i measures with seed ``derive_seed(seed, i)`` and calls ``prep`` with
    a seed derived from that one. Results do not depend on ``workers``.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    subsystems = list(subsystems)
    seeds = derive_seeds(seed, shots)
    if isinstance(prep, PureState):
        rows = _sample_fixed(prep, subsystems, seeds)
        keys, counts = np.unique(rows, axis=0, return_counts=True)
        return OutcomeHistogram(shots, {tuple(int(x) for x in k): int(c) for k, c in zip(keys, counts)})

    shot_seeds = [int(s) for s in seeds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda s: _sample_one(prep, subsystems, s), shot_seeds))
    else:
        outcomes = [_sample_one(prep, subsystems, s) for s in shot_seeds]
    return OutcomeHistogram(shots, dict(sorted(Counter(outcomes).items())))


def _rotated(prep: Prep, u: np.ndarray, index: int) -> Prep:
    if isinstance(prep, PureState):
        return apply_matrix(prep, u, [index])
    return lambda s: apply_matrix(prep(s), u, [index])


def stokes_parameters(prep: Prep, shots_per_basis: int, seed: int, index: int = 0) -> np.ndarray:
    """Estimated (s_x, s_y, s_z), each as P(0) - P(1) in its rotated basis."""
    sample_state = prep if isinstance(prep, PureState) else prep(derive_seed(seed, 0))
    if sample_state.dims[index] != 2:
        raise ValueError("tomography is implemented for qubits only")
    out = []
    for b, basis in enumerate("xyz"):
        hist = sample_counts(_rotated(prep, BASIS_CHANGES[basis], index), [index], shots_per_basis,
                             derive_seed(seed, b + 1))
        out.append(hist.frequency((0,)) - hist.frequency((1,)))
    return np.array(out)


def nearest_density_matrix(m: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues of a Hermitian matrix and renormalize the trace."""
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    return (v * w) @ v.conj().T


def tomography_qubit(prep: Prep, shots_per_basis: int, seed: int, index: int = 0) -> DensityMatrix:
    if shots_per_basis < 1:
        raise ValueError("shots_per_basis must be >= 1")
    sx, sy, sz = stokes_parameters(prep, shots_per_basis, seed, index)
    rho = 0.5 * np.array([[1 + sz, sx - 1j * sy], [sx + 1j * sy, 1 - sz]])
    return DensityMatrix(2, nearest_density_matrix(rho))
