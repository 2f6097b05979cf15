"""Remote state preparation over a shared pure bipartite channel.

The register is always (A, B, C): A and C start with Alice, B with Bob.
Two pipelines are provided:

* ``run_optimal_drsp`` -- ancilla coupling, the information unitary and the
  branch-controlled correction on Alice's side, transmission of A, two
  controlled shifts on Bob's side, then computational-basis measurement of
  C and A. Bob's qudit ends in the target state whatever the outcomes.
* ``run_conventional_rsp`` -- the two-qubit filter scheme that restores a
  maximally entangled pair with probability 2*alpha^2 and fails otherwise.

Measurement draws come from ``rng.keyed_uniform(seed, stream)`` so each run
is a pure function of (channel, target, seed).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import gates
from .core import (
    RANK_TOL,
    ChannelState,
    DensityMatrix,
    PureState,
    TargetState,
    UnitaryMatrix,
    apply_unitary,
    basis_state,
    fidelity,
    partial_trace,
    schmidt_rank,
    tensor,
)
from .measurement import _sample_fixed, marginal_probabilities, measure_qudit, project
from .rng import draw

log = logging.getLogger(__name__)

A, B, C = 0, 1, 2
LABELS = ("A", "B", "C")
INDEX = {label: i for i, label in enumerate(LABELS)}
ALICE, BOB = "Alice", "Bob"
PARTIES = (ALICE, BOB)
EVENT_KINDS = ("gate", "transmission", "classical", "measurement")
INITIAL_OWNER = {"A": ALICE, "B": BOB, "C": ALICE}
MAX_ENTANGLED_TOL = 1e-10


class InvariantViolation(ArithmeticError):
    """A protocol-level numerical guarantee failed; indicates a bug, not bad input."""


# -- ledger ---------------------------------------------------------------


@dataclass(frozen=True)
class LedgerEvent:
    step: int
    party: str
    kind: str
    subsystems: tuple[str, ...]
    payload: str = ""
    recipient: str | None = None

    def to_line(self) -> str:
        return "\t".join([str(self.step), self.party, self.kind, ",".join(self.subsystems), self.payload])


def _other(party: str) -> str:
    return BOB if party == ALICE else ALICE


@dataclass
class OwnershipLedger:
    initial_owner: dict[str, str] = field(default_factory=lambda: dict(INITIAL_OWNER))
    events: list[LedgerEvent] = field(default_factory=list)

    def gate(self, step: int, party: str, subsystems: Sequence[str], name: str) -> None:
        self.events.append(LedgerEvent(step, party, "gate", tuple(subsystems), name))

    def transmit(self, step: int, party: str, subsystem: str, recipient: str) -> None:
        self.events.append(LedgerEvent(step, party, "transmission", (subsystem,), subsystem, recipient))

    def classical(self, step: int, party: str, recipient: str, about: str, value: int) -> None:
        self.events.append(LedgerEvent(step, party, "classical", (about,), str(value), recipient))

    def measurement(self, step: int, party: str, subsystem: str, outcome: int) -> None:
        self.events.append(LedgerEvent(step, party, "measurement", (subsystem,), str(outcome)))

    @property
    def owner(self) -> dict[str, str]:
        """Ownership after all recorded transmissions."""
        owner = dict(self.initial_owner)
        for ev in self.events:
            if ev.kind == "transmission" and ev.recipient is not None:
                owner[ev.subsystems[0]] = ev.recipient
        return owner

    def to_transcript(self) -> str:
        return "".join(ev.to_line() + "\n" for ev in self.events)

    @classmethod
    def from_transcript(cls, text: str, initial_owner: dict[str, str] | None = None) -> "OwnershipLedger":
        ledger = cls(dict(initial_owner or INITIAL_OWNER))
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"line {lineno}: expected 5 tab-separated fields, got {len(parts)}")
            step, party, kind, subs, payload = parts
            if kind not in EVENT_KINDS:
                raise ValueError(f"line {lineno}: unknown event kind {kind!r}")
            recipient = _other(party) if kind in ("transmission", "classical") else None
            ledger.events.append(LedgerEvent(int(step), party, kind, tuple(subs.split(",")), payload, recipient))
        return ledger


def locality_violations(ledger: OwnershipLedger) -> list[str]:
    owner = dict(ledger.initial_owner)
    transmitted: set[str] = set()
    problems = []
    for i, ev in enumerate(ledger.events):
        where = f"event {i} (step {ev.step}, {ev.kind})"
        if ev.party not in PARTIES:
            problems.append(f"{where}: unknown party {ev.party!r}")
            continue
        if ev.kind in ("gate", "measurement"):
            foreign = [s for s in ev.subsystems if owner.get(s) != ev.party]
            if foreign:
                problems.append(f"{where}: {ev.party} acts on {','.join(foreign)} owned by someone else")
            if ev.kind == "gate" and ev.party == BOB and "A" in ev.subsystems and "A" not in transmitted:
                problems.append(f"{where}: Bob gates A before it was transmitted")
        elif ev.kind == "transmission":
            (sub,) = ev.subsystems
            if owner.get(sub) != ev.party:
                problems.append(f"{where}: {ev.party} sends {sub} without owning it")
            if ev.recipient not in PARTIES or ev.recipient == ev.party:
                problems.append(f"{where}: bad recipient {ev.recipient!r}")
            else:
                owner[sub] = ev.recipient
                transmitted.add(sub)
        elif ev.kind == "classical":
            if ev.recipient not in PARTIES or ev.recipient == ev.party:
                problems.append(f"{where}: classical message {ev.party} -> {ev.recipient}")
        else:
            problems.append(f"{where}: unknown event kind")
    return problems


def assert_locality(ledger: OwnershipLedger) -> bool:
    problems = locality_violations(ledger)
    for p in problems:
        log.warning("locality violation: %s", p)
    return not problems


# -- results ----------------------------------------------------------------


@dataclass
class ProtocolResult:
    protocol: str
    succeeded: bool
    outcomes: dict[str, int]
    bob_state: DensityMatrix
    fidelity_to_target: float
    trace: tuple[PureState, ...]
    trace_labels: tuple[str, ...]
    ledger: OwnershipLedger

    def state(self, label: str) -> PureState:
        return self.trace[self.trace_labels.index(label)]


# -- channel preprocessing --------------------------------------------------


def schmidt_normalize_channel(channel: ChannelState) -> tuple[ChannelState, UnitaryMatrix, UnitaryMatrix]:
    """Diagonal channel D and local unitaries with (alice (x) bob) D == channel.

    In coefficient-matrix form: channel = alice @ D @ bob^T. A channel that
    is already diagonal keeps its order and only has its phases moved into
    Alice's correction; anything else goes through the SVD (descending).
    """
    d = channel.d
    if channel.is_diagonal():
        lam = np.diag(channel.coefficients)
        mags = np.abs(lam)
        phases = np.where(mags > 0, lam / np.where(mags > 0, mags, 1.0), 1.0)
        return ChannelState(np.diag(mags).astype(complex)), UnitaryMatrix(np.diag(phases)), UnitaryMatrix(np.eye(d))
    form = channel.schmidt
    diag = ChannelState(np.diag(form.coefficients).astype(complex))
    return diag, form.left, UnitaryMatrix(form.right.entries.conj())


def _prepare_register(channel: ChannelState, alice: UnitaryMatrix, bob: UnitaryMatrix, ledger, step: int) -> PureState:
    """Channel (x) |0>_C with both local Schmidt rotations undone."""
    state = tensor(channel.as_state(), basis_state((channel.d,), (0,)))
    state = apply_unitary(state, alice.dagger, [A])
    state = apply_unitary(state, bob.dagger, [B])
    if ledger is not None:
        ledger.gate(step, ALICE, ["A"], "schmidt-rotation")
        ledger.gate(step, BOB, ["B"], "schmidt-rotation")
    return state


# -- deterministic protocol ---------------------------------------------------


def drsp_evolve(state: PureState, target: TargetState, ledger: OwnershipLedger | None = None,
                step0: int = 0) -> list[PureState]:
    """Unitary part of the deterministic scheme on (A, B, C) with C = |0>.

    Returns the five states after: ancilla coupling, information unitary,
    branch correction, Bob's A->B shift, Bob's B->A subtraction.
    """
    d = target.d
    add = gates.controlled_add(d, "add")
    sub = gates.controlled_add(d, "subtract")
    states = []

    def gate(st, u, targets, step, party, name):
        out = apply_unitary(st, u, targets)
        if ledger is not None:
            ledger.gate(step0 + step, party, [LABELS[t] for t in targets], name)
        states.append(out)
        return out

    st = gate(state, add, [A, C], 0, ALICE, "controlled-add")
    st = gate(st, gates.information_unitary(target), [A], 1, ALICE, "information-unitary")
    st = gate(st, gates.branch_correction(target), [A, C], 2, ALICE, "branch-correction")
    if ledger is not None:
        ledger.transmit(step0 + 3, ALICE, "A", BOB)
    st = gate(st, add, [A, B], 3, BOB, "controlled-add")
    gate(st, sub, [B, A], 4, BOB, "controlled-subtract")
    return states


def _drsp_measure(state: PureState, seed: int, stream0: int, ledger, step: int) -> tuple[dict[str, int], PureState]:
    c, _, state = measure_qudit(state, C, draw(seed, stream0))
    a, _, state = measure_qudit(state, A, draw(seed, stream0 + 1))
    if ledger is not None:
        ledger.measurement(step, ALICE, "C", c)
        ledger.classical(step, ALICE, BOB, "C", c)
        ledger.measurement(step, BOB, "A", a)
    return {"C": c, "A": a}, state


def _check_inputs(channel: ChannelState, target: TargetState) -> None:
    if channel.d != target.d:
        raise ValueError(f"channel dimension {channel.d} does not match target dimension {target.d}")


DRSP_LABELS = ("phi0", "phi1", "phi2", "phi3", "phi4")


def run_optimal_drsp(channel: ChannelState, target: TargetState, seed: int) -> ProtocolResult:
    _check_inputs(channel, target)
    ledger = OwnershipLedger()
    _, alice, bob = schmidt_normalize_channel(channel)
    start = _prepare_register(channel, alice, bob, ledger, 0)
    trace = drsp_evolve(start, target, ledger)
    outcomes, final = _drsp_measure(trace[-1], seed, 0, ledger, 5)
    rho = partial_trace(final, B)
    return ProtocolResult("drsp", True, outcomes, rho, fidelity(rho, target), tuple(trace), DRSP_LABELS, ledger)


def verify_factorization(state: PureState, bob_index: int, tol: float = RANK_TOL) -> bool:
    if state.n_subsystems < 2:
        raise ValueError("factorization needs at least two subsystems")
    if not 0 <= bob_index < state.n_subsystems:
        raise IndexError(f"subsystem {bob_index} out of range")
    return schmidt_rank(state, [bob_index], tol) <= 1


# -- conventional protocol ------------------------------------------------------

_X = np.array([[0, 1], [1, 0]], dtype=complex)
CONVENTIONAL_LABELS = ("psi0", "psi1", "psi2", "restored")


def _ascending_qubit_channel(channel: ChannelState):
    """Schmidt form of a two-qubit channel with the smaller coefficient on |00>."""
    diag, alice, bob = schmidt_normalize_channel(channel)
    c = np.abs(np.diag(diag.coefficients))
    if c[0] > c[1]:
        x = UnitaryMatrix(_X)
        alice, bob, c = alice @ x, bob @ x, c[::-1]
    return float(c[0]), float(c[1]), alice, bob


def conventional_filter_states(channel: ChannelState, ledger: OwnershipLedger | None = None) -> list[PureState]:
    """States after C_AC, after the filter, and after the second C_AC (pre-measurement)."""
    if channel.d != 2:
        raise ValueError("the conventional scheme is defined for qubits only")
    alpha, beta, alice, bob = _ascending_qubit_channel(channel)
    st = _prepare_register(channel, alice, bob, ledger, 0)
    cnot = gates.controlled_add(2, "add")
    out = []
    for step, (u, name) in enumerate([(cnot, "controlled-add"), (gates.filter_unitary(alpha, beta), "filter"),
                                      (cnot, "controlled-add")], 1):
        st = apply_unitary(st, u, [A, C])
        if ledger is not None:
            ledger.gate(step, ALICE, ["A", "C"], name)
        out.append(st)
    return out


def conventional_success_probability(channel: ChannelState) -> float:
    """P(C = 0) read off the pre-measurement amplitudes."""
    return float(marginal_probabilities(conventional_filter_states(channel)[-1], C)[0])


def _is_maximally_entangled(state: PureState) -> bool:
    rho = partial_trace(state, A).entries
    return bool(np.max(np.abs(rho - np.eye(rho.shape[0]) / rho.shape[0])) <= MAX_ENTANGLED_TOL)


def run_conventional_rsp(channel: ChannelState, target: TargetState, seed: int) -> ProtocolResult:
    _check_inputs(channel, target)
    if channel.d != 2:
        raise ValueError("the conventional scheme is defined for qubits only")
    ledger = OwnershipLedger()
    trace = conventional_filter_states(channel, ledger)
    c, _, restored = measure_qudit(trace[-1], C, draw(seed, 0))
    ledger.measurement(4, ALICE, "C", c)
    ledger.classical(4, ALICE, BOB, "C", c)
    trace.append(restored)
    labels = CONVENTIONAL_LABELS
    outcomes = {"filter": c}
    if c == 0:
        if not _is_maximally_entangled(restored):
            raise InvariantViolation("filter success did not restore a maximally entangled pair")
        delivery = drsp_evolve(restored, target, ledger, step0=5)
        trace.extend(delivery)
        labels = labels + DRSP_LABELS
        more, final = _drsp_measure(delivery[-1], seed, 1, ledger, 10)
        outcomes.update(more)
    else:
        final = restored
    rho = partial_trace(final, B)
    return ProtocolResult("conventional", c == 0, outcomes, rho, fidelity(rho, target), tuple(trace), labels, ledger)


def theoretical_success_probability(kind: str, channel: ChannelState) -> float:
    if kind == "drsp":
        return 1.0
    if kind != "conventional":
        raise ValueError(f"unknown protocol kind {kind!r}")
    if channel.d != 2:
        raise ValueError("the conventional success formula is for qubit channels")
    alpha = float(np.min(channel.schmidt.coefficients))
    return 2.0 * alpha * alpha


# -- batched Monte Carlo ------------------------------------------------------------
# These reproduce the per-seed outcomes of the run_* functions exactly while
# evolving the state once per (channel, target).


def _outcome_fidelities(state: PureState, target: TargetState, order: Sequence[int]) -> dict[tuple[int, ...], float]:
    table = {}

    def walk(st, prefix):
        if len(prefix) == len(order):
            table[prefix] = fidelity(partial_trace(st, B), target)
            return
        probs = marginal_probabilities(st, order[len(prefix)])
        for k in np.flatnonzero(probs > 0):
            _, nxt = project(st, order[len(prefix)], int(k))
            walk(nxt, prefix + (int(k),))

    walk(state, ())
    return table


def _fidelities_for(rows: np.ndarray, table: dict[tuple[int, ...], float], d: int) -> np.ndarray:
    lookup = np.full(d ** rows.shape[1], np.nan)
    for key, f in table.items():
        lookup[np.ravel_multi_index(key, (d,) * len(key))] = f
    flat = np.ravel_multi_index(tuple(rows.T), (d,) * rows.shape[1]) if len(rows) else np.zeros(0, dtype=int)
    return lookup[flat]


def drsp_batch(channel: ChannelState, target: TargetState, seeds: np.ndarray) -> np.ndarray:
    """Fidelity of Bob's qudit for each seed, as ``run_optimal_drsp`` would report it."""
    _check_inputs(channel, target)
    seeds = np.asarray(seeds, dtype=np.uint64)
    _, alice, bob = schmidt_normalize_channel(channel)
    pre = drsp_evolve(_prepare_register(channel, alice, bob, None, 0), target)[-1]
    rows = _sample_fixed(pre, [C, A], seeds)
    return _fidelities_for(rows, _outcome_fidelities(pre, target, [C, A]), target.d)


def conventional_batch(channel: ChannelState, target: TargetState, seeds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(success flags, fidelities) per seed, as ``run_conventional_rsp`` would report them."""
    _check_inputs(channel, target)
    seeds = np.asarray(seeds, dtype=np.uint64)
    pre = conventional_filter_states(channel)[-1]
    c = _sample_fixed(pre, [C], seeds)[:, 0]
    ok = c == 0
    fid = np.empty(len(seeds))
    if np.any(~ok):
        _, failed = project(pre, C, 1)
        fid[~ok] = fidelity(partial_trace(failed, B), target)
    if np.any(ok):
        _, restored = project(pre, C, 0)
        delivered = drsp_evolve(restored, target)[-1]
        rows = _sample_fixed(delivered, [C, A], seeds[ok], stream0=1)
        fid[ok] = _fidelities_for(rows, _outcome_fidelities(delivered, target, [C, A]), 2)
    return ok, fid
