import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drsp.core import (
    GATE_NORM_TOL,
    ChannelState,
    DensityMatrix,
    PureState,
    TargetState,
    UnitaryMatrix,
    apply_unitary,
    basis_state,
    fidelity,
    make_state,
    partial_trace,
    schmidt_decompose,
    schmidt_rank,
    tensor,
)

import oracles

S2 = 1 / np.sqrt(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
BELL = make_state((2, 2), [S2, 0, 0, S2])


def random_state(rng, dims):
    return PureState(dims, oracles.random_unit(rng, int(np.prod(dims))))


# -- make_state -------------------------------------------------------------


def test_make_state_basis():
    s = make_state((2,), (1, 0))
    assert s.dims == (2,)
    np.testing.assert_array_equal(s.amplitudes, [1, 0])


def test_make_state_bell_norm():
    assert BELL.norm() == pytest.approx(1.0, abs=1e-15)


def test_make_state_renormalizes_random(rng):
    v = oracles.random_unit(rng, 9) * (1 + 5e-7)
    s = make_state((3, 3), v)
    assert abs(np.sqrt(np.sum(np.abs(s.amplitudes) ** 2)) - 1) < 1e-12


@pytest.mark.parametrize(
    "dims, amps",
    [((2, 2), [1, 0, 0]), ((2,), [0, 0]), ((1, 2), [1, 0]), ((2,), [1, 1])],
    ids=["length", "zero", "dim<2", "far-from-unit"],
)
def test_make_state_rejects(dims, amps):
    with pytest.raises(ValueError):
        make_state(dims, amps)


def test_state_is_immutable():
    with pytest.raises(ValueError):
        BELL.amplitudes[0] = 0


def test_index_convention():
    s = basis_state((3, 3, 3), (1, 2, 0))
    assert np.flatnonzero(s.amplitudes)[0] == (1 * 3 + 2) * 3 + 0


# -- tensor -------------------------------------------------------------------


def test_tensor_zero_zero():
    z = basis_state((2,), (0,))
    np.testing.assert_array_equal(tensor(z, z).amplitudes, [1, 0, 0, 0])


def test_tensor_channel_with_ancilla():
    ch = make_state((2, 2), [0.6, 0, 0, 0.8])
    out = tensor(ch, basis_state((2,), (0,)))
    expected = np.zeros(8)
    expected[0b000] = 0.6
    expected[0b110] = 0.8
    assert out.dims == (2, 2, 2)
    np.testing.assert_allclose(out.amplitudes, expected, atol=1e-15)


def test_tensor_norm_multiplicative(rng):
    out = tensor(random_state(rng, (3, 3)), random_state(rng, (3,)))
    assert abs(out.norm() - 1) < 1e-12
    assert out.dims == (3, 3, 3)


# -- apply_unitary ----------------------------------------------------------------


def test_identity_is_noop(rng):
    s = random_state(rng, (2, 3, 2))
    out = apply_unitary(s, UnitaryMatrix(np.eye(6)), [1, 2])
    np.testing.assert_allclose(out.amplitudes, s.amplitudes, atol=1e-15)


def test_x_on_first_qubit():
    out = apply_unitary(basis_state((2, 2), (0, 0)), UnitaryMatrix(X), [0])
    np.testing.assert_array_equal(out.amplitudes, [0, 0, 1, 0])


def walkthrough_gates(x0, x1):
    """The d = 2 gates exactly as written out in the two-qubit walkthrough."""
    mag, th = abs(x1), np.angle(x1)
    u_a = np.array([[x0, -mag * np.exp(-1j * th)], [mag * np.exp(1j * th), x0]])
    p_ac = np.diag([1, -np.exp(2j * th), 1, 1])
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    return u_a, p_ac, cnot


def test_qubit_walkthrough_chain_against_dense_oracle():
    alpha, beta, x0, x1 = 0.6, 0.8, 0.6, 0.8
    u_a, p_ac, cnot = walkthrough_gates(x0, x1)
    dims = (2, 2, 2)
    start = tensor(make_state((2, 2), [alpha, 0, 0, beta]), basis_state((2,), (0,)))

    s = start
    for u, targets in [(cnot, [0, 2]), (u_a, [0]), (p_ac, [0, 2]), (cnot, [0, 1]), (cnot, [1, 0])]:
        s = apply_unitary(s, UnitaryMatrix(u), targets)

    # dense oracle: independent basis-loop embedding, 8x8 products
    v = start.amplitudes.copy()
    for u, targets in [(cnot, [0, 2]), (u_a, [0]), (p_ac, [0, 2]), (cnot, [0, 1]), (cnot, [1, 0])]:
        v = oracles.embed(dims, u, targets) @ v
    np.testing.assert_allclose(s.amplitudes, v, atol=1e-12)

    rho_b = partial_trace(s, 1).entries
    np.testing.assert_allclose(rho_b, np.outer([0.6, 0.8], [0.6, 0.8]), atol=1e-12)
    assert schmidt_rank(s, [1]) == 1


def test_apply_unitary_matches_embedding(rng):
    dims = (2, 3, 4)
    s = random_state(rng, dims)
    for targets in ([2, 0], [1], [0, 1, 2], [2, 1]):
        n = int(np.prod([dims[t] for t in targets]))
        q, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
        out = apply_unitary(s, UnitaryMatrix(q), targets)
        np.testing.assert_allclose(out.amplitudes, oracles.embed(dims, q, targets) @ s.amplitudes, atol=1e-12)


def test_apply_unitary_errors():
    s = basis_state((2, 2), (0, 0))
    with pytest.raises(ValueError):
        apply_unitary(s, UnitaryMatrix(np.eye(4)), [0])
    with pytest.raises(ValueError):
        apply_unitary(s, UnitaryMatrix(np.eye(4)), [0, 0])
    with pytest.raises(IndexError):
        apply_unitary(s, UnitaryMatrix(np.eye(2)), [2])


def test_unitary_matrix_rejects_non_unitary():
    with pytest.raises(ValueError):
        UnitaryMatrix(np.array([[1, 1], [0, 1]]))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 5))
def test_norm_preserved_by_gates(seed, d):
    r = np.random.default_rng(seed)
    s = random_state(r, (d, d, d))
    q, _ = np.linalg.qr(r.standard_normal((d * d, d * d)) + 1j * r.standard_normal((d * d, d * d)))
    out = apply_unitary(s, UnitaryMatrix(q), [2, 0])
    assert abs(out.norm() - 1) < GATE_NORM_TOL


# -- partial trace / fidelity -----------------------------------------------------------


def test_partial_trace_product():
    rho = partial_trace(basis_state((2, 2), (0, 0)), 0)
    np.testing.assert_array_equal(rho.entries, [[1, 0], [0, 0]])


def test_partial_trace_bell_is_mixed():
    np.testing.assert_allclose(partial_trace(BELL, 1).entries, np.eye(2) / 2, atol=1e-15)


def test_partial_trace_index_error():
    with pytest.raises(IndexError):
        partial_trace(BELL, 2)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 6), e=st.integers(2, 6))
def test_tensor_then_trace_round_trip(seed, d, e):
    r = np.random.default_rng(seed)
    s, t = random_state(r, (d,)), random_state(r, (e,))
    rho = partial_trace(tensor(s, t), 0).entries
    np.testing.assert_allclose(rho, np.outer(s.amplitudes, s.amplitudes.conj()), atol=1e-10)


def test_fidelity_examples(rng):
    t = TargetState.from_amplitudes([0.6, 0.8j])
    assert fidelity(DensityMatrix.from_pure(t.amplitudes), t) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(DensityMatrix(2, np.eye(2) / 2), t) == pytest.approx(0.5, abs=1e-12)

    v = oracles.random_unit(rng, 3)
    w = oracles.random_unit(rng, 3)
    w = w - np.vdot(v, w) * v
    w /= np.linalg.norm(w)
    assert fidelity(DensityMatrix.from_pure(v), TargetState(w)) < 1e-12


def test_fidelity_dimension_mismatch():
    with pytest.raises(ValueError):
        fidelity(DensityMatrix(2, np.eye(2) / 2), TargetState.from_amplitudes([1, 0, 0]))


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix(2, np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        DensityMatrix(2, np.array([[0.5, 0.1], [0.3, 0.5]]))


# -- Schmidt ------------------------------------------------------------------


def test_schmidt_maximal():
    form = schmidt_decompose(ChannelState.diagonal([S2, S2]))
    np.testing.assert_allclose(form.coefficients, [S2, S2], atol=1e-15)


def test_schmidt_diag_06_08():
    ch = ChannelState.diagonal([0.6, 0.8])
    form = schmidt_decompose(ch)
    np.testing.assert_allclose(form.coefficients, [0.8, 0.6], atol=1e-15)
    assert np.max(np.abs(form.reconstruct() - ch.coefficients)) < 1e-10


def test_schmidt_random_3x3_norm(rng):
    form = schmidt_decompose(ChannelState.random(3, rng))
    assert abs(np.sum(form.coefficients ** 2) - 1) < 1e-10


@pytest.mark.parametrize("d", [2, 3, 4, 8])
def test_schmidt_reconstruction_many(d):
    r = np.random.default_rng(d)
    for _ in range(1000):
        ch = ChannelState.random(d, r)
        form = ch.schmidt
        assert np.max(np.abs(form.reconstruct() - ch.coefficients)) <= 1e-10
        assert np.all(np.diff(form.coefficients) <= 0)
        assert abs(np.sum(form.coefficients ** 2) - 1) < 1e-10


def test_schmidt_coefficients_match_eigen_oracle(rng):
    for d in (2, 3, 5):
        lam = ChannelState.random(d, rng).coefficients
        # singular values = sqrt of eigenvalues of the reduced state lam lam^dagger
        ev = np.sort(np.clip(np.linalg.eigvalsh(lam @ lam.conj().T), 0, None))[::-1]
        np.testing.assert_allclose(schmidt_decompose(ChannelState(lam)).coefficients, np.sqrt(ev), atol=1e-10)


def test_schmidt_clamps_tiny_values():
    form = schmidt_decompose(ChannelState.diagonal([1.0, 1e-14]))
    assert form.coefficients[1] == 0.0
    assert form.rank == 1


def test_schmidt_rank_examples():
    assert schmidt_rank(basis_state((2, 2), (0, 0)), [0]) == 1
    assert schmidt_rank(BELL, [1]) == 2


@pytest.mark.parametrize("d", [2, 3, 5, 8])
def test_schmidt_rank_maximal_and_product(d, rng):
    maximal = ChannelState.diagonal(np.ones(d) / np.sqrt(d)).as_state()
    assert schmidt_rank(maximal, [0]) == d
    prod = tensor(random_state(rng, (d,)), random_state(rng, (d,)))
    assert schmidt_rank(prod, [1]) == 1


def test_schmidt_rank_invalid_partition():
    s = basis_state((2, 2, 2), (0, 0, 0))
    with pytest.raises(ValueError):
        schmidt_rank(s, [])
    with pytest.raises(ValueError):
        schmidt_rank(s, [0, 1, 2])
    with pytest.raises(IndexError):
        schmidt_rank(s, [3])


def test_channel_constructors():
    ch = ChannelState.from_theta(np.pi / 6)
    np.testing.assert_allclose(np.diag(ch.coefficients), [0.5, np.sqrt(3) / 2])
    with pytest.raises(ValueError):
        ChannelState.from_matrix(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ChannelState.from_matrix(np.ones((2, 3)) / np.sqrt(6))
