import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from pulsefilter import (PulseSequence, cumulant_function, cumulant_function_pauli,
                         decay_amplitudes, error_channel, error_transfer_matrix,
                         frequency_grid, frequency_shifts, ggm_basis, pauli_basis,
                         second_order_integral, single_pulse_control_matrix, tabulated, white)
from pulsefilter.errors import GridMismatchError

from conftest import SIGMA, random_hermitian, random_qubit_pulse


def commutator_cumulant(gamma, delta, basis):
    """Dense oracle: K_ij = tr(C_i K[C_j]) with nested commutators."""
    C = basis.elements
    comm = lambda A, B: A @ B - B @ A
    K = len(C)
    out = np.zeros((K, K), complex)
    for j in range(K):
        rho = C[j]
        acc = np.zeros_like(rho)
        for k in range(K):
            for l in range(K):
                if gamma[k, l]:
                    acc += gamma[k, l] * comm(C[k], comm(C[l], rho))
                if delta is not None and delta[k, l]:
                    acc += delta[k, l] * comm(comm(C[k], C[l]), rho)
        out[:, j] = -0.5 * np.einsum("iab,ba->i", C, acc)
    return out


def random_gamma(rng, K):
    x = rng.normal(size=(K, K))
    return x @ x.T


@pytest.mark.parametrize("make", [lambda: pauli_basis(1), lambda: ggm_basis(3),
                                  lambda: pauli_basis(2)])
def test_cumulant_matches_commutator_oracle(rng, make):
    basis = make()
    K = len(basis)
    gamma = random_gamma(rng, K)
    delta = rng.normal(size=(K, K))
    got = cumulant_function(gamma, delta, basis)
    np.testing.assert_allclose(got, commutator_cumulant(gamma, delta, basis), atol=1e-12)


def test_cumulant_zero_inputs():
    assert not np.any(cumulant_function(np.zeros((9, 9)), np.zeros((9, 9)), ggm_basis(3)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_pauli_shortcut_matches_general(seed):
    rng = np.random.default_rng(seed)
    gamma = random_gamma(rng, 4)
    delta = rng.normal(size=(4, 4))
    b = pauli_basis(1)
    np.testing.assert_allclose(cumulant_function_pauli(gamma, delta),
                               cumulant_function(gamma, delta, b), atol=1e-12)


def test_pure_dephasing_cumulant_and_channel():
    gamma = np.zeros((4, 4))
    gamma[3, 3] = g = 0.3
    K = cumulant_function_pauli(gamma)
    np.testing.assert_allclose(K, np.diag([0, -g, -g, 0]))
    np.testing.assert_allclose(error_transfer_matrix(K), np.diag([1, np.exp(-g), np.exp(-g), 1]),
                               atol=1e-15)
    np.testing.assert_allclose(error_transfer_matrix(K, "first_order"), np.eye(4) + K)


def test_pauli_cumulant_symmetric_without_shifts(rng):
    K = cumulant_function_pauli(random_gamma(rng, 4))
    np.testing.assert_allclose(K, K.T, atol=1e-15)


def test_cumulant_diagonal_independent_of_shifts(rng):
    b = ggm_basis(3)
    gamma = random_gamma(rng, 9)
    delta = rng.normal(size=(9, 9))
    with_shift = cumulant_function(gamma, delta, b)
    without = cumulant_function(gamma, None, b)
    np.testing.assert_allclose(np.diag(with_shift), np.diag(without), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), scale=st.floats(1e-3, 1.0))
def test_transfer_modes_differ_by_remainder_bound(seed, scale):
    rng = np.random.default_rng(seed)
    K = cumulant_function(random_gamma(rng, 9) * scale, None, ggm_basis(3))
    diff = np.linalg.norm(error_transfer_matrix(K) - error_transfer_matrix(K, "first_order"))
    nK = np.linalg.norm(K)
    assert diff <= nK ** 2 * np.exp(nK) / 2 + 1e-14


def test_transfer_borders_are_exact(rng):
    K = cumulant_function(random_gamma(rng, 9), rng.normal(size=(9, 9)), ggm_basis(3))
    U = error_transfer_matrix(K)
    e0 = np.eye(9)[0]
    assert np.array_equal(U[0], e0) and np.array_equal(U[:, 0], e0)


# decay amplitudes -----------------------------------------------------------------
def test_free_evolution_decay_amplitude_white():
    S0 = 0.01
    omega = frequency_grid(1e-4, 1e4, 40001, "log", symmetric=True)
    p = PulseSequence(None, None, [SIGMA[2] / 2], [[1]], [1.0], "pauli")
    gamma = decay_amplitudes(single_pulse_control_matrix(p, omega), white(S0, omega))
    # the grid stops at 1e4: the missing tail is about S0/(pi * 1e4)
    assert gamma[0, 0, 3, 3].real == pytest.approx(S0 / 2, rel=2e-4)
    off = gamma[0, 0].copy()
    off[3, 3] = 0
    assert np.abs(off).max() < 1e-15


def test_zero_spectrum_gives_zero_decay_and_shifts(rng):
    p = random_qubit_pulse(rng)
    omega = np.geomspace(1e-2, 1e2, 30)
    spec = white(0.0, omega, source_ids=p.noise_ids)
    assert not np.any(decay_amplitudes(single_pulse_control_matrix(p, omega), spec))
    assert not np.any(frequency_shifts(p, spec))


def test_decay_amplitudes_hermitian_with_cross_spectrum(rng):
    p = random_qubit_pulse(rng, noise=("x", "z"))
    omega = np.linspace(-10, 10, 301)
    vals = np.zeros((2, 2, omega.size), complex)
    vals[0, 0] = 1 / (1 + omega ** 2)
    vals[1, 1] = 2 / (1 + omega ** 2)
    vals[0, 1] = (0.3 + 0.4j) / (1 + omega ** 2)
    vals[1, 0] = vals[0, 1].conj()
    spec = tabulated(omega, vals, ["x", "z"])
    G = decay_amplitudes(single_pulse_control_matrix(p, omega), spec)
    np.testing.assert_allclose(G, G.conj().transpose(1, 0, 3, 2), atol=1e-12)


def test_decay_amplitudes_grid_mismatch(rng):
    p = random_qubit_pulse(rng)
    cm = single_pulse_control_matrix(p, np.geomspace(1e-2, 1e2, 30))
    spec = white(1.0, np.geomspace(1e-2, 1e2, 31), source_ids=p.noise_ids)
    with pytest.raises(GridMismatchError):
        decay_amplitudes(cm, spec)
    assert decay_amplitudes(cm, spec, interpolate=True).shape == (1, 1, 4, 4)


# second order segment integral ----------------------------------------------------
def nested_quadrature(a, b, T, nodes=80):
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = T * (x + 1) / 2
    total = 0j
    for si, wi in zip(s, w):
        u = si * (x + 1) / 2
        inner = np.sum(w * np.exp(1j * a * u)) * si / 2
        total += wi * np.exp(1j * b * si) * inner
    return total * T / 2


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), T=st.floats(0.05, 2.0))
def test_second_order_integral_matches_quadrature(seed, T):
    rng = np.random.default_rng(seed)
    eig = np.sort(rng.normal(size=3) * 3)
    omega = np.concatenate([rng.normal(size=3) * 5, [0.0]])
    I = second_order_integral(eig, omega, T)
    Om = (eig[:, None] - eig[None, :]).ravel()
    for wi, w in enumerate(omega):
        for x in range(9):
            for y in range(0, 9, 4):
                ref = nested_quadrature(w + Om[y], Om[x] - w, T)
                assert abs(I[wi, x, y] - ref) < 1e-10 * max(1, abs(ref))


# frequency shifts vs a time-domain double integral -----------------------------------
def lorentzian_oracle(p, gamma_c, sigma2, nodes=40):
    """Δ_kl = ∫dt1 ∫_0^{t1} dt2 σ² e^{-γ|t1-t2|} B_k(t1) B_l(t2), exactly from the
    correlation function that a Lorentzian spectrum transforms to."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    C = p.basis.elements
    H = p.control_hamiltonians()
    _, Q = p.propagators()

    def coeffs(g, tau):
        U = sla.expm(-1j * H[g] * tau) @ Q[g]
        Bt = U.conj().T @ p.noise_ops[0] @ U
        return np.einsum("ij,kji->k", Bt, C).real * p.noise_sens[0, g]

    def segment_nodes(g, lo, hi):
        ts = lo + (hi - lo) * (x + 1) / 2
        return ts, w * (hi - lo) / 2, np.array([coeffs(g, t - p.t[g]) for t in ts])

    K = len(C)
    delta = np.zeros((K, K))
    for g in range(p.n_segments):
        t1s, w1s, b1s = segment_nodes(g, p.t[g], p.t[g + 1])
        for t1, w1, b1 in zip(t1s, w1s, b1s):
            for h in range(g + 1):
                hi = t1 if h == g else p.t[h + 1]
                t2s, w2s, b2s = segment_nodes(h, p.t[h], hi)
                corr = sigma2 * np.exp(-gamma_c * (t1 - t2s))
                delta += w1 * np.outer(b1, (w2s * corr) @ b2s)
    return delta


def test_frequency_shifts_match_time_domain_oracle(rng):
    p = random_qubit_pulse(rng, n_seg=3, amplitude=2.0)
    gamma_c, sigma2 = 2.0, 0.05
    omega = frequency_grid(1e-4, 1e5, 20001, "log", symmetric=True)
    S = 2 * gamma_c * sigma2 / (gamma_c ** 2 + omega ** 2)
    spec = tabulated(omega, S, p.noise_ids)
    delta = frequency_shifts(p, spec)[0, 0]
    ref = lorentzian_oracle(p, gamma_c, sigma2)
    # the Lorentzian tail beyond the grid (1/ω²) limits agreement to ~1e-5
    np.testing.assert_allclose(delta.real, ref, atol=2e-5 * np.abs(ref).max())
    assert np.abs(delta.imag).max() < 1e-12


def test_shifts_one_sided_equals_two_sided(rng):
    p = random_qubit_pulse(rng, n_seg=2)
    pos = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 800)])
    sym = np.concatenate([-pos[:0:-1], pos])
    lor = lambda w: 1 / (1 + w ** 2)
    one = frequency_shifts(p, tabulated(pos, lor(pos), p.noise_ids))
    two = frequency_shifts(p, tabulated(sym, lor(sym), p.noise_ids))
    np.testing.assert_allclose(one, two.real, atol=1e-12)


def test_doubly_resonant_value():
    I = second_order_integral(np.zeros(2), np.array([0.0]), 0.7)
    np.testing.assert_allclose(I, 0.7 ** 2 / 2)


# assembled channel -------------------------------------------------------------------
@pytest.mark.parametrize("with_shifts", [False, True])
@pytest.mark.parametrize("mode", ["exact", "first_order"])
def test_error_channel_structure(rng, mode, with_shifts):
    p = random_qubit_pulse(rng, noise=("x", "z"))
    omega = np.concatenate([[0.0], np.geomspace(1e-2, 1e2, 200)])
    spec = white([1e-3, 2e-3], omega, source_ids=p.noise_ids)
    ch = error_channel(p, spec, mode=mode, with_shifts=with_shifts)
    e0 = np.eye(4)[0]
    assert np.array_equal(ch.transfer[0], e0) and np.array_equal(ch.transfer[:, 0], e0)
    summed = sum(ch.per_source.values())
    np.testing.assert_allclose(summed, ch.cumulant, atol=1e-14)
    general = cumulant_function(ch.gamma, ch.delta, p.basis)
    np.testing.assert_allclose(ch.cumulant, general, atol=1e-14)


def test_error_channel_general_dimension(rng):
    d = 3
    ops = [random_hermitian(rng, d) for _ in range(2)]
    p = PulseSequence(ops, rng.normal(size=(2, 3)), [random_hermitian(rng, d, True)],
                      [[1, 1, 1]], [0.3, 0.4, 0.5])
    omega = np.concatenate([[0.0], np.geomspace(1e-2, 1e2, 200)])
    ch = error_channel(p, white(1e-3, omega, source_ids=p.noise_ids), with_shifts=True)
    # unital and trace preserving, contractive
    assert np.array_equal(ch.transfer[0], np.eye(9)[0])
    assert np.linalg.norm(ch.transfer, 2) <= 1 + 1e-12
