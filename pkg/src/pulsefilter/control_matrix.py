r"""Frequency-domain control matrices and filter functions.

Functions
---------
:func:`single_pulse_control_matrix`
    :math:`\mathcal{B}_{\alpha k}(\omega)` of one pulse from its segments.
:func:`concatenate`
    Control matrix of a sequence from the control matrices of its parts.
:func:`concatenate_periodic`
    Control matrix of ``G`` repetitions of a pulse in ``O(log G)`` products.
:func:`fidelity_filter_function`, :func:`generalized_filter_function`,
:func:`pulse_correlation_filter_function`
    Filter functions derived from a control matrix.
:func:`filter_function`
    Fidelity filter function directly from a pulse, picking the Liouville
    or the Hilbert-space (conjugation) route by dimension.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._backend import get_kernels
from ._kernels_py import segment_integral
from .basis import liouville_representation
from .errors import (BasisMismatchError, GridMismatchError, ResourceLimitError,
                     ShapeError, ValidationError)
from .pulse import PulseSequence, grid_key

__all__ = [
    "ControlMatrix",
    "single_pulse_control_matrix",
    "concatenate",
    "concatenate_pulses",
    "concatenate_periodic",
    "fidelity_filter_function",
    "generalized_filter_function",
    "pulse_correlation_filter_function",
    "noise_operators_hilbert",
    "filter_function",
    "HILBERT_THRESHOLD",
    "MAX_ARRAY_BYTES",
]

#: Dimension above which :func:`filter_function` uses the Hilbert-space route.
HILBERT_THRESHOLD = 16
#: Largest array the generalized filter functions may allocate.
MAX_ARRAY_BYTES = 2 * 1024 ** 3
# frequencies below this smallest singular value of (1 - e^{iωT}Q) use the explicit sum
PERIODIC_SINGULAR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ControlMatrix:
    r"""Control matrix :math:`\mathcal{B}_{\alpha k}(\omega)`.

    Attributes
    ----------
    values : ndarray, shape (n_noise, d**2, n_omega)
    omega : ndarray, shape (n_omega,)
    noise_ids : tuple of str
    source : str
        Short provenance note (how it was computed).
    """

    values: np.ndarray
    omega: np.ndarray
    noise_ids: tuple
    source: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        omega = np.asarray(self.omega, dtype=float)
        if vals.ndim != 3 or vals.shape[2] != omega.size or vals.shape[0] != len(self.noise_ids):
            raise ShapeError(f"control matrix shape {vals.shape} inconsistent with "
                             f"{len(self.noise_ids)} sources and {omega.size} frequencies")
        vals.flags.writeable = False
        if omega.flags.writeable:
            omega = omega.copy()
            omega.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "noise_ids", tuple(self.noise_ids))

    @property
    def n_noise(self) -> int:
        return self.values.shape[0]

    def filter_function(self) -> np.ndarray:
        return fidelity_filter_function(self)


def _check_omega(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 1 or omega.size == 0:
        raise ValidationError("frequency grid must be a nonempty 1-d array")
    if not np.all(np.isfinite(omega)):
        raise ValidationError("frequency grid contains non-finite values")
    return omega


def _segment_data(p: PulseSequence):
    """Per segment: eigenvalues, ``s·V†BV`` and transposed ``V†Q C Q†V``.

    Yields ``(g, eigvals, bbar, cbar_t)`` with ``cbar_t[k, i, j] = C̄_k[j, i]``.
    """
    w, V = p.eigensystems()
    _, Q = p.propagators()
    C = p.basis.elements
    B = p.noise_ops
    s = p.noise_sens
    for g in range(p.n_segments):
        Vh = V[g].conj().T
        W = Vh @ Q[g]
        cbar_t = np.ascontiguousarray((W @ C @ W.conj().T).transpose(0, 2, 1))
        bbar = np.ascontiguousarray((Vh @ B @ V[g]) * s[:, g, None, None])
        yield g, np.ascontiguousarray(w[g]), bbar, cbar_t


def single_pulse_control_matrix(p: PulseSequence, omega, *, backend: str | None = None,
                                threads: int = 1, cache: bool = True) -> ControlMatrix:
    r"""Control matrix of a single pulse.

    .. math::

        \mathcal{B}_{\alpha k}(\omega) = \sum_g s_\alpha^{(g)} e^{i\omega t_{g-1}}
            \mathrm{tr}\bigl([\bar{B}_\alpha^{(g)}\circ I^{(g)}(\omega)]
            \bar{C}_k^{(g)}\bigr)

    Parameters
    ----------
    p : PulseSequence
    omega : array_like
        Angular frequencies. ``0`` is allowed.
    backend : {'cython', 'python'}, optional
        Kernel backend; default is the active one.
    threads : int
        Split the grid into this many chunks evaluated concurrently. The
        result does not depend on the value.
    cache : bool
        Look up and store the result in the pulse's cache.
    """
    omega = _check_omega(omega)
    if cache:
        hit = p.cached_control_matrix(omega)
        if hit is not None:
            return hit
    kern = get_kernels(backend)
    K = len(p.basis)
    out = np.zeros((p.n_noise, K, omega.size), complex)
    if p.n_noise:
        t = p.t
        dt = p.dt
        omega_c = np.ascontiguousarray(omega)
        if threads > 1 and omega.size > 1:
            segments = list(_segment_data(p))
            chunks = np.array_split(np.arange(omega.size), min(threads, omega.size))

            def work(idx):
                part = np.zeros((p.n_noise, K, idx.size), complex)
                om = np.ascontiguousarray(omega_c[idx])
                for g, w, bbar, cbar_t in segments:
                    kern.cm_accumulate(part, w, bbar, cbar_t, om, dt[g], t[g])
                return idx, part

            with ThreadPoolExecutor(max_workers=threads) as pool:
                for idx, part in pool.map(work, chunks):
                    out[:, :, idx] = part
        else:
            for g, w, bbar, cbar_t in _segment_data(p):
                kern.cm_accumulate(out, w, bbar, cbar_t, omega_c, dt[g], t[g])
    cm = ControlMatrix(out, omega, p.noise_ids, "single_pulse")
    if cache:
        p.cache_control_matrix(cm)
        cm = p.cached_control_matrix(omega)
    return cm


# ---------------------------------------------------------------------------
# sequences
# ---------------------------------------------------------------------------
def _check_compatible(pulses: Sequence[PulseSequence]):
    if len(pulses) == 0:
        raise ValidationError("need at least one pulse")
    first = pulses[0]
    for p in pulses[1:]:
        if p.dim != first.dim:
            raise ShapeError("pulses act on different dimensions")
        if not p.basis.same_as(first.basis):
            raise BasisMismatchError("pulses use different bases")
        if p.noise_ids != first.noise_ids:
            raise ValidationError(
                f"noise sources differ: {p.noise_ids} vs {first.noise_ids}")
        if p.noise_ops is not first.noise_ops and not np.allclose(
                p.noise_ops, first.noise_ops, rtol=0, atol=1e-12):
            raise ValidationError("noise operators differ between pulses")


def concatenate_pulses(pulses: Sequence[PulseSequence]) -> PulseSequence:
    """Time-domain concatenation (segments merged, control operators unified)."""
    pulses = list(pulses)
    _check_compatible(pulses)
    first = pulses[0]
    ops, ids, slots = [], [], []
    for p in pulses:
        slot = []
        for op, cid in zip(p.control_ops, p.control_ids):
            for m, existing in enumerate(ops):
                if existing is op or np.array_equal(existing, op):
                    slot.append(m)
                    break
            else:
                ops.append(op)
                ids.append(cid if cid not in ids else f"{cid}_{len(ids)}")
                slot.append(len(ops) - 1)
        slots.append(slot)
    n_seg = sum(p.n_segments for p in pulses)
    coeffs = np.zeros((len(ops), n_seg))
    pos = 0
    for p, slot in zip(pulses, slots):
        for row, m in enumerate(slot):
            coeffs[m, pos:pos + p.n_segments] += p.control_coeffs[row]
        pos += p.n_segments
    sens = np.concatenate([p.noise_sens for p in pulses], axis=1)
    dt = np.concatenate([p.dt for p in pulses])
    return PulseSequence(np.array(ops) if ops else None, coeffs, first.noise_ops, sens,
                         dt, first.basis, noise_ids=first.noise_ids, control_ids=ids)


def _shared_grid(pulses, omega):
    if omega is not None:
        return _check_omega(omega)
    keys = None
    grids = {}
    for p in pulses:
        these = {grid_key(g): g for g in p.cached_grids()}
        grids.update(these)
        keys = set(these) if keys is None else keys & set(these)
    if not keys:
        raise GridMismatchError("pulses share no cached frequency grid; pass omega")
    if len(keys) > 1:
        raise GridMismatchError("pulses share several cached grids; pass omega")
    return grids[keys.pop()]


def _sequence_terms(pulses, omega):
    """Per pulse ``e^{iωt_{g-1}} B^{(g)}(ω) Q^{(g-1)}`` as an ``(G, n, K, n_omega)`` array."""
    basis = pulses[0].basis
    d = pulses[0].dim
    cumulative = np.empty((len(pulses), d, d), complex)
    cumulative[0] = np.eye(d)
    for g in range(1, len(pulses)):
        cumulative[g] = pulses[g - 1].total_propagator @ cumulative[g - 1]
    liouville = liouville_representation(cumulative, basis)
    offsets = np.concatenate([[0.0], np.cumsum([p.duration for p in pulses])[:-1]])
    terms = []
    for g, p in enumerate(pulses):
        cm = single_pulse_control_matrix(p, omega)
        rotated = (cm.values.transpose(0, 2, 1) @ liouville[g]).transpose(0, 2, 1)
        terms.append(np.exp(1j * omega * offsets[g]) * rotated)
    return np.array(terms)


def concatenate(pulses: Sequence[PulseSequence], omega=None, *, cache: bool = True):
    r"""Concatenate pulses and their control matrices.

    .. math::

        \mathcal{B}(\omega) = \sum_g e^{i\omega t_{g-1}}
            \mathcal{B}^{(g)}(\omega)\mathcal{Q}^{(g-1)}

    Parameters
    ----------
    pulses : sequence of PulseSequence
        In temporal order. Uncached control matrices are computed.
    omega : array_like, optional
        Grid; defaults to the single grid all pulses have cached.

    Returns
    -------
    pulse : PulseSequence
        Merged pulse with the composite control matrix cached.
    cm : ControlMatrix
    """
    pulses = list(pulses)
    _check_compatible(pulses)
    omega = _shared_grid(pulses, omega)
    merged = concatenate_pulses(pulses)
    if len(pulses) == 1:
        cm = single_pulse_control_matrix(pulses[0], omega)
    else:
        values = _sequence_terms(pulses, omega).sum(axis=0)
        cm = ControlMatrix(values, omega, pulses[0].noise_ids, "concatenate")
    if cache:
        merged.cache_control_matrix(cm)
    return merged, cm


def _matrix_power(M: np.ndarray, n: int) -> np.ndarray:
    """Batched ``M**n`` by repeated squaring."""
    result = np.broadcast_to(np.eye(M.shape[-1], dtype=M.dtype), M.shape).copy()
    base = M.copy()
    while n:
        if n & 1:
            result = result @ base
        n >>= 1
        if n:
            base = base @ base
    return result


def _geometric_sum(M: np.ndarray, n: int) -> np.ndarray:
    r"""Batched :math:`\sum_{g=0}^{n-1} M^g` by binary doubling."""
    eye = np.broadcast_to(np.eye(M.shape[-1], dtype=M.dtype), M.shape)
    total = np.zeros_like(M)
    power = eye.copy()
    for bit in bin(n)[2:]:
        # S_{2k} = S_k + M^k S_k
        total = total + power @ total
        power = power @ power
        if bit == "1":
            # S_{k+1} = S_k + M^k
            total = total + power
            power = power @ M
    return total


def concatenate_periodic(p: PulseSequence, repetitions: int, omega=None, *,
                         return_pulse: bool = False, tol: float = PERIODIC_SINGULAR_TOL):
    r"""Control matrix of ``repetitions`` back-to-back copies of ``p``.

    Uses :math:`\mathcal{B}^{(1)}(\mathbb{1}-M)^{-1}(\mathbb{1}-M^G)` with
    :math:`M = e^{i\omega T}\mathcal{Q}^{(1)}`; frequencies where the smallest
    singular value of :math:`\mathbb{1}-M` is below ``tol`` use the
    geometric sum evaluated by doubling instead.

    For bases whose first element is the identity the calculation runs on
    the traceless block: :math:`\mathcal{Q}^{(1)}` is block diagonal there
    and the control matrix has no identity column, so the always-singular
    identity direction at :math:`\omega T \in 2\pi\mathbb{Z}` drops out.
    """
    G = int(repetitions)
    if G < 1:
        raise ValidationError("repetitions must be a positive integer")
    if omega is None:
        grids = p.cached_grids()
        if len(grids) != 1:
            raise GridMismatchError("pass omega (no unique cached grid)")
        omega = grids[0]
    omega = _check_omega(omega)
    cm1 = single_pulse_control_matrix(p, omega)
    if G == 1:
        values = cm1.values.copy()
    else:
        start = 1 if p.basis.has_identity_first else 0
        R = p.total_liouville[start:, start:]
        M = np.exp(1j * omega * p.duration)[:, None, None] * R[None]
        eye = np.eye(M.shape[-1])
        A = eye - M
        smallest = np.linalg.svd(A, compute_uv=False)[:, -1]
        regular = smallest >= tol
        S = np.empty_like(M)
        if np.any(regular):
            MG = _matrix_power(M[regular], G)
            S[regular] = np.linalg.solve(A[regular], eye - MG)
        if np.any(~regular):
            S[~regular] = _geometric_sum(M[~regular], G)
        values = np.zeros_like(cm1.values)
        block = cm1.values[:, start:, :].transpose(2, 0, 1)  # (w, a, k)
        values[:, start:, :] = (block @ S).transpose(1, 2, 0)
    cm = ControlMatrix(values, omega, p.noise_ids, f"periodic x{G}")
    if return_pulse:
        merged = concatenate_pulses([p] * G)
        merged.cache_control_matrix(cm)
        return merged, cm
    return cm


# ---------------------------------------------------------------------------
# filter functions
# ---------------------------------------------------------------------------
def fidelity_filter_function(cm: ControlMatrix) -> np.ndarray:
    r""":math:`F_\alpha(\omega) = \sum_k |\mathcal{B}_{\alpha k}(\omega)|^2`, shape (n_noise, n_omega)."""
    v = cm.values
    return np.einsum("akw,akw->aw", v.conj(), v).real


def _guard(shape, what):
    nbytes = int(np.prod(shape, dtype=np.float64)) * 16
    if nbytes > MAX_ARRAY_BYTES:
        raise ResourceLimitError(
            f"{what} would need {nbytes / 1024 ** 3:.1f} GiB; use the contracted "
            "quantities (decay amplitudes, fidelity filter function) instead")


def generalized_filter_function(cm: ControlMatrix) -> np.ndarray:
    r""":math:`F_{\alpha\beta,kl}(\omega) = \mathcal{B}^*_{\alpha k}\mathcal{B}_{\beta l}`.

    Shape ``(n_noise, n_noise, d**2, d**2, n_omega)``.
    """
    n, K, W = cm.values.shape
    _guard((n, n, K, K, W), "generalized filter function")
    v = cm.values
    return np.einsum("akw,blw->abklw", v.conj(), v)


def pulse_correlation_filter_function(pulses: Sequence[PulseSequence], omega=None, *,
                                      traced: bool = False) -> np.ndarray:
    r"""Pulse correlation filter functions :math:`F^{(gg')}`.

    Parameters
    ----------
    pulses : sequence of PulseSequence
    omega : array_like, optional
    traced : bool
        If true return the fidelity-type trace over ``k = l`` and
        ``α = β``, shape ``(G, G, n_noise, n_omega)``. Off-diagonal pulse
        pairs can be negative in real part.

    Returns
    -------
    ndarray
        Shape ``(G, G, n_noise, n_noise, d**2, d**2, n_omega)`` unless
        ``traced``. Summing over both pulse indices gives the filter
        function of the whole sequence.
    """
    pulses = list(pulses)
    _check_compatible(pulses)
    omega = _shared_grid(pulses, omega)
    X = _sequence_terms(pulses, omega)
    G, n, K, W = X.shape
    if traced:
        return np.einsum("hakw,gakw->ghaw", X.conj(), X)
    _guard((G, G, n, n, K, K, W), "pulse correlation filter function")
    return np.einsum("hakw,gblw->ghabklw", X.conj(), X)


def noise_operators_hilbert(p: PulseSequence, omega) -> np.ndarray:
    r"""Frequency-domain interaction-picture noise operators.

    :math:`\tilde{B}_\alpha(\omega) = \sum_g s_\alpha^{(g)} e^{i\omega t_{g-1}}
    Q_{g-1}^\dagger V^{(g)} [\bar{B}_\alpha^{(g)}\circ I^{(g)}(\omega)]
    V^{(g)\dagger} Q_{g-1}`, shape ``(n_noise, n_omega, d, d)``. Its basis
    expansion coefficients are the control matrix.
    """
    omega = _check_omega(omega)
    w, V = p.eigensystems()
    _, Q = p.propagators()
    B = p.noise_ops
    t, dt, s = p.t, p.dt, p.noise_sens
    out = np.zeros((p.n_noise, omega.size, p.dim, p.dim), complex)
    for g in range(p.n_segments):
        Vh = V[g].conj().T
        W = Vh @ Q[g]
        bbar = (Vh @ B @ V[g]) * s[:, g, None, None]
        integral = segment_integral(w[g], omega, dt[g])
        inner = bbar[:, None] * integral[None]
        phase = np.exp(1j * omega * t[g])[None, :, None, None]
        out += phase * (W.conj().T @ inner @ W)
    return out


def filter_function(p: PulseSequence, omega, *, method: str = "auto",
                    threshold: int | None = None) -> np.ndarray:
    """Fidelity filter function of a pulse.

    Parameters
    ----------
    method : {'auto', 'liouville', 'hilbert'}
        ``'auto'`` uses the Hilbert-space route when ``p.dim`` exceeds
        ``threshold`` (default :data:`HILBERT_THRESHOLD`).
    """
    if threshold is None:
        threshold = HILBERT_THRESHOLD
    if method == "auto":
        method = "hilbert" if p.dim > threshold else "liouville"
    if method == "liouville":
        return fidelity_filter_function(single_pulse_control_matrix(p, omega))
    if method == "hilbert":
        ops = noise_operators_hilbert(p, omega)
        return np.einsum("awij,awij->aw", ops.conj(), ops).real
    raise ValidationError(f"unknown method {method!r}")
