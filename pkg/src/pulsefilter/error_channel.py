r"""Decay amplitudes, frequency shifts, cumulant function and error transfer matrix.

The second-order cumulant in the Liouville representation is

.. math::

    \mathcal{K}_{ij} = -\frac{1}{2}\sum_{\alpha\beta,kl}
        \bigl(f_{ijkl}\Delta_{\alpha\beta,kl} + g_{ijkl}\Gamma_{\alpha\beta,kl}\bigr)

with ``f`` and ``g`` built from the basis trace tensor, and the error
transfer matrix is :math:`\exp\mathcal{K}` (or :math:`\mathbb{1}+\mathcal{K}`
to first order).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from ._backend import get_kernels
from .basis import Basis
from .control_matrix import ControlMatrix, _segment_data, single_pulse_control_matrix
from .errors import NumericalError, ShapeError, ValidationError
from .pulse import PulseSequence
from .spectrum import Spectrum, trapezoid_weights

__all__ = [
    "ErrorChannel",
    "decay_amplitudes",
    "frequency_shifts",
    "second_order_integral",
    "cumulant_function",
    "cumulant_function_pauli",
    "error_transfer_matrix",
    "error_channel",
    "SINGULAR_RTOL",
]

#: Relative threshold below which a frequency sum is treated as exactly zero
#: in the second-order segment integral.
SINGULAR_RTOL = 1e-8
# |x·Δt| below this in the generic branch is evaluated by a 3x3 exponential
_NEAR_SINGULAR = 1e-3


def _weights(spec: Spectrum) -> np.ndarray:
    return trapezoid_weights(spec.omega) / (2 * np.pi)


def _finish(arr: np.ndarray, spec: Spectrum) -> np.ndarray:
    # one-sided grid: integral over the full line is 2 Re of the half line
    if spec.one_sided:
        return 2 * arr.real
    return arr


def decay_amplitudes(cm: ControlMatrix, spectrum: Spectrum, *,
                     interpolate: bool = False) -> np.ndarray:
    r"""Decay amplitudes :math:`\Gamma_{\alpha\beta,kl}`.

    .. math::

        \Gamma_{\alpha\beta,kl} = \int\frac{d\omega}{2\pi}\,
            \mathcal{B}^*_{\alpha k}(\omega)S_{\alpha\beta}(\omega)
            \mathcal{B}_{\beta l}(\omega)

    Parameters
    ----------
    cm : ControlMatrix
    spectrum : Spectrum
        Must be on the same grid (bitwise) and cover the same source ids,
        unless ``interpolate`` is set.

    Returns
    -------
    ndarray, shape (n_noise, n_noise, d**2, d**2)
        Real on one-sided grids; complex (Hermitian in ``(αk) <-> (βl)``)
        on two-sided grids.
    """
    spec = spectrum.matched_to(cm.omega, cm.noise_ids, interpolate=interpolate)
    w = _weights(spec)
    B = cm.values
    n, K, _ = B.shape
    gamma = np.zeros((n, n, K, K), complex)
    diagonal = spec.is_diagonal()
    for a in range(n):
        for b in range(n):
            if diagonal and a != b:
                continue
            gamma[a, b] = (B[a].conj() * (spec.values[a, b] * w)) @ B[b].T
    return _finish(gamma, spec)


def _stable_quotient(c, T):
    r""":math:`(e^{icT}-1)/c` evaluated as :math:`iT\,\mathrm{sinc}(cT/2)e^{icT/2}`."""
    x = c * T
    return 1j * T * np.sinc(x / (2 * np.pi)) * np.exp(0.5j * x)


def second_order_integral(eigvals, omega, dt, *, rtol: float = SINGULAR_RTOL) -> np.ndarray:
    r"""Nested segment integral :math:`I_{ijmn}(\omega)`.

    .. math::

        I_{ijmn}(\omega) = \int_0^{\Delta t}dt\,e^{i(\Omega_{ij}-\omega)t}
            \int_0^t dt'\,e^{i(\omega+\Omega_{mn})t'}

    Returns an array of shape ``(n_omega, d*d, d*d)`` indexed
    ``[w, i*d + j, m*d + n]``.

    With :math:`a = \omega+\Omega_{mn}` and :math:`b = \Omega_{ij}-\omega`:

    * generic: :math:`\frac{1}{a}\bigl[\frac{e^{ibT}-1}{b} - \frac{e^{i(a+b)T}-1}{a+b}\bigr]`
    * :math:`a = 0,\ b \neq 0`: :math:`\frac{1}{b}\bigl[\frac{e^{ibT}-1}{b} - iTe^{ibT}\bigr]`
    * :math:`a = b = 0`: :math:`T^2/2`

    A frequency sum counts as zero when it is below ``rtol`` times the
    largest of its two terms and :math:`1/\Delta t`. Generic-branch entries
    with :math:`|a\Delta t| < 10^{-3}` (where the difference quotient
    cancels) are evaluated exactly as an entry of the exponential of a 3x3
    triangular matrix.
    """
    eigvals = np.asarray(eigvals, dtype=float)
    omega = np.asarray(omega, dtype=float)
    T = float(dt)
    Om = (eigvals[:, None] - eigvals[None, :]).ravel()  # Omega_ij, index i*d + j
    w = omega[:, None, None]
    om_ij = Om[None, :, None]
    om_mn = Om[None, None, :]
    a = w + om_mn
    b = om_ij - w
    a, b = np.broadcast_arrays(a, b)
    inv_t = 1.0 / T
    a_zero = np.abs(a) <= rtol * np.maximum(np.maximum(np.abs(w), np.abs(om_mn)), inv_t)
    b_zero = np.abs(b) <= rtol * np.maximum(np.maximum(np.abs(w), np.abs(om_ij)), inv_t)

    out = np.empty(a.shape, complex)
    generic = ~a_zero
    ag, bg = a[generic], b[generic]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[generic] = (_stable_quotient(bg, T) - _stable_quotient(ag + bg, T)) / ag
    single = a_zero & ~b_zero
    bs = b[single]
    out[single] = (_stable_quotient(bs, T) - 1j * T * np.exp(1j * bs * T)) / bs
    out[a_zero & b_zero] = T * T / 2

    near = generic & (np.abs(a) * T < _NEAR_SINGULAR)
    if np.any(near):
        out[near] = _nested_exponential(a[near], b[near], T)
    return out


def _nested_exponential(a, b, T):
    # ∫_0^T ds e^{ibs} ∫_0^s du e^{iau} is the (0, 2) entry of
    # expm(T [[0, 1, 0], [0, ib, 1], [0, 0, i(a+b)]]).
    mats = np.zeros((a.size, 3, 3), complex)
    mats[:, 0, 1] = T
    mats[:, 1, 2] = T
    mats[:, 1, 1] = 1j * b * T
    mats[:, 2, 2] = 1j * (a + b) * T
    return sla.expm(mats)[:, 0, 2]


def frequency_shifts(p: PulseSequence, spectrum: Spectrum, omega=None, *,
                     interpolate: bool = False) -> np.ndarray:
    r"""Frequency shifts :math:`\Delta_{\alpha\beta,kl}`.

    Parameters
    ----------
    p : PulseSequence
    spectrum : Spectrum
    omega : array_like, optional
        Integration grid; defaults to the spectrum's grid.

    Returns
    -------
    ndarray, shape (n_noise, n_noise, d**2, d**2)
    """
    if omega is None:
        omega = spectrum.omega
    omega = np.asarray(omega, dtype=float)
    spec = spectrum.matched_to(omega, p.noise_ids, interpolate=interpolate)
    kern = get_kernels()
    weighted = spec.values * _weights(spec)  # (a, b, w)
    diagonal = spec.is_diagonal()
    n, K, d = p.n_noise, len(p.basis), p.dim
    W = omega.size
    delta = np.zeros((n, n, K, K), complex)
    cumulative = np.zeros((n, K, W), complex)
    t, dt = p.t, p.dt
    omega_c = np.ascontiguousarray(omega)
    pairs = [(a, b) for a in range(n) for b in range(n) if not (diagonal and a != b)]
    for g, eig, bbar, cbar_t in _segment_data(p):
        seg = np.zeros((n, K, W), complex)
        kern.cm_accumulate(seg, eig, bbar, cbar_t, omega_c, dt[g], t[g])
        # X[a, k, i*d+j] = s_a B̄_a[i, j] C̄_k[j, i]
        X = (bbar[:, None] * cbar_t[None]).reshape(n, K, d * d)
        integral = second_order_integral(eig, omega, dt[g])
        for a, b in pairs:
            delta[a, b] += (seg[a].conj() * weighted[a, b]) @ cumulative[b].T
            inner = integral @ X[b].T  # (w, ij, l)
            delta[a, b] += np.einsum("kx,wxl,w->kl", X[a], inner, weighted[a, b])
        cumulative += seg
    return _finish(delta, spec)


def _sum_sources(arr, K):
    arr = np.asarray(arr)
    if arr.ndim == 4:
        return arr.sum(axis=(0, 1))
    if arr.ndim != 2 or arr.shape != (K, K):
        raise ShapeError(f"expected shape ({K}, {K}) or (n, n, {K}, {K}), got {arr.shape}")
    return arr


def _maybe_real(K: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    scale = np.abs(K).max(initial=0.0)
    if np.abs(K.imag).max(initial=0.0) <= rtol * max(scale, 1e-300):
        return K.real.copy()
    return K


def cumulant_function(gamma, delta=None, basis: Basis | None = None, *,
                      per_source: bool = False) -> np.ndarray:
    r"""Cumulant function :math:`\mathcal{K}` from decay amplitudes and shifts.

    Parameters
    ----------
    gamma : ndarray, shape (d**2, d**2) or (n, n, d**2, d**2)
        Decay amplitudes; source pairs are summed unless ``per_source``.
    delta : ndarray, optional
        Frequency shifts with the same shape. Omitted means only the
        incoherent part is assembled.
    basis : Basis
    per_source : bool
        Return one cumulant per source pair, shape ``(n, n, d**2, d**2)``.

    Notes
    -----
    The contraction runs over the nonzero entries of the sparse trace tensor.
    For bases whose first element is the identity the first row and column
    are set to exactly zero. The result is cast to real when its imaginary
    part is negligible.
    """
    if basis is None:
        raise ValidationError("a basis is required")
    K = len(basis)
    if per_source:
        gamma = np.asarray(gamma)
        if gamma.ndim != 4:
            raise ShapeError("per_source needs gamma of shape (n, n, d**2, d**2)")
        out = np.empty(gamma.shape, complex)
        for a in range(gamma.shape[0]):
            for b in range(gamma.shape[1]):
                out[a, b] = cumulant_function(
                    gamma[a, b], None if delta is None else np.asarray(delta)[a, b], basis)
        return _maybe_real(out)
    gamma = _sum_sources(gamma, K)
    delta = None if delta is None else _sum_sources(delta, K)

    T = basis.trace_tensor()
    i0, i1, i2, i3 = T.indices.T  # T_{abce} with (a, b, c, e) = (i0, i1, i2, i3)
    t = T.values
    flat = np.zeros(K * K, complex)

    def add(row, col, vals):
        idx = row * K + col
        flat.real += np.bincount(idx, weights=vals.real, minlength=K * K)
        flat.imag += np.bincount(idx, weights=vals.imag, minlength=K * K)

    # -1/2 g_ijkl Γ_kl with g = T_klji - T_kjli - T_kilj + T_kijl
    add(i3, i2, -0.5 * t * gamma[i0, i1])
    add(i3, i1, 0.5 * t * gamma[i0, i2])
    add(i1, i3, 0.5 * t * gamma[i0, i2])
    add(i1, i2, -0.5 * t * gamma[i0, i3])
    if delta is not None:
        # -1/2 f_ijkl Δ_kl with f = T_klji - T_lkji - T_klij + T_lkij
        add(i3, i2, -0.5 * t * delta[i0, i1])
        add(i3, i2, 0.5 * t * delta[i1, i0])
        add(i2, i3, 0.5 * t * delta[i0, i1])
        add(i2, i3, -0.5 * t * delta[i1, i0])
    out = flat.reshape(K, K)
    if basis.has_identity_first:
        out[0, :] = 0
        out[:, 0] = 0
    return _maybe_real(out)


def cumulant_function_pauli(gamma, delta=None) -> np.ndarray:
    r"""Single-qubit cumulant function in the Pauli basis.

    :math:`\mathcal{K}_{ii} = -\sum_{k\neq i}\Gamma_{kk}` and, for
    :math:`i \neq j`, :math:`\mathcal{K}_{ij} = \Delta_{ji} - \Delta_{ij} + \Gamma_{ji}`;
    row and column 0 vanish. For the source-summed decay amplitudes
    :math:`\Gamma` is symmetric and the transpose is immaterial; for a
    single off-diagonal source pair it is not, and the transposed index is
    what the general contraction produces.
    """
    gamma = _sum_sources(gamma, 4)
    delta = None if delta is None else _sum_sources(delta, 4)
    g = np.asarray(gamma)[1:, 1:]
    out = np.zeros((4, 4), dtype=np.result_type(g, delta if delta is not None else 0.0))
    block = g.T - np.eye(3) * np.trace(g)
    if delta is not None:
        dl = np.asarray(delta)[1:, 1:]
        block = block + dl.T - dl
    out[1:, 1:] = block
    return _maybe_real(out.astype(complex))


def error_transfer_matrix(cumulant, mode: str = "exact") -> np.ndarray:
    r"""Error transfer matrix :math:`\exp\mathcal{K}` or :math:`\mathbb{1}+\mathcal{K}`.

    Parameters
    ----------
    cumulant : ndarray, shape (d**2, d**2)
    mode : {'exact', 'first_order'}

    Notes
    -----
    When the first row and column of ``cumulant`` vanish, only the
    remaining block is exponentiated so that the first row and column of
    the result are exactly the unit vector.
    """
    K = np.asarray(cumulant)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeError(f"cumulant must be square, got {K.shape}")
    mode = mode.replace("-", "_")
    if mode == "first_order":
        return np.eye(K.shape[0], dtype=K.dtype) + K
    if mode != "exact":
        raise ValidationError(f"unknown mode {mode!r}")
    if not np.any(K[0]) and not np.any(K[:, 0]):
        out = np.zeros_like(K)
        out[0, 0] = 1
        out[1:, 1:] = sla.expm(K[1:, 1:])
        return out
    return sla.expm(K)


@dataclass(frozen=True, eq=False)
class ErrorChannel:
    """Container for a computed error channel.

    ``per_source`` maps ``(id_a, id_b)`` to that pair's cumulant.
    """

    gamma: np.ndarray
    delta: np.ndarray | None
    cumulant: np.ndarray
    transfer: np.ndarray
    mode: str
    noise_ids: tuple
    per_source: dict = field(default_factory=dict)


def error_channel(p: PulseSequence, spectrum: Spectrum, *, mode: str = "exact",
                  with_shifts: bool = False, omega=None, interpolate: bool = False
                  ) -> ErrorChannel:
    """Compute decay amplitudes (and optionally shifts) and assemble the channel.

    The grid defaults to the spectrum's grid.
    """
    if omega is None:
        omega = spectrum.omega
    cm = single_pulse_control_matrix(p, omega)
    gamma = decay_amplitudes(cm, spectrum, interpolate=interpolate)
    delta = frequency_shifts(p, spectrum, omega, interpolate=interpolate) if with_shifts else None
    if p.dim == 2 and p.basis.kind == "pauli":
        cumulant = cumulant_function_pauli(gamma, delta)
    else:
        cumulant = cumulant_function(gamma, delta, p.basis)
    per = cumulant_function(gamma, delta, p.basis, per_source=True)
    per_source = {(a, b): per[i, j] for i, a in enumerate(p.noise_ids)
                  for j, b in enumerate(p.noise_ids)}
    transfer = error_transfer_matrix(cumulant, mode)
    if not np.all(np.isfinite(transfer)):
        raise NumericalError("non-finite error transfer matrix (overflow in the spectrum "
                             "or sensitivities)")
    return ErrorChannel(gamma, delta, cumulant, transfer, mode.replace("-", "_"),
                        p.noise_ids, per_source)
