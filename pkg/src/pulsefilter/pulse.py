r"""Piecewise-constant control and noise Hamiltonians.

A pulse is described by

.. math::

    H_c^{(g)} = \sum_i a_i^{(g)} A_i, \qquad
    H_n^{(g)} = \sum_\alpha s_\alpha^{(g)} b_\alpha(t) B_\alpha

on segments :math:`g = 1, \ldots, G` of duration :math:`\Delta t_g`.
:class:`PulseSequence` validates this description and caches eigensystems,
propagators and frequency-domain control matrices.
"""
from __future__ import annotations

import threading
from typing import Sequence

import numpy as np

from .basis import Basis, basis_from_spec, liouville_representation, pauli_basis
from .errors import (BasisMismatchError, DurationError, HermiticityError,
                     NumericalError, ShapeError, TracelessError,
                     ValidationError)

__all__ = ["PulseSequence", "new_pulse", "extend_pulse", "grid_key"]

HERMITICITY_ATOL = 1e-12


def grid_key(omega: np.ndarray):
    """Cache key of a frequency grid (exact, bitwise)."""
    omega = np.ascontiguousarray(omega, dtype=float)
    return (omega.shape, omega.tobytes())


def _as_operator_stack(ops, name):
    if ops is None:
        return None
    arr = np.array(ops, dtype=complex)
    if arr.size == 0:
        return None
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ShapeError(f"{name} must be a list of square matrices, got shape {arr.shape}")
    return arr


def _check_hermitian(ops, name):
    for i, op in enumerate(ops):
        scale = max(1.0, float(np.abs(op).max()))
        res = np.abs(op - op.conj().T).max()
        if res > HERMITICITY_ATOL * scale:
            raise HermiticityError(f"{name}[{i}] is not Hermitian (residual {res:.2e})")


class PulseSequence:
    r"""Validated piecewise-constant pulse.

    Parameters
    ----------
    control_ops : list of (d, d) arrays
        Hermitian control operators :math:`A_i`. May be empty.
    control_coeffs : array_like, shape (n_ctrl, G)
        Amplitudes :math:`a_i^{(g)}` in angular-frequency units.
    noise_ops : list of (d, d) arrays
        Hermitian traceless noise operators :math:`B_\alpha`.
    noise_sens : array_like, shape (n_noise, G)
        Sensitivities :math:`s_\alpha^{(g)}`.
    dt : array_like, shape (G,)
        Strictly positive segment durations.
    basis : Basis or {'pauli', 'ggm'}, optional
        Defaults to Pauli for power-of-two dimensions, GGM otherwise.
    noise_ids, control_ids : sequence of str, optional
        Labels; noise ids match spectrum source ids.

    Notes
    -----
    All arrays are stored read-only. Derived quantities are computed lazily
    and cached with compute-once semantics.
    """

    def __init__(self, control_ops, control_coeffs, noise_ops, noise_sens, dt,
                 basis=None, *, noise_ids=None, control_ids=None):
        dt = np.array(dt, dtype=float).ravel()
        if dt.size == 0:
            raise ShapeError("need at least one segment")
        if not np.all(np.isfinite(dt)) or np.any(dt <= 0):
            raise DurationError("segment durations must be finite and strictly positive")
        n_seg = dt.size

        c_ops = _as_operator_stack(control_ops, "control_ops")
        n_ops = _as_operator_stack(noise_ops, "noise_ops")
        if c_ops is None and n_ops is None:
            if isinstance(basis, Basis):
                d = basis.dim
            else:
                raise ShapeError("cannot infer the dimension without any operators")
        else:
            d = (c_ops if c_ops is not None else n_ops).shape[1]
        if c_ops is None:
            c_ops = np.zeros((0, d, d), complex)
        if n_ops is None:
            n_ops = np.zeros((0, d, d), complex)
        if c_ops.shape[1] != d or n_ops.shape[1] != d:
            raise ShapeError("control and noise operators have different dimensions")

        c_coeffs = np.array(control_coeffs if control_coeffs is not None else [],
                            dtype=float)
        if c_coeffs.size == 0:
            c_coeffs = np.zeros((0, n_seg))
        c_coeffs = np.atleast_2d(c_coeffs)
        n_sens = np.array(noise_sens if noise_sens is not None else [], dtype=float)
        if n_sens.size == 0:
            n_sens = np.zeros((0, n_seg))
        n_sens = np.atleast_2d(n_sens)
        if c_coeffs.shape != (len(c_ops), n_seg):
            raise ShapeError(
                f"control_coeffs has shape {c_coeffs.shape}, expected {(len(c_ops), n_seg)}")
        if n_sens.shape != (len(n_ops), n_seg):
            raise ShapeError(
                f"noise_sens has shape {n_sens.shape}, expected {(len(n_ops), n_seg)}")
        if not (np.all(np.isfinite(c_coeffs)) and np.all(np.isfinite(n_sens))):
            raise ValidationError("coefficients must be finite")

        _check_hermitian(c_ops, "control_ops")
        _check_hermitian(n_ops, "noise_ops")
        for i, op in enumerate(n_ops):
            tr = abs(np.trace(op))
            if tr > HERMITICITY_ATOL * max(1.0, float(np.abs(op).max())):
                raise TracelessError(f"noise_ops[{i}] has trace {tr:.2e}, must be traceless")

        self._basis = basis_from_spec(basis, d)
        if noise_ids is None:
            noise_ids = [f"B{i}" for i in range(len(n_ops))]
        if control_ids is None:
            control_ids = [f"A{i}" for i in range(len(c_ops))]
        noise_ids = tuple(str(x) for x in noise_ids)
        control_ids = tuple(str(x) for x in control_ids)
        if len(noise_ids) != len(n_ops) or len(set(noise_ids)) != len(noise_ids):
            raise ShapeError("noise_ids must be unique and match the number of noise operators")
        if len(control_ids) != len(c_ops):
            raise ShapeError("control_ids must match the number of control operators")

        for arr in (dt, c_ops, n_ops, c_coeffs, n_sens):
            arr.flags.writeable = False
        self._dt = dt
        self._c_ops, self._c_coeffs = c_ops, c_coeffs
        self._n_ops, self._n_sens = n_ops, n_sens
        self.noise_ids, self.control_ids = noise_ids, control_ids
        self._d = d

        self._lock = threading.RLock()
        self._eig = None
        self._prop = None
        self._total_liouville = None
        self._cm_cache: dict = {}

    # basic properties -------------------------------------------------------
    @property
    def dim(self) -> int:
        return self._d

    @property
    def basis(self) -> Basis:
        return self._basis

    @property
    def dt(self) -> np.ndarray:
        return self._dt

    @property
    def n_segments(self) -> int:
        return self._dt.size

    @property
    def t(self) -> np.ndarray:
        """Segment boundaries ``t_0 = 0, t_1, ..., t_G``."""
        return np.concatenate([[0.0], np.cumsum(self._dt)])

    @property
    def duration(self) -> float:
        return float(np.sum(self._dt))

    @property
    def control_ops(self) -> np.ndarray:
        return self._c_ops

    @property
    def control_coeffs(self) -> np.ndarray:
        return self._c_coeffs

    @property
    def noise_ops(self) -> np.ndarray:
        return self._n_ops

    @property
    def noise_sens(self) -> np.ndarray:
        return self._n_sens

    @property
    def n_noise(self) -> int:
        return len(self._n_ops)

    def __repr__(self):
        return (f"PulseSequence(dim={self.dim}, segments={self.n_segments}, "
                f"noise={list(self.noise_ids)}, duration={self.duration:.6g})")

    def __matmul__(self, other: "PulseSequence") -> "PulseSequence":
        from .control_matrix import concatenate_pulses
        return concatenate_pulses([self, other])

    # derived quantities ---------------------------------------------------
    def control_hamiltonians(self) -> np.ndarray:
        """``(G, d, d)`` control Hamiltonians of all segments."""
        return np.einsum("ig,iab->gab", self._c_coeffs, self._c_ops)

    def eigensystems(self):
        """Per-segment eigenvalues ``(G, d)`` and eigenvectors ``(G, d, d)``.

        Segments with vanishing control Hamiltonian get ``V = 1``.
        """
        if self._eig is None:
            with self._lock:
                if self._eig is None:
                    H = self.control_hamiltonians()
                    try:
                        w, V = np.linalg.eigh(H)
                    except np.linalg.LinAlgError as exc:  # pragma: no cover
                        raise NumericalError(f"eigensolver failed: {exc}") from exc
                    zero = ~np.any(H != 0, axis=(1, 2))
                    if np.any(zero):
                        w[zero] = 0.0
                        V[zero] = np.eye(self._d)
                    w.flags.writeable = False
                    V.flags.writeable = False
                    self._eig = (w, V)
        return self._eig

    def propagators(self):
        """Segment propagators ``P`` of shape ``(G, d, d)`` and cumulative ``Q``.

        ``Q`` has shape ``(G + 1, d, d)`` with ``Q[0] = 1`` and
        ``Q[g] = P[g-1] @ Q[g-1]``.
        """
        if self._prop is None:
            with self._lock:
                if self._prop is None:
                    w, V = self.eigensystems()
                    phases = np.exp(-1j * w * self._dt[:, None])
                    P = (V * phases[:, None, :]) @ V.conj().transpose(0, 2, 1)
                    Q = np.empty((self.n_segments + 1, self._d, self._d), complex)
                    Q[0] = np.eye(self._d)
                    for g in range(self.n_segments):
                        Q[g + 1] = P[g] @ Q[g]
                    if not np.all(np.isfinite(Q)):
                        raise NumericalError("non-finite propagator")
                    P.flags.writeable = False
                    Q.flags.writeable = False
                    self._prop = (P, Q)
        return self._prop

    @property
    def total_propagator(self) -> np.ndarray:
        return self.propagators()[1][-1]

    @property
    def total_liouville(self) -> np.ndarray:
        """Transfer matrix of the ideal total propagator."""
        if self._total_liouville is None:
            with self._lock:
                if self._total_liouville is None:
                    L = liouville_representation(self.total_propagator, self._basis)
                    L.flags.writeable = False
                    self._total_liouville = L
        return self._total_liouville

    # control-matrix cache -----------------------------------------------
    def cached_control_matrix(self, omega):
        """Cached control matrix on exactly this grid, or ``None``."""
        return self._cm_cache.get(grid_key(omega))

    def cache_control_matrix(self, cm) -> None:
        """Store a control matrix; an existing entry for the grid is kept."""
        key = grid_key(cm.omega)
        with self._lock:
            self._cm_cache.setdefault(key, cm)

    def cached_grids(self):
        """List of grids for which a control matrix is cached."""
        return [cm.omega for cm in self._cm_cache.values()]

    def control_matrix(self, omega):
        """Control matrix on ``omega`` (computed and cached on first use)."""
        from .control_matrix import single_pulse_control_matrix
        return single_pulse_control_matrix(self, omega)

    def with_basis(self, basis) -> "PulseSequence":
        """Copy of this pulse expressed in a different basis (caches dropped)."""
        return PulseSequence(self._c_ops, self._c_coeffs, self._n_ops, self._n_sens,
                             self._dt, basis, noise_ids=self.noise_ids,
                             control_ids=self.control_ids)


def new_pulse(control_ops, control_coeffs, noise_ops, noise_sens, dt, basis=None,
              **kwargs) -> PulseSequence:
    """Functional alias for :class:`PulseSequence`."""
    return PulseSequence(control_ops, control_coeffs, noise_ops, noise_sens, dt,
                         basis, **kwargs)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def extend_pulse(p: PulseSequence, target_dims: Sequence[int], position: int) -> PulseSequence:
    r"""Embed a pulse into a larger tensor-product Hilbert space.

    Parameters
    ----------
    p : PulseSequence
        Pulse with a Pauli basis.
    target_dims : sequence of int
        Subsystem dimensions of the composite space. All must be powers of
        two and ``target_dims[position]`` must equal ``p.dim``.
    position : int
        Index of the subsystem the pulse acts on.

    Returns
    -------
    PulseSequence
        Operators tensored with identities, Pauli basis on the composite
        space. Cached control matrices are carried over: column ``k`` maps to
        the composite Pauli string with identities elsewhere, multiplied by
        :math:`\sqrt{d_\text{other}}`. All other columns are zero.
    """
    if p.basis.kind != "pauli":
        raise BasisMismatchError("extension requires a Pauli (tensor-product) basis")
    dims = [int(x) for x in target_dims]
    if not 0 <= position < len(dims):
        raise ValidationError(f"position {position} out of range for {len(dims)} subsystems")
    if dims[position] != p.dim:
        raise ShapeError(f"subsystem {position} has dimension {dims[position]}, pulse has {p.dim}")
    if not all(_is_power_of_two(x) for x in dims):
        raise BasisMismatchError("composite Pauli basis needs power-of-two subsystem dimensions")
    d_before = int(np.prod(dims[:position], dtype=int))
    d_after = int(np.prod(dims[position + 1:], dtype=int))
    d_other = d_before * d_after
    if d_other == 1:
        return p

    def embed(ops):
        if len(ops) == 0:
            return np.zeros((0, p.dim * d_other, p.dim * d_other), complex)
        eye_b, eye_a = np.eye(d_before), np.eye(d_after)
        return np.array([np.kron(np.kron(eye_b, op), eye_a) for op in ops])

    total = p.dim * d_other
    n_total = int(round(np.log2(total)))
    q_before = int(round(np.log2(d_before)))
    q_pulse = int(round(np.log2(p.dim)))
    q_after = int(round(np.log2(d_after)))
    new = PulseSequence(embed(p.control_ops), p.control_coeffs, embed(p.noise_ops),
                        p.noise_sens, p.dt, pauli_basis(n_total),
                        noise_ids=p.noise_ids, control_ids=p.control_ids)
    # Pauli index k of the pulse -> composite index with identity digits elsewhere
    column_map = np.arange(p.dim ** 2) * 4 ** q_after
    assert q_before + q_pulse + q_after == n_total
    scale = np.sqrt(d_other)
    from .control_matrix import ControlMatrix
    for cm in list(p._cm_cache.values()):
        vals = np.zeros((cm.values.shape[0], total ** 2, cm.values.shape[2]), complex)
        vals[:, column_map, :] = scale * cm.values
        new.cache_control_matrix(ControlMatrix(vals, cm.omega, cm.noise_ids))
    return new
