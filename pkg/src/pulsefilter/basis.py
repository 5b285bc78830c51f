r"""Orthonormal Hermitian operator bases.

Functions
---------
:func:`pauli_basis`
    Normalized Pauli strings for ``n`` qubits.
:func:`ggm_basis`
    Generalized Gell-Mann matrices for a ``d``-level system.
:func:`complete_basis`
    Extend a set of orthonormal Hermitian operators to a full basis.
:func:`liouville_representation`
    Transfer matrix of a unitary in a given basis.

All bases obey :math:`\mathrm{tr}(C_i C_j) = \delta_{ij}`. For the Pauli and
GGM bases :math:`C_0 = \mathbb{1}/\sqrt{d}`, so every other element is
traceless.
"""
from __future__ import annotations

import itertools
import threading

import numpy as np
from scipy import sparse

from .errors import (HermiticityError, ResourceLimitError, ShapeError,
                     ValidationError)

__all__ = [
    "Basis",
    "TraceTensor",
    "pauli_basis",
    "ggm_basis",
    "complete_basis",
    "liouville_representation",
    "MAX_DIM",
    "MAX_TRACE_TENSOR_TERMS",
]

#: Largest Hilbert-space dimension accepted by the basis constructors.
MAX_DIM = 64
#: Upper bound on the number of partial products formed while building a
#: trace tensor. Exceeding it raises instead of exhausting memory.
MAX_TRACE_TENSOR_TERMS = 400_000_000
# partial products are reduced whenever this many have accumulated
_REDUCE_CHUNK = 4_000_000
_TRACE_TENSOR_THRESHOLD = 1e-14

_SIGMA = np.array([[[1, 0], [0, 1]],
                   [[0, 1], [1, 0]],
                   [[0, -1j], [1j, 0]],
                   [[1, 0], [0, -1]]], dtype=complex)


class TraceTensor:
    r"""Sparse fourth-order trace tensor :math:`T_{ijkl} = \mathrm{tr}(C_iC_jC_kC_l)`.

    Entries with magnitude at or below ``1e-14`` are dropped. Indices are
    stored sorted by their row-major linear index.
    """

    def __init__(self, indices: np.ndarray, values: np.ndarray, size: int):
        self.indices = np.asarray(indices, dtype=np.int64).reshape(-1, 4)
        self.values = np.asarray(values, dtype=complex).ravel()
        self.size = int(size)
        self._linear = np.ravel_multi_index(self.indices.T, (self.size,) * 4)
        for arr in (self.indices, self.values, self._linear):
            arr.flags.writeable = False

    @property
    def nnz(self) -> int:
        return len(self.values)

    def __getitem__(self, idx) -> complex:
        lin = np.ravel_multi_index(tuple(int(i) for i in idx), (self.size,) * 4)
        pos = np.searchsorted(self._linear, lin)
        if pos < self.nnz and self._linear[pos] == lin:
            return complex(self.values[pos])
        return 0j

    def dense(self) -> np.ndarray:
        """Materialize as an ``(n, n, n, n)`` array (small bases only)."""
        if self.size ** 4 > 50_000_000:
            raise ResourceLimitError(
                f"dense trace tensor would have {self.size ** 4} entries")
        out = np.zeros((self.size,) * 4, dtype=complex)
        out.flat[self._linear] = self.values
        return out

    def __repr__(self):
        return f"TraceTensor(size={self.size}, nnz={self.nnz})"


class Basis:
    r"""An ordered orthonormal Hermitian operator basis of :math:`d^2` elements.

    Parameters
    ----------
    elements : array_like, shape (d**2, d, d)
        The basis operators.
    kind : {'pauli', 'ggm', 'custom'}
        Construction family. Only ``'pauli'`` bases are tensor products and
        support :func:`pulsefilter.pulse.extend_pulse`.
    labels : sequence of str, optional
        Human-readable element names.
    check : bool
        Validate Hermiticity, orthonormality and completeness.
    atol : float
        Tolerance of the validation.

    Notes
    -----
    Instances are immutable. The trace tensor is computed on first use and
    cached; the cache is filled at most once even under concurrent access.
    """

    def __init__(self, elements, kind: str = "custom", labels=None, *,
                 check: bool = True, atol: float = 1e-12, _coo=None):
        if elements is None:
            if _coo is None:
                raise ValueError("need elements or a sparse representation")
            self._dense = None
            n, d = _coo[-1]
        else:
            arr = np.array(elements, dtype=complex)
            if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
                raise ShapeError(f"basis must have shape (n, d, d), got {arr.shape}")
            n, d = arr.shape[0], arr.shape[1]
            arr.flags.writeable = False
            self._dense = arr
        if n != d * d:
            raise ShapeError(f"a complete basis for d={d} needs {d * d} elements, got {n}")
        if kind not in ("pauli", "ggm", "custom"):
            raise ValueError(f"unknown basis kind {kind!r}")
        self.kind = kind
        self.dim = int(d)
        self._coo = _coo
        self.labels = tuple(labels) if labels is not None else tuple(
            f"C{i}" for i in range(n))
        if len(self.labels) != n:
            raise ShapeError("number of labels does not match number of elements")
        self._lock = threading.Lock()
        self._trace_tensor = None
        if check:
            self.check(atol)

    # construction helpers -------------------------------------------------
    @classmethod
    def _from_coo(cls, index, rows, cols, values, dim, kind, labels):
        n = dim * dim
        coo = (np.asarray(index), np.asarray(rows), np.asarray(cols),
               np.asarray(values, dtype=complex), (n, dim))
        return cls(None, kind=kind, labels=labels, check=False, _coo=coo)

    # array-like access ----------------------------------------------------
    @property
    def elements(self) -> np.ndarray:
        """Dense ``(d**2, d, d)`` read-only array of the basis operators."""
        if self._dense is None:
            with self._lock:
                if self._dense is None:
                    k, r, c, v, (n, d) = self._coo
                    if n * d * d > 64 ** 4:
                        raise ResourceLimitError("dense basis too large")
                    arr = np.zeros((n, d, d), dtype=complex)
                    arr[k, r, c] = v
                    arr.flags.writeable = False
                    self._dense = arr
        return self._dense

    def coo(self):
        """Nonzero entries as ``(element, row, col, value)`` arrays."""
        if self._coo is None:
            k, r, c = np.nonzero(self._dense)
            self._coo = (k, r, c, self._dense[k, r, c], (len(self), self.dim))
        return self._coo[:4]

    def __len__(self):
        return self.dim * self.dim

    def __getitem__(self, item):
        return self.elements[item]

    def __iter__(self):
        return iter(self.elements)

    def __repr__(self):
        return f"Basis(kind={self.kind!r}, dim={self.dim})"

    @property
    def has_identity_first(self) -> bool:
        """Whether ``C_0`` is the normalized identity."""
        c0 = self.elements[0]
        return bool(np.allclose(c0, np.eye(self.dim) / np.sqrt(self.dim),
                                atol=1e-12, rtol=0))

    def same_as(self, other: "Basis") -> bool:
        """Element-wise equality with another basis."""
        if self is other:
            return True
        if other.dim != self.dim or other.kind != self.kind:
            return False
        if self.kind in ("pauli", "ggm"):
            return True
        return bool(np.array_equal(self.elements, other.elements))

    # validation -----------------------------------------------------------
    def gram(self) -> np.ndarray:
        r"""Gram matrix :math:`\mathrm{tr}(C_i C_j)`."""
        flat = self.elements.reshape(len(self), -1)
        flat_t = self.elements.transpose(0, 2, 1).reshape(len(self), -1)
        return flat @ flat_t.T

    def completeness_residual(self) -> float:
        r"""Max deviation from :math:`\sum_k C_{k,ba}C_{k,cd} = \delta_{ac}\delta_{bd}`."""
        d = self.dim
        flat = self.elements.reshape(len(self), d * d)
        # (X^T X)[(b,a),(c,e)] = sum_k C_k[b,a] C_k[c,e]
        prod = flat.T @ flat
        swap = np.zeros((d * d, d * d))
        a, b = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
        swap[(b * d + a).ravel(), (a * d + b).ravel()] = 1.0
        return float(np.abs(prod - swap).max())

    def check(self, atol: float = 1e-12) -> None:
        """Raise :class:`ValidationError` if the basis invariants are violated."""
        C = self.elements
        herm = np.abs(C - C.conj().transpose(0, 2, 1)).max()
        if herm > atol:
            raise HermiticityError(f"basis elements not Hermitian (residual {herm:.2e})")
        ortho = np.abs(self.gram() - np.eye(len(self))).max()
        if ortho > atol:
            raise ValidationError(f"basis not orthonormal (residual {ortho:.2e})")
        comp = self.completeness_residual()
        if comp > atol:
            raise ValidationError(f"basis not complete (residual {comp:.2e})")
        if self.kind in ("pauli", "ggm"):
            if not self.has_identity_first:
                raise ValidationError("first element must be the normalized identity")
            traces = np.abs(np.einsum("kaa->k", C[1:])).max(initial=0.0)
            if traces > atol:
                raise ValidationError("non-identity elements must be traceless")

    # linear algebra -------------------------------------------------------
    def expand(self, ops) -> np.ndarray:
        r"""Coefficients :math:`\mathrm{tr}(C_k A)` of operators in the basis.

        ``ops`` has shape ``(..., d, d)``; the result has shape ``(..., d**2)``.
        """
        ops = np.asarray(ops)
        return np.einsum("kab,...ba->...k", self.elements, ops)

    def trace_tensor(self) -> TraceTensor:
        """Sparse trace tensor, computed once and cached."""
        if self._trace_tensor is None:
            with self._lock:
                if self._trace_tensor is None:
                    k, r, c, v = self.coo()
                    self._trace_tensor = _compute_trace_tensor(
                        k, r, c, v, len(self), self.dim)
        return self._trace_tensor


def _check_dim(d: int) -> None:
    if d < 1:
        raise ValidationError("dimension must be positive")
    if d > MAX_DIM:
        raise ResourceLimitError(
            f"dimension {d} exceeds the configured limit MAX_DIM={MAX_DIM}")


def pauli_basis(n_qubits: int) -> Basis:
    """Normalized Pauli basis for ``n_qubits`` qubits.

    Ordering is lexicographic in the single-qubit labels ``I, X, Y, Z`` with
    the first qubit as the most significant digit.
    """
    n_qubits = int(n_qubits)
    if n_qubits < 1:
        raise ValidationError("need at least one qubit")
    _check_dim(2 ** n_qubits)
    single = _SIGMA / np.sqrt(2)
    elems = single
    for _ in range(n_qubits - 1):
        m, d1 = elems.shape[0], elems.shape[1]
        elems = np.einsum("iab,jcd->ijacbd", elems, single).reshape(
            m * 4, d1 * 2, d1 * 2)
    labels = ["".join(s) for s in itertools.product("IXYZ", repeat=n_qubits)]
    return Basis(elems, kind="pauli", labels=labels, check=False)


def ggm_basis(d: int) -> Basis:
    r"""Generalized Gell-Mann basis for dimension ``d``.

    Order: identity, all symmetric :math:`u_{jk}` with :math:`j<k`
    ascending, all antisymmetric :math:`v_{jk}` in the same order, then the
    diagonal :math:`w_l` for :math:`l = 1, \ldots, d-1`.
    """
    d = int(d)
    _check_dim(d)
    idx, rows, cols, vals, labels = [], [], [], [], []
    s2 = 1 / np.sqrt(2)

    def add(element, r, c, v):
        idx.append(element)
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for a in range(d):
        add(0, a, a, 1 / np.sqrt(d))
    labels.append("I")
    pairs = [(j, k) for j in range(d) for k in range(j + 1, d)]
    e = 1
    for j, k in pairs:
        add(e, j, k, s2)
        add(e, k, j, s2)
        labels.append(f"u{j}{k}")
        e += 1
    for j, k in pairs:
        add(e, j, k, -1j * s2)
        add(e, k, j, 1j * s2)
        labels.append(f"v{j}{k}")
        e += 1
    for ell in range(1, d):
        norm = 1 / np.sqrt(ell * (ell + 1))
        for m in range(ell):
            add(e, m, m, norm)
        add(e, ell, ell, -ell * norm)
        labels.append(f"w{ell}")
        e += 1
    return Basis._from_coo(idx, rows, cols, vals, d, "ggm", labels)


def complete_basis(partial, *, atol: float = 1e-10) -> Basis:
    r"""Complete a set of orthonormal Hermitian operators to a full basis.

    The partial set is expanded in the GGM basis; an orthonormal basis of the
    orthogonal complement of the expansion coefficients (from an SVD) gives
    the additional elements. The returned basis starts with the given
    elements, in order.

    Raises
    ------
    ValidationError
        If the partial elements are not Hermitian, not orthonormal or
        (numerically) linearly dependent.
    """
    partial = np.asarray(partial, dtype=complex)
    if partial.ndim == 2:
        partial = partial[None]
    if partial.ndim != 3 or partial.shape[1] != partial.shape[2]:
        raise ShapeError(f"expected shape (m, d, d), got {partial.shape}")
    m, d = partial.shape[0], partial.shape[1]
    if m > d * d:
        raise ShapeError(f"{m} elements cannot be orthonormal in dimension {d}")
    herm = np.abs(partial - partial.conj().transpose(0, 2, 1)).max()
    if herm > atol:
        raise HermiticityError(f"partial elements not Hermitian (residual {herm:.2e})")
    ref = ggm_basis(d).elements
    # expansion coefficients are real for Hermitian operators
    coeffs = np.einsum("iab,jba->ij", partial, ref).real
    sv = np.linalg.svd(coeffs, compute_uv=False)
    if sv.size and sv.min() < atol:
        raise ValidationError(
            f"partial elements are linearly dependent (singular value {sv.min():.2e})")
    gram = coeffs @ coeffs.T
    if np.abs(gram - np.eye(m)).max() > atol:
        raise ValidationError("partial elements are not orthonormal")
    _, _, vh = np.linalg.svd(coeffs, full_matrices=True)
    null = vh[m:].T
    extra = np.einsum("jab,ji->iab", ref, null)
    elements = np.concatenate([partial, extra])
    labels = [f"P{i}" for i in range(m)] + [f"N{i}" for i in range(d * d - m)]
    return Basis(elements, kind="custom", labels=labels, check=True, atol=max(atol, 1e-12))


def liouville_representation(unitary, basis: Basis) -> np.ndarray:
    r"""Transfer matrix :math:`\mathcal{U}_{ij} = \mathrm{tr}(C_i U C_j U^\dagger)`.

    Parameters
    ----------
    unitary : array_like, shape (..., d, d)
        One or a stack of unitaries.
    basis : Basis

    Returns
    -------
    ndarray, shape (..., d**2, d**2)
        Real for Hermitian bases.
    """
    U = np.asarray(unitary, dtype=complex)
    C = basis.elements
    if U.shape[-1] != basis.dim or U.shape[-2] != basis.dim:
        raise ShapeError(f"unitary of shape {U.shape} does not match basis dim {basis.dim}")
    Uc = U[..., None, :, :]
    conj = Uc @ C @ Uc.conj().swapaxes(-1, -2)
    out = np.einsum("iab,...jba->...ij", C, conj)
    return out.real


def _compute_trace_tensor(k, r, c, v, n, d, threshold=_TRACE_TENSOR_THRESHOLD):
    # T_ijkl = sum_{a,c} (C_i C_j)[a,c] (C_k C_l)[c,a]
    # Pair products come out of one sparse product: row (i,a), col (j,c).
    k = np.asarray(k, dtype=np.int64)
    r = np.asarray(r, dtype=np.int64)
    c = np.asarray(c, dtype=np.int64)
    left = sparse.csr_matrix((v, (k * d + r, c)), shape=(n * d, d))
    right = sparse.csr_matrix((v, (r, k * d + c)), shape=(d, n * d))
    prod = (left @ right).tocoo()
    i, a = np.divmod(prod.row.astype(np.int64), d)
    j, cc = np.divmod(prod.col.astype(np.int64), d)
    key = a * d + cc
    order = np.argsort(key, kind="stable")
    key = key[order]
    pair = (i * n + j)[order]
    val = prod.data[order]
    bounds = np.searchsorted(key, np.arange(d * d + 1))
    counts = np.diff(bounds)
    q = np.arange(d * d)
    partner = (q % d) * d + q // d
    total = int(np.sum(counts * counts[partner]))
    if total > MAX_TRACE_TENSOR_TERMS:
        raise ResourceLimitError(
            f"trace tensor needs {total} partial products "
            f"(limit MAX_TRACE_TENSOR_TERMS={MAX_TRACE_TENSOR_TERMS})")

    acc_idx, acc_val, pending = [], [], 0

    def reduce(idx_list, val_list):
        lin = np.concatenate(idx_list)
        vals = np.concatenate(val_list)
        uniq, inv = np.unique(lin, return_inverse=True)
        summed = (np.bincount(inv, weights=vals.real, minlength=len(uniq))
                  + 1j * np.bincount(inv, weights=vals.imag, minlength=len(uniq)))
        return [uniq], [summed]

    nn = n * n
    for qq in range(d * d):
        lo, hi = bounds[qq], bounds[qq + 1]
        plo, phi = bounds[partner[qq]], bounds[partner[qq] + 1]
        if lo == hi or plo == phi:
            continue
        lin = pair[lo:hi, None] * nn + pair[None, plo:phi]
        prods = val[lo:hi, None] * val[None, plo:phi]
        acc_idx.append(lin.ravel())
        acc_val.append(prods.ravel())
        pending += lin.size
        if pending > _REDUCE_CHUNK:
            acc_idx, acc_val = reduce(acc_idx, acc_val)
            pending = len(acc_idx[0])
    if not acc_idx:
        return TraceTensor(np.zeros((0, 4), np.int64), np.zeros(0, complex), n)
    (lin,), (vals,) = reduce(acc_idx, acc_val)
    keep = np.abs(vals) > threshold
    lin, vals = lin[keep], vals[keep]
    indices = np.stack(np.unravel_index(lin, (n, n, n, n)), axis=1)
    return TraceTensor(indices, vals, n)


def basis_from_spec(spec, dim: int, *, custom_loader=None) -> Basis:
    """Resolve a basis description (``'pauli'``, ``'ggm'`` or a :class:`Basis`)."""
    if isinstance(spec, Basis):
        if spec.dim != dim:
            raise ShapeError(f"basis dimension {spec.dim} does not match {dim}")
        return spec
    if spec is None:
        spec = "pauli" if dim & (dim - 1) == 0 and dim > 1 else "ggm"
    if spec == "pauli":
        n_qubits = int(round(np.log2(dim)))
        if 2 ** n_qubits != dim or dim < 2:
            raise ValidationError(f"Pauli basis needs a power-of-two dimension, got {dim}")
        return pauli_basis(n_qubits)
    if spec == "ggm":
        return ggm_basis(dim)
    raise ValidationError(f"unknown basis {spec!r}")
