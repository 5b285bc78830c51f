# cython: language_level=3
"""Compiled hot loops.

Same signatures and semantics as :mod:`pulsefilter._kernels_py`; the backend
is chosen in :mod:`pulsefilter._backend`. Both loops release the GIL.
"""
import numpy as np

from libc.math cimport cos, fabs, sin, sqrt
from scipy.linalg.cython_blas cimport zgemm
from scipy.linalg.cython_lapack cimport zheev

ctypedef double complex cplx

BACKEND = "cython"


cdef inline double _sinc(double y) noexcept nogil:
    # sin(y)/y; the series avoids 0/0 and is exact to double precision below 1e-4
    cdef double y2
    if fabs(y) < 1e-4:
        y2 = y * y
        return 1.0 - y2 / 6.0 * (1.0 - y2 / 20.0)
    return sin(y) / y


cdef inline cplx _expi(double x) noexcept nogil:
    return cos(x) + 1j * sin(x)


def cm_accumulate(cplx[:, :, ::1] out, const double[::1] eigvals,
                  const cplx[:, :, ::1] bbar, const cplx[:, :, ::1] cbar_t,
                  const double[::1] omega, double dt, double t0):
    """Add one segment's contribution to a control matrix in place.

    out[a, k, w] += exp(i w t0) sum_ij bbar[a, i, j] I_ij(w) cbar_t[k, i, j]
    with I_ij(w) = dt sinc(x/2) exp(i x/2), x = (w + E_i - E_j) dt.
    The weighted operators are built in one pass and contracted with zgemm.
    """
    cdef Py_ssize_t n_alpha = bbar.shape[0]
    cdef Py_ssize_t n_basis = cbar_t.shape[0]
    cdef Py_ssize_t n_omega = omega.shape[0]
    cdef Py_ssize_t d = eigvals.shape[0]
    cdef Py_ssize_t w, a, k, i, j
    cdef double x, om
    cdef cplx ph, val
    if out.shape[0] != n_alpha or out.shape[1] != n_basis or out.shape[2] != n_omega:
        raise ValueError("output array has the wrong shape")
    if n_alpha == 0 or n_omega == 0:
        return
    # weighted[a, w, i*d + j] = bbar[a, i, j] I_ij(w); res[a, w, k] its contraction
    cdef cplx[:, :, ::1] weighted = np.empty((n_alpha, n_omega, d * d), dtype=complex)
    cdef cplx[:, :, ::1] res = np.empty((n_alpha, n_omega, n_basis), dtype=complex)
    cdef int m_rows = <int> (n_alpha * n_omega), n_cols = <int> n_basis, inner = <int> (d * d)
    cdef cplx one = 1.0, zero = 0.0
    cdef char trans_b = b'T', trans_a = b'N'
    with nogil:
        for w in range(n_omega):
            om = omega[w]
            for i in range(d):
                for j in range(d):
                    x = (om + eigvals[i] - eigvals[j]) * dt
                    val = dt * _sinc(0.5 * x) * _expi(0.5 * x)
                    for a in range(n_alpha):
                        weighted[a, w, i * d + j] = bbar[a, i, j] * val
        # row-major res = weighted @ cbar_t.reshape(n_basis, d*d).T, written column-major
        zgemm(&trans_b, &trans_a, &n_cols, &m_rows, &inner, &one,
              <cplx*> &cbar_t[0, 0, 0], &inner, &weighted[0, 0, 0], &inner,
              &zero, &res[0, 0, 0], &n_cols)
        for w in range(n_omega):
            ph = _expi(omega[w] * t0)
            for a in range(n_alpha):
                for k in range(n_basis):
                    out[a, k, w] = out[a, k, w] + ph * res[a, w, k]


cdef inline void _step_qubit(cplx[:, ::1] q, cplx h00, cplx h01, cplx h11,
                             double t) noexcept nogil:
    # exp(-i H t) for 2x2 Hermitian H, applied from the left to q
    cdef double h0 = 0.5 * (h00.real + h11.real)
    cdef double hz = 0.5 * (h00.real - h11.real)
    cdef double norm = sqrt(hz * hz + h01.real * h01.real + h01.imag * h01.imag)
    cdef double c = cos(norm * t)
    cdef double s = t * _sinc(norm * t)
    cdef cplx glob = _expi(-h0 * t)
    cdef cplx u00 = glob * (c - 1j * s * hz)
    cdef cplx u11 = glob * (c + 1j * s * hz)
    cdef cplx u01 = glob * (-1j * s * h01)
    cdef cplx u10 = glob * (-1j * s * h01.conjugate())
    cdef cplx a0, a1
    cdef Py_ssize_t col
    for col in range(2):
        a0 = q[0, col]
        a1 = q[1, col]
        q[0, col] = u00 * a0 + u01 * a1
        q[1, col] = u10 * a0 + u11 * a1


def propagate_trajectories(const cplx[:, :, ::1] hc, const cplx[:, :, ::1] noise_ops,
                           const double[:, :, ::1] coeffs, const double[::1] dts,
                           cplx[:, :, ::1] out, Py_ssize_t start=0, Py_ssize_t stop=-1):
    """Noisy propagators for trajectories ``start:stop`` written into ``out``.

    Step n of trajectory t evolves under
    ``hc[n] + sum_a coeffs[t, a, n] * noise_ops[a]`` for time ``dts[n]``.
    """
    cdef Py_ssize_t n_steps = hc.shape[0]
    cdef Py_ssize_t d = hc.shape[1]
    cdef Py_ssize_t n_alpha = noise_ops.shape[0]
    cdef Py_ssize_t t, n, a, i, j, m
    cdef double c
    cdef int dim = <int> d, lwork, info = 0
    cdef char jobz = b'V', uplo = b'L'
    cdef cplx acc
    if stop < 0:
        stop = coeffs.shape[0]
    cdef cplx[:, ::1] h = np.empty((d, d), dtype=complex)
    cdef cplx[:, ::1] u = np.empty((d, d), dtype=complex)
    cdef cplx[:, ::1] tmp = np.empty((d, d), dtype=complex)
    cdef cplx[::1] phase = np.empty(d, dtype=complex)
    cdef double[::1] evals = np.empty(d, dtype=float)
    lwork = max(1, 4 * dim)
    cdef cplx[::1] work = np.empty(lwork, dtype=complex)
    cdef double[::1] rwork = np.empty(max(1, 3 * dim - 2), dtype=float)
    with nogil:
        for t in range(start, stop):
            for i in range(d):
                for j in range(d):
                    out[t, i, j] = 1.0 if i == j else 0.0
            for n in range(n_steps):
                for i in range(d):
                    for j in range(d):
                        acc = hc[n, i, j]
                        for a in range(n_alpha):
                            c = coeffs[t, a, n]
                            if c != 0.0:
                                acc = acc + c * noise_ops[a, i, j]
                        h[i, j] = acc
                if d == 2:
                    _step_qubit(out[t], h[0, 0], h[0, 1], h[1, 1], dts[n])
                    continue
                # The C-ordered buffer reads as conj(H) in column-major order,
                # so its eigenvectors are the complex conjugates of those of H.
                zheev(&jobz, &uplo, &dim, &h[0, 0], &dim, &evals[0], &work[0],
                      &lwork, &rwork[0], &info)
                if info != 0:
                    with gil:
                        raise ArithmeticError(f"zheev failed with info={info}")
                for m in range(d):
                    phase[m] = _expi(-evals[m] * dts[n])
                # U[x, y] = sum_m conj(h[m, x]) phase[m] h[m, y]
                for i in range(d):
                    for j in range(d):
                        acc = 0
                        for m in range(d):
                            acc = acc + h[m, i].conjugate() * phase[m] * h[m, j]
                        u[i, j] = acc
                for i in range(d):
                    for j in range(d):
                        acc = 0
                        for m in range(d):
                            acc = acc + u[i, m] * out[t, m, j]
                        tmp[i, j] = acc
                for i in range(d):
                    for j in range(d):
                        out[t, i, j] = tmp[i, j]
