"""NumPy implementations of the hot loops.

Reference backend, used when the compiled extension is unavailable or when
``PULSEFILTER_BACKEND=python`` is set. Signatures match
:mod:`pulsefilter._ckernels`.
"""
import numpy as np

BACKEND = "python"


def sinc_half(x):
    """``sin(x/2) / (x/2)`` with the removable singularity filled in."""
    return np.sinc(np.asarray(x) / (2 * np.pi))


def segment_integral(eigvals, omega, dt):
    r"""First-order segment integral :math:`I_{ij}(\omega)`, shape ``(n_omega, d, d)``.

    :math:`-i(e^{ix}-1)/(\omega+\Omega_{ij})` rewritten as
    :math:`\Delta t\,\mathrm{sinc}(x/2)e^{ix/2}` with
    :math:`x = (\omega+\Omega_{ij})\Delta t`, which stays accurate near resonance.
    """
    x = (omega[:, None, None] + eigvals[:, None] - eigvals[None, :]) * dt
    return dt * sinc_half(x) * np.exp(0.5j * x)


def cm_accumulate(out, eigvals, bbar, cbar_t, omega, dt, t0):
    """Add one segment's contribution to a control matrix in place."""
    n_alpha, d = bbar.shape[0], bbar.shape[1]
    n_basis = cbar_t.shape[0]
    integral = segment_integral(eigvals, omega, dt)
    tmp = bbar[:, None] * integral[None]
    res = tmp.reshape(n_alpha, len(omega), d * d) @ cbar_t.reshape(n_basis, d * d).T
    out += np.exp(1j * omega * t0)[None, None, :] * res.transpose(0, 2, 1)


def propagate_trajectories(hc, noise_ops, coeffs, dts, out, start=0, stop=-1):
    """Noisy propagators for trajectories ``start:stop`` written into ``out``."""
    if stop < 0:
        stop = coeffs.shape[0]
    d = hc.shape[1]
    n_traj = stop - start
    if n_traj <= 0:
        return
    Q = np.broadcast_to(np.eye(d, dtype=complex), (n_traj, d, d)).copy()
    for n in range(hc.shape[0]):
        H = hc[n] + np.einsum("ta,aij->tij", coeffs[start:stop, :, n], noise_ops)
        w, V = np.linalg.eigh(H)
        U = (V * np.exp(-1j * w * dts[n])[:, None, :]) @ V.conj().swapaxes(-1, -2)
        Q = U @ Q
    out[start:stop] = Q
