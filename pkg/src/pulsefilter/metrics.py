r"""Scalar figures of merit derived from channels and control matrices.

Transfer matrices act on vectorized operators
:math:`|A\rangle\rangle_i = \mathrm{tr}(C_i A)` of a Hermitian basis, so that
:math:`\langle\langle A|\mathcal{Q}|B\rangle\rangle = \sum_{ij} \mathrm{tr}(C_iA)^*
\mathcal{Q}_{ij}\mathrm{tr}(C_jB)`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .basis import Basis
from .control_matrix import ControlMatrix, fidelity_filter_function
from .error_channel import decay_amplitudes
from .errors import ShapeError, ValidationError
from .pulse import PulseSequence
from .spectrum import Spectrum

__all__ = [
    "ChannelMetrics",
    "ConvergenceWarning",
    "avg_gate_fidelity",
    "entanglement_fidelity",
    "infidelity",
    "state_fidelity",
    "povm_probability",
    "leakage_rates",
    "xi_squared",
    "convergence",
    "channel_metrics",
    "vectorize",
    "DEFAULT_MAX_TO_RMS",
]

#: Default ratio between the maximum and the rms noise amplitude.
DEFAULT_MAX_TO_RMS = 3.0


class ConvergenceWarning(UserWarning):
    """The expansion parameter is too large for the perturbative result."""


def _square(etm, name="transfer matrix"):
    etm = np.asarray(etm)
    if etm.ndim != 2 or etm.shape[0] != etm.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {etm.shape}")
    return etm


def entanglement_fidelity(etm, d: int | None = None, *, mask=None,
                          subspace_dim: int | None = None) -> float:
    r"""Entanglement fidelity :math:`\mathrm{tr}\,\mathcal{U}/d^2`.

    Parameters
    ----------
    etm : ndarray, shape (d**2, d**2)
    d : int, optional
        Inferred from the shape if omitted.
    mask : array_like of int or bool, optional
        Only these diagonal entries contribute deviations from 1; the rest
        are treated as ideal. Used for subspace fidelities where some basis
        elements (for example a padded identity) should be disregarded.
    subspace_dim : int, optional
        Dimension used for normalization when ``mask`` is given
        (defaults to ``d``).
    """
    etm = _square(etm)
    D = int(round(np.sqrt(etm.shape[0])))
    if D * D != etm.shape[0]:
        raise ShapeError("transfer matrix size is not a perfect square")
    if d is None:
        d = D
    if d != D:
        raise ShapeError(f"transfer matrix of size {etm.shape[0]} does not match d={d}")
    diag = np.real(np.diag(etm))
    if mask is None:
        return float(np.sum(diag) / d ** 2)
    idx = np.arange(etm.shape[0])[np.asarray(mask)]
    dc = d if subspace_dim is None else int(subspace_dim)
    return float(1.0 + np.sum(diag[idx] - 1.0) / dc ** 2)


def avg_gate_fidelity(etm, d: int | None = None, *, mask=None,
                      subspace_dim: int | None = None) -> float:
    r"""Average gate fidelity :math:`(d\,\mathcal{F}_\text{ent} + 1)/(d+1)`.

    Without a mask this equals :math:`(\mathrm{tr}\,\mathcal{U} + d)/(d(d+1))`.
    See :func:`entanglement_fidelity` for ``mask`` and ``subspace_dim``.
    """
    etm = _square(etm)
    if d is None:
        d = int(round(np.sqrt(etm.shape[0])))
    ent = entanglement_fidelity(etm, d, mask=mask, subspace_dim=subspace_dim)
    dc = d if (mask is None or subspace_dim is None) else int(subspace_dim)
    return float((dc * ent + 1) / (dc + 1))


def infidelity(cm: ControlMatrix, spectrum: Spectrum, d: int, method: str = "gamma_trace",
               *, interpolate: bool = False) -> np.ndarray:
    r"""Entanglement infidelity per source pair :math:`\mathcal{I}_{\alpha\beta}`.

    Parameters
    ----------
    method : {'gamma_trace', 'ff_integral'}
        ``'gamma_trace'`` takes :math:`\mathrm{tr}\,\Gamma_{\alpha\beta}/d`;
        ``'ff_integral'`` integrates the spectrum against the filter
        function (for cross terms the correlation
        :math:`\sum_k\mathcal{B}^*_{\alpha k}\mathcal{B}_{\beta k}`).

    Returns
    -------
    ndarray, shape (n_noise, n_noise)
        The total infidelity is the sum of all entries.
    """
    if method == "gamma_trace":
        gamma = decay_amplitudes(cm, spectrum, interpolate=interpolate)
        return np.real(np.einsum("abkk->ab", gamma)) / d
    if method == "ff_integral":
        spec = spectrum.matched_to(cm.omega, cm.noise_ids, interpolate=interpolate)
        B = cm.values
        if spec.is_diagonal():
            F = fidelity_filter_function(cm)
            out = np.zeros((B.shape[0], B.shape[0]))
            np.fill_diagonal(out, np.real(spec.line_integral(spec.diagonal() * F)))
            return out / d
        corr = np.einsum("akw,bkw->abw", B.conj(), B)
        return np.real(spec.line_integral(spec.values * corr)) / d
    raise ValidationError(f"unknown method {method!r}")


def vectorize(op, basis: Basis) -> np.ndarray:
    r"""Coefficients :math:`\mathrm{tr}(C_i A)`."""
    op = np.asarray(op)
    if op.shape != (basis.dim, basis.dim):
        raise ShapeError(f"operator of shape {op.shape} does not match basis dim {basis.dim}")
    return basis.expand(op)


def _check_state(rho, name, *, pure=False, atol=1e-10):
    rho = np.asarray(rho, dtype=complex)
    if abs(np.trace(rho) - 1) > atol:
        raise ValidationError(f"{name} must have unit trace")
    if np.abs(rho - rho.conj().T).max() > atol:
        raise ValidationError(f"{name} must be Hermitian")
    if pure and abs(np.trace(rho @ rho) - 1) > atol:
        raise ValidationError(f"{name} must be a pure state")
    return rho


def _sandwich(left, channel, right, basis):
    channel = _square(channel)
    if channel.shape[0] != len(basis):
        raise ShapeError("channel does not match the basis")
    lv = vectorize(left, basis)
    rv = vectorize(right, basis)
    return complex(lv.conj() @ channel @ rv)


def state_fidelity(channel, rho, sigma, basis: Basis) -> float:
    r"""State fidelity :math:`\langle\langle\rho|\mathcal{Q}|\sigma\rangle\rangle`.

    ``rho`` must be pure; ``sigma`` is the input state.
    """
    rho = _check_state(rho, "rho", pure=True)
    sigma = _check_state(sigma, "sigma")
    return float(np.real(_sandwich(rho, channel, sigma, basis)))


def povm_probability(element, channel, sigma, basis: Basis, *, atol: float = 1e-10) -> float:
    r"""Outcome probability :math:`\langle\langle E|\mathcal{Q}|\sigma\rangle\rangle`."""
    E = np.asarray(element, dtype=complex)
    if np.abs(E - E.conj().T).max() > atol:
        raise ValidationError("POVM element must be Hermitian")
    if np.linalg.eigvalsh(E).min() < -atol:
        raise ValidationError("POVM element must be positive semidefinite")
    sigma = _check_state(sigma, "sigma")
    return float(np.real(_sandwich(E, channel, sigma, basis)))


def leakage_rates(channel, comp_projector, basis: Basis, *, atol: float = 1e-10):
    r"""Leakage and seepage rates.

    .. math::

        L_c = \langle\langle\Pi_\ell|\mathcal{Q}|\Pi_c\rangle\rangle/d_c, \qquad
        L_\ell = \langle\langle\Pi_c|\mathcal{Q}|\Pi_\ell\rangle\rangle/d_\ell

    Returns
    -------
    (float, float)
        ``(L_c, L_l)``. For unital channels ``d_c L_c == d_l L_l``.
    """
    P = np.asarray(comp_projector, dtype=complex)
    if P.shape != (basis.dim, basis.dim):
        raise ShapeError("projector does not match the basis dimension")
    if np.abs(P @ P - P).max() > atol or np.abs(P - P.conj().T).max() > atol:
        raise ValidationError("comp_projector is not an orthogonal projector")
    d_c = int(round(np.real(np.trace(P))))
    d_l = basis.dim - d_c
    if d_c < 1:
        raise ValidationError("computational subspace must be nonempty")
    leak_proj = np.eye(basis.dim) - P
    L_c = np.real(_sandwich(leak_proj, channel, P, basis)) / d_c
    L_l = np.real(_sandwich(P, channel, leak_proj, basis)) / d_l if d_l else 0.0
    return float(L_c), float(L_l)


def xi_squared(p: PulseSequence, spectrum: Spectrum, *, interpolate: bool = False) -> float:
    r"""Expansion parameter :math:`\xi^2`.

    .. math::

        \xi^2 = \sum_\alpha \lVert B_\alpha\rVert_F^2
            \Bigl(\int\frac{d\omega}{2\pi}S_{\alpha\alpha}(\omega)\Bigr)
            \Bigl(\sum_g |s_\alpha^{(g)}|\Delta t_g\Bigr)^2

    The noise power uses the same trapezoid rule as the decay amplitudes,
    so :math:`|\mathrm{tr}\,\Gamma| \le \xi^2` holds on any grid. Returns
    ``inf`` if the integral is not finite.
    """
    spec = spectrum.matched_to(spectrum.omega, p.noise_ids, interpolate=interpolate)
    power = spec.band_power()
    norms = np.einsum("aij,aij->a", p.noise_ops.conj(), p.noise_ops).real
    weight = (np.abs(p.noise_sens) @ p.dt) ** 2
    with np.errstate(over="ignore", invalid="ignore"):
        val = float(np.sum(norms * power * weight))
    return val if np.isfinite(val) else float("inf")


def convergence(p: PulseSequence, spectrum: Spectrum, *,
                max_to_rms: float = DEFAULT_MAX_TO_RMS, warn: bool = True):
    r"""Check :math:`\xi < \pi/C_m` with :math:`C_m` = ``max_to_rms``.

    Returns
    -------
    dict
        ``xi``, ``xi_sq``, ``converged`` and ``reliable`` (false if the
        noise power on the grid is infinite).
    """
    xi_sq = xi_squared(p, spectrum)
    reliable = np.isfinite(xi_sq)
    xi = float(np.sqrt(xi_sq)) if reliable else float("inf")
    converged = bool(reliable and xi < np.pi / max_to_rms)
    if warn and not converged:
        msg = ("expansion parameter is unbounded on this grid" if not reliable else
               f"xi = {xi:.3g} exceeds pi/C_m = {np.pi / max_to_rms:.3g}")
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return {"xi": xi, "xi_sq": xi_sq, "converged": converged, "reliable": bool(reliable)}


@dataclass(frozen=True)
class ChannelMetrics:
    avg_fidelity: float
    ent_fidelity: float
    infid_per_source: dict
    xi_sq: float

    def to_dict(self):
        return {
            "avg_fidelity": self.avg_fidelity,
            "ent_fidelity": self.ent_fidelity,
            "infidelity": {f"{a},{b}": v for (a, b), v in self.infid_per_source.items()},
            "xi_sq": self.xi_sq,
        }


def channel_metrics(p: PulseSequence, spectrum: Spectrum, transfer=None) -> ChannelMetrics:
    """Bundle fidelities, per-source infidelities and the expansion parameter.

    Without ``transfer`` the fidelities are first order (from the decay
    amplitudes alone).
    """
    cm = p.control_matrix(spectrum.omega)
    inf = infidelity(cm, spectrum, p.dim)
    per = {(a, b): float(inf[i, j]) for i, a in enumerate(p.noise_ids)
           for j, b in enumerate(p.noise_ids) if inf[i, j] != 0 or i == j}
    if transfer is None:
        ent = 1.0 - float(np.sum(inf))
        avg = (p.dim * ent + 1) / (p.dim + 1)
    else:
        ent = entanglement_fidelity(transfer, p.dim)
        avg = avg_gate_fidelity(transfer, p.dim)
    return ChannelMetrics(avg, ent, per, xi_squared(p, spectrum))
