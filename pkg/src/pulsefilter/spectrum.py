r"""Noise power spectral densities on frequency grids.

Spectra are two-sided and per angular frequency, so that
:math:`\langle b_\alpha b_\beta\rangle = \int\frac{d\omega}{2\pi} S_{\alpha\beta}(\omega)`.
A grid with only nonnegative frequencies is treated as one half of a
symmetric grid: integrals over it are doubled (real part), which is exact for
classical noise where :math:`S_{\alpha\beta}(-\omega) = S^*_{\alpha\beta}(\omega)`.

All integrals use the trapezoidal rule on the grid given by the caller.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GridMismatchError, ShapeError, ValidationError

__all__ = [
    "Spectrum",
    "white",
    "power_law",
    "tabulated",
    "frequency_grid",
    "default_grid",
    "trapezoid_weights",
]


def trapezoid_weights(omega) -> np.ndarray:
    """Weights ``w`` with ``sum(w * f) == trapezoid(f, omega)``."""
    omega = np.asarray(omega, dtype=float)
    if omega.size < 2:
        raise ValidationError("integration needs a grid of at least two points")
    dw = np.diff(omega)
    w = np.zeros_like(omega)
    w[:-1] += dw / 2
    w[1:] += dw / 2
    return w


def _check_grid(omega) -> np.ndarray:
    omega = np.array(omega, dtype=float).ravel()
    if omega.size == 0:
        raise ValidationError("frequency grid is empty")
    if not np.all(np.isfinite(omega)):
        raise ValidationError("frequency grid contains non-finite values")
    if np.any(np.diff(omega) <= 0):
        raise ValidationError("frequency grid must be strictly increasing")
    omega.flags.writeable = False
    return omega


def _default_ids(n):
    return tuple(f"B{i}" for i in range(n))


@dataclass(frozen=True, eq=False)
class Spectrum:
    r"""Cross power spectral density :math:`S_{\alpha\beta}(\omega)`.

    Attributes
    ----------
    omega : ndarray, shape (n_omega,)
        Strictly increasing angular frequencies.
    values : ndarray, shape (n_sources, n_sources, n_omega)
        Complex, Hermitian in the source indices at every frequency.
    source_ids : tuple of str
    model : dict or None
        Parameters of the analytic model, if constructed from one. Used by
        the Monte Carlo sampler.
    """

    omega: np.ndarray
    values: np.ndarray
    source_ids: tuple
    model: dict | None = field(default=None)

    def __post_init__(self):
        omega = _check_grid(self.omega)
        vals = np.array(self.values, dtype=complex)
        n = len(self.source_ids)
        if vals.shape != (n, n, omega.size):
            raise ShapeError(
                f"spectrum values have shape {vals.shape}, expected {(n, n, omega.size)}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("spectrum contains non-finite values")
        herm = np.abs(vals - vals.conj().transpose(1, 0, 2)).max(initial=0.0)
        scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
        if herm > 1e-12 * scale:
            raise ValidationError("cross spectrum must satisfy S_ab = conj(S_ba)")
        diag = np.einsum("aaw->aw", vals)
        if np.any(diag.real < 0):
            raise ValidationError("diagonal spectral densities must be nonnegative")
        vals.flags.writeable = False
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "source_ids", tuple(str(s) for s in self.source_ids))

    @property
    def n_sources(self) -> int:
        return len(self.source_ids)

    @property
    def one_sided(self) -> bool:
        """True if the grid holds only nonnegative frequencies."""
        return bool(self.omega[0] >= 0)

    def diagonal(self) -> np.ndarray:
        """Auto-spectra ``S_aa``, shape ``(n_sources, n_omega)``."""
        return np.einsum("aaw->aw", self.values).real

    def is_diagonal(self) -> bool:
        off = self.values.copy()
        idx = np.arange(self.n_sources)
        off[idx, idx] = 0
        return not np.any(off)

    def line_integral(self, integrand) -> np.ndarray:
        r""":math:`\int_{-\infty}^{\infty}\frac{d\omega}{2\pi} f(\omega)` over the last axis.

        On a one-sided grid the result is ``2 Re`` of the half-line integral,
        valid for integrands with :math:`f(-\omega) = f^*(\omega)`.
        """
        w = trapezoid_weights(self.omega) / (2 * np.pi)
        res = np.asarray(integrand) @ w
        if self.one_sided:
            res = 2 * np.real(res)
        return res

    def band_power(self) -> np.ndarray:
        r"""Noise power :math:`\int d\omega/2\pi\, S_{\alpha\alpha}` per source."""
        return np.real(self.line_integral(self.diagonal()))

    def select(self, source_ids: Sequence[str]) -> "Spectrum":
        """Spectrum restricted/reordered to ``source_ids``."""
        try:
            idx = [self.source_ids.index(s) for s in source_ids]
        except ValueError as exc:
            raise GridMismatchError(f"unknown source id: {exc}") from None
        return Spectrum(self.omega, self.values[np.ix_(idx, idx)], tuple(source_ids),
                        self.model)

    def matched_to(self, omega, source_ids, *, interpolate=False) -> "Spectrum":
        """Return a spectrum on ``omega`` with sources ordered as ``source_ids``.

        Grids must agree exactly unless ``interpolate`` is set, in which case
        diagonal entries are interpolated linearly in log-log (where both
        grids are positive and values are positive) and everything else
        linearly.
        """
        source_ids = tuple(source_ids)
        spec = self
        if source_ids != self.source_ids:
            if len(self.source_ids) == 1 and len(source_ids) > 1:
                raise GridMismatchError(
                    f"spectrum has a single source {self.source_ids}, "
                    f"expected {source_ids}")
            spec = self.select(source_ids)
        omega = np.asarray(omega, dtype=float)
        if omega.shape == spec.omega.shape and np.array_equal(omega, spec.omega):
            return spec
        if not interpolate:
            raise GridMismatchError("frequency grids differ; resample the spectrum first")
        return spec.resample(omega)

    def resample(self, omega) -> "Spectrum":
        """Interpolate onto a new grid (no extrapolation beyond the end points)."""
        omega = _check_grid(omega)
        n = self.n_sources
        out = np.empty((n, n, omega.size), complex)
        src = self.omega
        for a in range(n):
            for b in range(n):
                y = self.values[a, b]
                if a == b and np.all(y.real > 0) and src[0] > 0 and omega[0] > 0:
                    out[a, b] = np.exp(np.interp(np.log(omega), np.log(src), np.log(y.real)))
                else:
                    out[a, b] = (np.interp(omega, src, y.real)
                                 + 1j * np.interp(omega, src, y.imag))
        return Spectrum(omega, out, self.source_ids, self.model)


def _ids(source_ids, n_sources):
    if source_ids is None:
        return _default_ids(n_sources)
    if isinstance(source_ids, str):
        return (source_ids,)
    return tuple(source_ids)


def white(level, omega, source_ids=None, n_sources: int = 1) -> Spectrum:
    """Frequency-independent spectrum, uncorrelated between sources.

    ``level`` may be a scalar or one value per source.
    """
    omega = _check_grid(omega)
    ids = _ids(source_ids, n_sources)
    levels = np.broadcast_to(np.asarray(level, dtype=float), (len(ids),))
    if np.any(levels < 0):
        raise ValidationError("white-noise level must be nonnegative")
    vals = np.zeros((len(ids), len(ids), omega.size), complex)
    for a, lv in enumerate(levels):
        vals[a, a] = lv
    model = {"model": "white", "level": levels.tolist()}
    return Spectrum(omega, vals, ids, model)


def power_law(amplitude, exponent, omega, source_ids=None, n_sources: int = 1,
              omega_ref: float = 1.0) -> Spectrum:
    r"""Spectrum :math:`S(\omega) = A\,(\omega_\text{ref}/|\omega|)^a`.

    ``amplitude`` is the value at ``omega_ref`` (with the default reference
    ``1`` this is simply :math:`A/|\omega|^a`).
    """
    omega = _check_grid(omega)
    exponent = float(exponent)
    if exponent > 0 and np.any(omega == 0):
        raise ValidationError("power law with positive exponent is singular at omega = 0")
    ids = _ids(source_ids, n_sources)
    amps = np.broadcast_to(np.asarray(amplitude, dtype=float), (len(ids),))
    if np.any(amps < 0):
        raise ValidationError("amplitude must be nonnegative")
    with np.errstate(divide="ignore"):
        shape = (float(omega_ref) / np.abs(omega)) ** exponent if exponent != 0 \
            else np.ones_like(omega)
    vals = np.zeros((len(ids), len(ids), omega.size), complex)
    for a, amp in enumerate(amps):
        vals[a, a] = amp * shape
    model = {"model": "power_law", "amplitude": amps.tolist(), "exponent": exponent,
             "omega_ref": float(omega_ref)}
    return Spectrum(omega, vals, ids, model)


def tabulated(omega, values, source_ids=None) -> Spectrum:
    """Spectrum from tabulated values, stored verbatim.

    ``values`` may have shape ``(n_omega,)`` (one source), ``(n, n_omega)``
    (auto-spectra only) or ``(n, n, n_omega)``.
    """
    omega = _check_grid(omega)
    vals = np.asarray(values, dtype=complex)
    if vals.ndim == 1:
        vals = vals[None, None]
    elif vals.ndim == 2:
        full = np.zeros((vals.shape[0], vals.shape[0], vals.shape[1]), complex)
        idx = np.arange(vals.shape[0])
        full[idx, idx] = vals
        vals = full
    elif vals.ndim != 3:
        raise ShapeError(f"cannot interpret spectrum values of shape {vals.shape}")
    if vals.shape[-1] != omega.size:
        raise ShapeError(
            f"spectrum has {vals.shape[-1]} frequency points, grid has {omega.size}")
    ids = _ids(source_ids, vals.shape[0])
    return Spectrum(omega, vals, ids)


def frequency_grid(omega_min: float, omega_max: float, n: int, scale: str = "log",
                   *, symmetric: bool = False) -> np.ndarray:
    """Frequency grid helper.

    ``scale='log'`` needs ``0 < omega_min``; with ``symmetric=True`` the
    mirrored negative frequencies are prepended (a log grid then has no
    point at zero).
    """
    n = int(n)
    if n < 2:
        raise ValidationError("grid needs at least two points")
    if not omega_max > omega_min:
        raise ValidationError("omega_max must exceed omega_min")
    if scale == "log":
        if omega_min <= 0:
            raise ValidationError("log grid needs omega_min > 0")
        grid = np.geomspace(omega_min, omega_max, n)
    elif scale == "linear":
        grid = np.linspace(omega_min, omega_max, n)
    else:
        raise ValidationError(f"unknown grid scale {scale!r}")
    if symmetric:
        if grid[0] == 0:
            grid = np.concatenate([-grid[:0:-1], grid])
        else:
            grid = np.concatenate([-grid[::-1], grid])
    return grid


def default_grid(pulse, n: int = 500, *, ir_factor: float = 1e-2,
                 uv_factor: float = 1e2) -> np.ndarray:
    """Log grid from ``2π·ir_factor/τ`` to ``2π·uv_factor/Δt_min``."""
    tau = pulse.duration
    dt_min = float(np.min(pulse.dt))
    return frequency_grid(2 * np.pi * ir_factor / tau, 2 * np.pi * uv_factor / dt_min, n)
