r"""Monte Carlo reference for noisy piecewise-constant evolution.

Noise trajectories are sampled in the time domain, each trajectory is
propagated exactly (one eigendecomposition per sub-step) and the
entanglement fidelity :math:`|\mathrm{tr}(Q^\dagger U)/d|^2` with respect to
the ideal propagator is averaged.

Variance convention: a band-limited noise trace sampled with step
:math:`\delta t` has :math:`\mathrm{Var}[b] = \int d\omega/2\pi\, S(\omega)`
over :math:`|\omega| \le \pi/\delta t`. For white noise this is
:math:`S_0/\delta t`.
"""
from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._backend import get_kernels
from .errors import ValidationError

__all__ = [
    "WhiteNoise",
    "PowerLawNoise",
    "McConfig",
    "McResult",
    "sample_trajectories",
    "mc_entanglement_fidelity",
    "scaling_benchmark",
    "BenchmarkResult",
    "noise_model_from_spectrum",
]


@dataclass(frozen=True)
class WhiteNoise:
    """Two-sided white spectrum of the given level."""

    level: float

    def __post_init__(self):
        if self.level < 0:
            raise ValidationError("noise level must be nonnegative")

    def psd(self, omega):
        return np.full_like(np.asarray(omega, dtype=float), self.level)


@dataclass(frozen=True)
class PowerLawNoise:
    r"""Spectrum :math:`A(\omega_\text{ref}/|\omega|)^a` between cutoffs.

    ``ir_cutoff`` and ``uv_cutoff`` are angular frequencies; ``None`` means
    the defaults of :func:`sample_trajectories` (inverse trace length and
    the Nyquist frequency).
    """

    amplitude: float
    exponent: float
    ir_cutoff: float | None = None
    uv_cutoff: float | None = None
    omega_ref: float = 1.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValidationError("amplitude must be nonnegative")

    def psd(self, omega):
        omega = np.abs(np.asarray(omega, dtype=float))
        out = np.zeros_like(omega)
        pos = omega > 0
        out[pos] = self.amplitude * (self.omega_ref / omega[pos]) ** self.exponent
        return out


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings.

    ``spectrum_model`` is a single model shared by all (independent) noise
    sources or one model per source.
    """

    n_traj: int = 1000
    n_sub: int = 20
    seed: int = 0
    spectrum_model: object = field(default_factory=lambda: WhiteNoise(1.0))
    threads: int = 1

    def __post_init__(self):
        if self.n_traj < 1 or self.n_sub < 1:
            raise ValidationError("n_traj and n_sub must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must fit in 64 bits")

    def model_for(self, source: int):
        m = self.spectrum_model
        if isinstance(m, (list, tuple)):
            return m[source]
        return m


@dataclass(frozen=True)
class McResult:
    mean: float
    std_error: float
    samples: np.ndarray

    @property
    def infidelity(self) -> float:
        return 1.0 - self.mean


def _trajectory_rng(seed: int, traj: int) -> np.random.Generator:
    # one stream per trajectory: results do not depend on how work is split
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(traj),)))


def _shape_colored(white: np.ndarray, model: PowerLawNoise, dt_sub: float,
                   total_duration: float) -> np.ndarray:
    n = white.shape[-1]
    freqs = 2 * np.pi * np.fft.rfftfreq(n, dt_sub)
    ir = model.ir_cutoff if model.ir_cutoff is not None else 2 * np.pi / total_duration
    uv = model.uv_cutoff if model.uv_cutoff is not None else np.pi / dt_sub
    gain = np.sqrt(model.psd(freqs) / dt_sub)
    gain[(freqs < ir) | (freqs > uv) | (freqs == 0)] = 0.0
    return np.fft.irfft(np.fft.rfft(white, axis=-1) * gain, n=n, axis=-1)


def sample_trajectories(cfg: McConfig, total_steps: int, dt_sub: float,
                        n_sources: int = 1, *, traj_range=None) -> np.ndarray:
    """Noise values ``b`` of shape ``(n_traj, n_sources, total_steps)``.

    White noise gives i.i.d. Gaussians of variance ``level/dt_sub``. Power
    laws shape unit white noise in the frequency domain by
    ``sqrt(S(ω)/dt_sub)`` with the bins outside the cutoffs (and the DC
    bin) removed.
    """
    total_steps = int(total_steps)
    if traj_range is None:
        traj_range = range(cfg.n_traj)
    out = np.empty((len(traj_range), n_sources, total_steps))
    for row, traj in enumerate(traj_range):
        rng = _trajectory_rng(cfg.seed, traj)
        raw = rng.standard_normal((n_sources, total_steps))
        for a in range(n_sources):
            model = cfg.model_for(a)
            if isinstance(model, WhiteNoise):
                out[row, a] = raw[a] * np.sqrt(model.level / dt_sub)
            elif isinstance(model, PowerLawNoise):
                out[row, a] = _shape_colored(raw[a], model, dt_sub, total_steps * dt_sub)
            else:
                raise ValidationError(f"unsupported noise model {model!r}")
    return out


def _substep_grid(p, n_sub):
    dts = np.repeat(p.dt / n_sub, n_sub)
    seg = np.repeat(np.arange(p.n_segments), n_sub)
    return dts, seg


def _noise_coefficients(p, cfg: McConfig, traj_range) -> np.ndarray:
    """``b_α(t) s_α(t)`` per trajectory, source and sub-step."""
    dts, seg = _substep_grid(p, cfg.n_sub)
    n_steps = dts.size
    n_src = p.n_noise
    white_only = all(isinstance(cfg.model_for(a), WhiteNoise) for a in range(n_src))
    if white_only or np.allclose(p.dt, p.dt[0], rtol=1e-12, atol=0):
        dt_ref = float(dts.min())
        b = sample_trajectories(cfg, n_steps, dt_ref, n_src, traj_range=traj_range)
        if white_only:
            # per-step variance level/δt_n; samples drawn for δt_ref
            b = b * np.sqrt(dt_ref / dts)
    else:
        # colored noise with unequal segments: sample a uniform fine trace and
        # read it at the sub-step midpoints
        dt_ref = float(dts.min())
        mids = np.cumsum(dts) - dts / 2
        n_fine = int(np.ceil(np.sum(dts) / dt_ref)) + 1
        fine = sample_trajectories(cfg, n_fine, dt_ref, n_src, traj_range=traj_range)
        grid = (np.arange(n_fine) + 0.5) * dt_ref
        b = np.empty((fine.shape[0], n_src, n_steps))
        for t in range(fine.shape[0]):
            for a in range(n_src):
                b[t, a] = np.interp(mids, grid, fine[t, a])
    return b * p.noise_sens[:, seg][None]


def mc_entanglement_fidelity(p, cfg: McConfig, *, backend: str | None = None,
                             keep_samples: bool = True) -> McResult:
    r"""Monte Carlo estimate of the entanglement fidelity of a noisy pulse.

    Every segment is split into ``cfg.n_sub`` equal sub-steps on which the
    noise is constant. Per trajectory the estimator is
    :math:`|\mathrm{tr}(Q_G^\dagger U)/d|^2`.

    Returns
    -------
    McResult
        Sample mean and its standard error.
    """
    kern = get_kernels(backend)
    dts, seg = _substep_grid(p, cfg.n_sub)
    hc = np.ascontiguousarray(p.control_hamiltonians()[seg])
    nops = np.ascontiguousarray(p.noise_ops)
    d = p.dim
    ideal = p.total_propagator
    out = np.empty((cfg.n_traj, d, d), complex)

    def run(chunk: range):
        coeffs = np.ascontiguousarray(_noise_coefficients(p, cfg, chunk))
        buf = np.empty((len(chunk), d, d), complex)
        if p.n_noise == 0:
            buf[:] = ideal
        else:
            kern.propagate_trajectories(hc, nops, coeffs, np.ascontiguousarray(dts), buf)
        out[chunk.start:chunk.stop] = buf

    chunk_size = max(1, min(256, cfg.n_traj // max(1, cfg.threads)))
    chunks = [range(s, min(s + chunk_size, cfg.n_traj))
              for s in range(0, cfg.n_traj, chunk_size)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            list(pool.map(run, chunks))
    else:
        for c in chunks:
            run(c)
    overlap = np.einsum("ij,tij->t", ideal.conj(), out) / d
    fid = np.abs(overlap) ** 2
    mean = float(np.mean(fid))
    stderr = float(np.std(fid, ddof=1) / np.sqrt(fid.size)) if fid.size > 1 else float("nan")
    return McResult(mean, stderr, fid if keep_samples else np.empty(0))


def noise_model_from_spectrum(spectrum):
    """Monte Carlo noise model(s) matching an analytic spectrum, if possible."""
    model = spectrum.model
    if not model:
        raise ValidationError("tabulated spectra have no time-domain noise model")
    n = spectrum.n_sources
    if model["model"] == "white":
        levels = model["level"]
        return tuple(WhiteNoise(levels[a]) for a in range(n))
    if model["model"] == "power_law":
        return tuple(PowerLawNoise(model["amplitude"][a], model["exponent"],
                                   omega_ref=model.get("omega_ref", 1.0)) for a in range(n))
    raise ValidationError(f"unknown spectrum model {model['model']!r}")


# ---------------------------------------------------------------------------
# scaling benchmark
# ---------------------------------------------------------------------------
@dataclass
class BenchmarkResult:
    """Wall times per dimension and method with power-law fits ``t = a d^b``."""

    records: list
    fits: dict

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["d", "method", "wall_seconds", "estimate", "stderr"])
            for r in self.records:
                writer.writerow([r["d"], r["method"], repr(r["wall_seconds"]),
                                 repr(r["estimate"]), repr(r["stderr"])])


def _random_benchmark_pulse(d, n_alpha, n_seg, rng):
    from .pulse import PulseSequence

    def herm(traceless):
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = (x + x.conj().T) / 2
        if traceless:
            h -= np.trace(h) / d * np.eye(d)
        return h / np.linalg.norm(h)

    c_ops = [herm(False) for _ in range(2)]
    n_ops = [herm(True) for _ in range(n_alpha)]
    coeffs = rng.normal(size=(2, n_seg)) * 5
    sens = np.ones((n_alpha, n_seg))
    dt = rng.uniform(0.5, 1.5, n_seg) / n_seg
    return PulseSequence(c_ops, coeffs, n_ops, sens, dt, "ggm")


def _fit_power_law(ds, ts):
    ds, ts = np.asarray(ds, float), np.asarray(ts, float)
    ok = (ts > 0) & np.isfinite(ts)
    if ok.sum() < 2:
        return {"a": float("nan"), "b": float("nan"), "residuals": []}
    A = np.vstack([np.ones(ok.sum()), np.log(ds[ok])]).T
    coef, *_ = np.linalg.lstsq(A, np.log(ts[ok]), rcond=None)
    resid = np.log(ts[ok]) - A @ coef
    return {"a": float(np.exp(coef[0])), "b": float(coef[1]),
            "residuals": [float(x) for x in resid]}


def scaling_benchmark(dims: Sequence[int], cfg: McConfig | None = None,
                      ff_params: dict | None = None, *, timeout: float = 120.0,
                      seed: int = 0) -> BenchmarkResult:
    """Time Monte Carlo against both filter-function routes over dimensions.

    Parameters
    ----------
    dims : sequence of int
    cfg : McConfig
        Monte Carlo settings (white noise is used for the estimate).
    ff_params : dict
        ``n_omega`` (default 200), ``n_alpha`` (3), ``n_seg`` (10),
        ``level`` (1e-4).
    timeout : float
        A method is skipped for larger ``d`` once the extrapolated time of
        its next cell exceeds this many seconds.

    Notes
    -----
    Wall times depend on hardware; nothing here is pass/fail.
    """
    from .control_matrix import noise_operators_hilbert, single_pulse_control_matrix
    from .metrics import infidelity
    from .spectrum import frequency_grid, white

    ff = {"n_omega": 200, "n_alpha": 3, "n_seg": 10, "level": 1e-4}
    ff.update(ff_params or {})
    if cfg is None:
        cfg = McConfig(n_traj=100, n_sub=10, seed=seed,
                       spectrum_model=WhiteNoise(ff["level"]))
    rng = np.random.default_rng(seed)
    records = []
    history: dict = {"mc": [], "ff_liouville": [], "ff_conj": []}
    for d in dims:
        p = _random_benchmark_pulse(int(d), ff["n_alpha"], ff["n_seg"], rng)
        omega = frequency_grid(1e-2 / p.duration, 1e2 * 2 * np.pi / p.dt.min(),
                               ff["n_omega"])
        spec = white(ff["level"], omega, source_ids=p.noise_ids)

        def mc():
            res = mc_entanglement_fidelity(p, cfg)
            return 1 - res.mean, res.std_error

        def liouville():
            cm = single_pulse_control_matrix(p, omega, cache=False)
            return float(np.sum(infidelity(cm, spec, p.dim))), 0.0

        def conj():
            ops = noise_operators_hilbert(p, omega)
            F = np.einsum("awij,awij->aw", ops.conj(), ops).real
            return float(np.sum(spec.line_integral(spec.diagonal() * F)) / p.dim), 0.0

        for name, fn in (("mc", mc), ("ff_liouville", liouville), ("ff_conj", conj)):
            past = history[name]
            if past and past[-1][1] is None:
                continue
            if len(past) >= 2:
                fit = _fit_power_law([x for x, _ in past], [t for _, t in past])
                predicted = fit["a"] * d ** fit["b"] if np.isfinite(fit["b"]) else 0.0
                if predicted > timeout:
                    past.append((d, None))
                    records.append({"d": int(d), "method": name, "wall_seconds": float("nan"),
                                    "estimate": float("nan"), "stderr": float("nan")})
                    continue
            start = time.perf_counter()
            est, err = fn()
            wall = time.perf_counter() - start
            past.append((d, wall))
            records.append({"d": int(d), "method": name, "wall_seconds": wall,
                            "estimate": est, "stderr": err})
    fits = {}
    for name, past in history.items():
        pts = [(x, t) for x, t in past if t is not None]
        fits[name] = _fit_power_law([x for x, _ in pts], [t for _, t in pts])
    return BenchmarkResult(records, fits)
