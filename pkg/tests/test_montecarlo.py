import numpy as np
import pytest

from pulsefilter import (McConfig, PowerLawNoise, PulseSequence, WhiteNoise,
                         mc_entanglement_fidelity, sample_trajectories, scaling_benchmark)
from pulsefilter._backend import available_backends
from pulsefilter.errors import ValidationError

from conftest import SIGMA, random_qubit_pulse


def fid_pulse(tau=1.0):
    return PulseSequence(None, None, [SIGMA[2] / 2], [[1]], [tau], "pauli", noise_ids=["z"])


def test_zero_level_gives_zero_noise():
    cfg = McConfig(n_traj=5, spectrum_model=WhiteNoise(0.0))
    assert not np.any(sample_trajectories(cfg, 64, 0.1, 2))
    cfg = McConfig(n_traj=5, spectrum_model=PowerLawNoise(0.0, 1.0))
    assert not np.any(sample_trajectories(cfg, 64, 0.1))


def test_noiseless_pulse_has_unit_fidelity(rng):
    p = random_qubit_pulse(rng)
    res = mc_entanglement_fidelity(p, McConfig(n_traj=4, spectrum_model=WhiteNoise(0.0)))
    np.testing.assert_allclose(res.samples, 1.0, atol=1e-12)


def test_white_sample_variance():
    level, dt = 0.3, 0.02
    cfg = McConfig(n_traj=100, seed=3, spectrum_model=WhiteNoise(level))
    b = sample_trajectories(cfg, 1000, dt)
    assert np.var(b) == pytest.approx(level / dt, rel=0.05)


def test_power_law_periodogram_slope():
    n, dt = 4096, 1.0
    cfg = McConfig(n_traj=200, seed=1, spectrum_model=PowerLawNoise(1.0, 2.0))
    b = sample_trajectories(cfg, n, dt)[:, 0]
    psd = np.mean(np.abs(np.fft.rfft(b, axis=-1)) ** 2, axis=0)
    freqs = 2 * np.pi * np.fft.rfftfreq(n, dt)
    band = slice(4, n // 4)
    slope = np.polyfit(np.log(freqs[band]), np.log(psd[band]), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.05)


def test_colored_variance_matches_band_integral():
    n, dt, amp, a = 2048, 0.5, 2.0, 1.0
    model = PowerLawNoise(amp, a)
    cfg = McConfig(n_traj=400, seed=5, spectrum_model=model)
    b = sample_trajectories(cfg, n, dt)
    w = 2 * np.pi * np.fft.rfftfreq(n, dt)[1:]
    # discrete band power over the kept bins, both signs of frequency
    weights = np.full(w.size, 2.0)
    if n % 2 == 0:
        weights[-1] = 1.0
    expected = np.sum(weights * model.psd(w)) * (w[1] - w[0]) / (2 * np.pi)
    assert np.var(b) == pytest.approx(expected, rel=0.05)


def test_trajectories_independent_of_chunking():
    cfg = McConfig(n_traj=10, seed=11, spectrum_model=PowerLawNoise(1.0, 0.5))
    full = sample_trajectories(cfg, 128, 0.1, 2)
    part = sample_trajectories(cfg, 128, 0.1, 2, traj_range=range(4, 10))
    np.testing.assert_array_equal(full[4:], part)


@pytest.mark.parametrize("backend", available_backends())
def test_deterministic_across_threads_and_backends(rng, backend):
    p = random_qubit_pulse(rng, noise=("x", "z"))
    base = McConfig(n_traj=40, n_sub=5, seed=9, spectrum_model=WhiteNoise(1e-3))
    ref = mc_entanglement_fidelity(p, base, backend="python")
    threaded = McConfig(n_traj=40, n_sub=5, seed=9, spectrum_model=WhiteNoise(1e-3), threads=4)
    other = mc_entanglement_fidelity(p, threaded, backend=backend)
    np.testing.assert_allclose(other.samples, ref.samples, atol=1e-13)
    again = mc_entanglement_fidelity(p, threaded, backend=backend)
    np.testing.assert_array_equal(other.samples, again.samples)


def test_free_evolution_white_matches_closed_form():
    S0, tau = 0.02, 1.0
    res = mc_entanglement_fidelity(fid_pulse(tau), McConfig(n_traj=4000, n_sub=10, seed=2,
                                                            spectrum_model=WhiteNoise(S0)))
    # accumulated phase is Gaussian with variance S0*tau
    exact = (1 - np.exp(-S0 * tau / 2)) / 2
    assert abs(res.infidelity - exact) <= 3 * res.std_error
    assert exact == pytest.approx(S0 * tau / 4, rel=S0 * tau)


def test_unequal_segments_colored_noise_runs(rng):
    p = random_qubit_pulse(rng, scale_dt=1.0)
    res = mc_entanglement_fidelity(p, McConfig(n_traj=20, n_sub=4,
                                               spectrum_model=PowerLawNoise(1e-4, 1.0)))
    assert 0.9 < res.mean <= 1.0


@pytest.mark.parametrize("kwargs", [{"n_traj": 0}, {"n_sub": 0}, {"seed": -1}])
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        McConfig(**kwargs)


def test_scaling_benchmark_small(tmp_path):
    cfg = McConfig(n_traj=5, n_sub=2, spectrum_model=WhiteNoise(1e-4))
    res = scaling_benchmark([2, 3], cfg, {"n_omega": 20, "n_seg": 3})
    assert {(r["d"], r["method"]) for r in res.records} == {
        (d, m) for d in (2, 3) for m in ("mc", "ff_liouville", "ff_conj")}
    assert set(res.fits) == {"mc", "ff_liouville", "ff_conj"}
    ests = {r["method"]: r["estimate"] for r in res.records if r["d"] == 2}
    assert ests["ff_liouville"] == pytest.approx(ests["ff_conj"], rel=1e-8)
    out = tmp_path / "bench.csv"
    res.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "d,method,wall_seconds,estimate,stderr"
    assert len(lines) == 7
