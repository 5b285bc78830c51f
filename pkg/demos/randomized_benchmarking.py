"""Single-qubit randomized benchmarking with filter functions.

Cliffords are compiled from X90 and Y90 primitives (shortest words found
by breadth-first search); the identity is an idle segment of the same
length. The survival probability of a sequence that ends in the inverting
Clifford is taken to first order from its cumulant,
``p = 1 + K_ZZ / 2``, and the slope of ``1 - p`` against the sequence
length is compared with the mean average gate infidelity of the 24
Cliffords.

Run as a script for a short report, including the 1/f^0.7 comparison of a
composite gateset (primitive sequences) and a single-segment gateset (each
Clifford as one rotation).
"""
from __future__ import annotations

import argparse
import json
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from pulsefilter import (PulseSequence, avg_gate_fidelity, concatenate,
                         cumulant_function_pauli, decay_amplitudes, error_transfer_matrix,
                         power_law, single_pulse_control_matrix, white)

SIGMA = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)
NOISE_OPS = SIGMA / 2
NOISE_IDS = ("x", "y", "z")
GATE_TIME = 1.0
Z_INDEX = 3


def _canonical(U, decimals=8):
    """Hashable key of a unitary modulo global phase."""
    flat = U.ravel()
    k = int(np.argmax(np.abs(flat) > 1e-6))
    V = U * np.exp(-1j * np.angle(flat[k]))
    V = np.round(V, decimals) + 0.0
    return V.tobytes()


def primitive(axis: int) -> np.ndarray:
    return sla.expm(-0.25j * np.pi * SIGMA[axis])


def clifford_words():
    """Shortest X90/Y90 words (axis indices in time order) for all 24 Cliffords."""
    identity = np.eye(2, dtype=complex)
    seen = {_canonical(identity): ((), identity)}
    queue = deque([((), identity)])
    while queue:
        word, U = queue.popleft()
        for axis in (0, 1):
            V = primitive(axis) @ U
            key = _canonical(V)
            if key not in seen:
                seen[key] = (word + (axis,), V)
                queue.append((word + (axis,), V))
    words = sorted(seen.values(), key=lambda wu: (len(wu[0]), wu[0]))
    return [w for w, _ in words], [u for _, u in words]


def composite_pulse(word) -> PulseSequence:
    n = max(1, len(word))
    coeffs = np.zeros((2, n))
    for g, axis in enumerate(word):
        coeffs[axis, g] = 0.5 * np.pi / GATE_TIME
    return PulseSequence(SIGMA[:2] / 2, coeffs, NOISE_OPS, np.ones((3, n)),
                         np.full(n, GATE_TIME), "pauli", noise_ids=NOISE_IDS,
                         control_ids=("x", "y"))


def single_segment_pulse(U) -> PulseSequence:
    """One segment rotating about the Clifford's axis by its angle."""
    V = U / np.sqrt(np.linalg.det(U))
    if np.real(np.trace(V)) < 0:
        V = -V
    cos_half = np.clip(np.real(np.trace(V)) / 2, -1, 1)
    angle = 2 * np.arccos(cos_half)
    coeffs = np.zeros((3, 1))
    if angle > 1e-9:
        axis = np.real([1j * np.trace(V @ s) for s in SIGMA]) / (2 * np.sin(angle / 2))
        coeffs[:, 0] = angle * axis / GATE_TIME
    return PulseSequence(SIGMA / 2, coeffs, NOISE_OPS, np.ones((3, 1)), [GATE_TIME],
                         "pauli", noise_ids=NOISE_IDS, control_ids=("x", "y", "z"))


@dataclass
class Gateset:
    pulses: list
    unitaries: list
    keys: dict

    @classmethod
    def build(cls, kind: str = "composite") -> "Gateset":
        words, unitaries = clifford_words()
        if kind == "composite":
            pulses = [composite_pulse(w) for w in words]
        elif kind == "single":
            pulses = [single_segment_pulse(U) for U in unitaries]
        else:
            raise ValueError(f"unknown gateset {kind!r}")
        keys = {_canonical(U): i for i, U in enumerate(unitaries)}
        return cls(pulses, unitaries, keys)

    def inverse_index(self, sequence) -> int:
        U = np.eye(2, dtype=complex)
        for i in sequence:
            U = self.unitaries[i] @ U
        return self.keys[_canonical(U.conj().T)]

    @property
    def longest(self) -> float:
        return max(p.duration for p in self.pulses)


def rb_grid(max_duration: float, omega_max: float = 60.0 / GATE_TIME, *,
            oversample: float = 2.5, ir_points: int = 0) -> np.ndarray:
    """Uniform one-sided grid fine enough for sequences up to ``max_duration``.

    A spacing of ``2π/(oversample·T)`` with ``oversample > 2`` keeps the
    aliased lags of the trapezoid rule outside the sequence, so cross terms
    between gates integrate correctly for white noise. ``ir_points`` adds a
    log-spaced stretch below the first nonzero point (for spectra that
    diverge at zero, which then starts at that point instead of zero).
    """
    step = 2 * np.pi / (oversample * max_duration)
    grid = np.arange(0.0, omega_max + step, step)
    if ir_points:
        grid = np.concatenate([np.geomspace(step * 1e-3, step, ir_points, endpoint=False),
                               grid[1:]])
    return grid


def clifford_infidelities(gateset: Gateset, spectrum) -> np.ndarray:
    """First-order average gate infidelity of every Clifford."""
    out = []
    for p in gateset.pulses:
        cm = single_pulse_control_matrix(p, spectrum.omega)
        K = cumulant_function_pauli(decay_amplitudes(cm, spectrum))
        out.append(1 - avg_gate_fidelity(error_transfer_matrix(K, "first_order"), 2))
    return np.array(out)


def survival_probability(gateset: Gateset, sequence, spectrum) -> float:
    seq = list(sequence) + [gateset.inverse_index(sequence)]
    _, cm = concatenate([gateset.pulses[i] for i in seq], spectrum.omega)
    K = cumulant_function_pauli(decay_amplitudes(cm, spectrum))
    return float(1 + np.real(K[Z_INDEX, Z_INDEX]) / 2)


@dataclass
class RbResult:
    lengths: np.ndarray
    mean_decay: np.ndarray
    slope: float
    intercept: float
    reference: float

    @property
    def relative_deviation(self) -> float:
        return abs(self.slope - self.reference) / self.reference

    def to_dict(self):
        return {"lengths": self.lengths.tolist(), "mean_decay": self.mean_decay.tolist(),
                "slope": self.slope, "intercept": self.intercept,
                "reference": self.reference, "relative_deviation": self.relative_deviation}


def run_rb(gateset: Gateset, spectrum, lengths, n_sequences: int = 30, seed: int = 0
           ) -> RbResult:
    """Average ``1 - p`` over random sequences and fit a line with intercept."""
    rng = np.random.default_rng(seed)
    lengths = np.asarray(lengths, dtype=int)
    n_cliff = len(gateset.pulses)
    for p in gateset.pulses:
        single_pulse_control_matrix(p, spectrum.omega)
    decay = np.empty(lengths.size)
    for i, m in enumerate(lengths):
        vals = [1 - survival_probability(gateset, rng.integers(n_cliff, size=m), spectrum)
                for _ in range(n_sequences)]
        decay[i] = np.mean(vals)
    slope, intercept = np.polyfit(lengths, decay, 1)
    reference = float(np.mean(clifford_infidelities(gateset, spectrum)))
    return RbResult(lengths, decay, float(slope), float(intercept), reference)


def tuned_white_spectrum(gateset: Gateset, target: float, omega) -> object:
    """White spectrum on all three sources with mean Clifford infidelity ``target``."""
    unit = white(1.0, omega, source_ids=NOISE_IDS)
    scale = target / float(np.mean(clifford_infidelities(gateset, unit)))
    return white(scale, omega, source_ids=NOISE_IDS)


def tuned_power_law(gateset: Gateset, target: float, exponent: float, omega):
    unit = power_law(1.0, exponent, omega, source_ids=NOISE_IDS)
    scale = target / float(np.mean(clifford_infidelities(gateset, unit)))
    return power_law(scale, exponent, omega, source_ids=NOISE_IDS)


DEFAULT_LENGTHS = np.linspace(1, 101, 11).astype(int)


def pink_noise_report(lengths=DEFAULT_LENGTHS, n_sequences: int = 30, seed: int = 0,
                      exponent: float = 0.7, target: float = 1e-3) -> dict:
    """Deviation of the RB slope from the mean Clifford infidelity under 1/f^a noise."""
    report = {}
    for kind in ("single", "composite"):
        gs = Gateset.build(kind)
        T = (max(lengths) + 1) * gs.longest
        omega = rb_grid(T, ir_points=40)
        spec = tuned_power_law(gs, target, exponent, omega)
        report[kind] = run_rb(gs, spec, lengths, n_sequences, seed).to_dict()
    return report


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sequences", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--pink", action="store_true", help="also run the 1/f^0.7 comparison")
    args = parser.parse_args(argv)
    gs = Gateset.build("composite")
    omega = rb_grid((DEFAULT_LENGTHS.max() + 1) * gs.longest)
    spec = tuned_white_spectrum(gs, 1e-3, omega)
    out = {"white": run_rb(gs, spec, DEFAULT_LENGTHS, args.sequences, args.seed).to_dict()}
    if args.pink:
        out["pink"] = pink_noise_report(n_sequences=args.sequences, seed=args.seed)
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
