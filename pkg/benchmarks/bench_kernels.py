"""Compare the compiled and NumPy kernel backends.

Times the control-matrix accumulation and the Monte Carlo trajectory
propagation on random GGM-basis pulses, checks that both backends return
the same numbers, and prints one row per (kernel, d).

    python3 benchmarks/bench_kernels.py --dims 2 3 4 --repeat 3
"""
import argparse
import json
import time

import numpy as np

from pulsefilter import (McConfig, PulseSequence, WhiteNoise, available_backends,
                         frequency_grid, mc_entanglement_fidelity,
                         single_pulse_control_matrix)


def random_pulse(d, n_seg, rng):
    def herm(traceless):
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = (x + x.conj().T) / 2
        if traceless:
            h -= np.trace(h) / d * np.eye(d)
        return h / np.linalg.norm(h)

    return PulseSequence([herm(False) for _ in range(2)], rng.normal(size=(2, n_seg)) * 5,
                         [herm(True) for _ in range(2)], np.ones((2, n_seg)),
                         rng.uniform(0.5, 1.5, n_seg) / n_seg, "ggm")


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def run(dims, n_seg, n_omega, n_traj, n_sub, repeat, seed=0):
    backends = available_backends()
    rng = np.random.default_rng(seed)
    rows = []
    for d in dims:
        p = random_pulse(d, n_seg, rng)
        omega = frequency_grid(1e-2, 1e3, n_omega)
        cfg = McConfig(n_traj=n_traj, n_sub=n_sub, seed=seed, spectrum_model=WhiteNoise(1e-4))
        kernels = {
            "control_matrix": lambda b: single_pulse_control_matrix(
                p, omega, backend=b, cache=False).values,
            "mc_trajectories": lambda b: mc_entanglement_fidelity(p, cfg, backend=b).samples,
        }
        for name, fn in kernels.items():
            times, outs = {}, {}
            for b in backends:
                times[b], outs[b] = best_time(lambda: fn(b), repeat)
            row = {"kernel": name, "d": d, **{f"{b}_s": times[b] for b in backends}}
            if "cython" in times:
                row["speedup"] = times["python"] / times["cython"]
                row["max_abs_diff"] = float(np.max(np.abs(outs["python"] - outs["cython"])))
            rows.append(row)
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description="compiled vs NumPy kernel timings")
    parser.add_argument("--dims", type=int, nargs="+", default=[2, 3, 4, 6])
    parser.add_argument("--n-seg", type=int, default=20)
    parser.add_argument("--n-omega", type=int, default=400)
    parser.add_argument("--n-traj", type=int, default=200)
    parser.add_argument("--n-sub", type=int, default=10)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = parser.parse_args(argv)
    rows = run(args.dims, args.n_seg, args.n_omega, args.n_traj, args.n_sub, args.repeat)
    if args.json:
        print(json.dumps(rows, indent=1))
        return
    if "cython" not in available_backends():
        print("compiled extension not built; timing the NumPy backend only")
    print(f"{'kernel':16s} {'d':>3s} {'python [s]':>11s} {'cython [s]':>11s} "
          f"{'speedup':>8s} {'max |diff|':>11s}")
    for r in rows:
        print(f"{r['kernel']:16s} {r['d']:3d} {r['python_s']:11.4f} "
              f"{r.get('cython_s', float('nan')):11.4f} {r.get('speedup', float('nan')):8.1f} "
              f"{r.get('max_abs_diff', float('nan')):11.2e}")


if __name__ == "__main__":
    main()
