"""Command line front end.

Exit codes: 0 success, 1 parse error, 2 validation error, 3 numerical
failure or resource limit. On failure a single JSON object is written to
stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import files
from .errors import NumericalError, ParseError, ResourceLimitError, ValidationError

__all__ = ["main", "build_parser", "EXIT_CODES"]

EXIT_CODES = {ParseError: 1, ValidationError: 2, NumericalError: 3, ResourceLimitError: 3}

TWO_PI = 2 * np.pi

_CSV_HELP = {
    "filter-function": "CSV columns: omega, then F_<id> per noise source "
                       "(fidelity filter function, diagonal entry).",
    "concat": "FF CSV columns: omega, then F_<id> per noise source of the composite pulse.",
    "periodic": "CSV columns: omega, then F_<id> per noise source of the repeated pulse.",
    "bench": "CSV columns: d (dimension), method (mc, ff_liouville or ff_conj), "
             "wall_seconds, estimate (entanglement infidelity), stderr (0 for FF).",
    "transfer-matrix": "With a .csv output: columns row, col, real, imag "
                       "(row-major). Otherwise JSON with 'real' and 'imag' matrices.",
}


def _add_grid(parser):
    g = parser.add_argument_group("frequency grid")
    g.add_argument("--omega-min", type=float, help="lowest grid frequency")
    g.add_argument("--omega-max", type=float, help="highest grid frequency")
    g.add_argument("--omega-n", type=int, help="number of grid points")
    g.add_argument("--omega-scale", choices=("log", "linear"), default="log")
    g.add_argument("--hz", action="store_true",
                   help="frequencies on the command line, in files and in outputs are "
                        "ordinary frequencies (converted by 2*pi on ingest and egress)")


def _common(parser, *, spectrum=False, out_help="output file (default stdout)"):
    parser.add_argument("--pulse", required=True, help="pulse JSON file")
    if spectrum:
        parser.add_argument("--spectrum", required=True, help="spectrum JSON file")
    parser.add_argument("--out", default=None, help=out_help)
    parser.add_argument("--threads", type=int, default=1, help="worker cap")
    _add_grid(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulsefilter",
        description="Filter functions and noise-averaged transfer matrices of "
                    "piecewise-constant pulses. All frequencies are angular unless --hz.",
        epilog="Exit codes: 0 ok, 1 parse error, 2 validation error, 3 numerical failure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter-function", help="fidelity filter function per source",
                       epilog=_CSV_HELP["filter-function"])
    _common(p)
    p.add_argument("--method", choices=("auto", "liouville", "hilbert"), default="auto")

    p = sub.add_parser("infidelity", help="per-source infidelity JSON")
    _common(p, spectrum=True)
    p.add_argument("--method", choices=("gamma_trace", "ff_integral"), default="gamma_trace")

    p = sub.add_parser("transfer-matrix", help="noise-averaged error transfer matrix",
                       epilog=_CSV_HELP["transfer-matrix"])
    _common(p, spectrum=True)
    p.add_argument("--mode", choices=("exact", "first-order"), default="exact")
    p.add_argument("--with-shifts", action="store_true", help="include frequency shifts")

    p = sub.add_parser("concat", help="concatenate pulses", epilog=_CSV_HELP["concat"])
    p.add_argument("--pulse", required=True, nargs="+", help="pulse files in time order")
    p.add_argument("--out", required=True, help="composite pulse JSON file")
    p.add_argument("--ff-out", default=None, help="filter function CSV (default stdout)")
    p.add_argument("--threads", type=int, default=1)
    _add_grid(p)

    p = sub.add_parser("periodic", help="filter function of a repeated pulse",
                       epilog=_CSV_HELP["periodic"])
    _common(p)
    p.add_argument("--reps", type=int, required=True, help="number of repetitions")
    p.add_argument("--pulse-out", default=None, help="also write the repeated pulse")

    p = sub.add_parser("leakage", help="leakage and seepage rates")
    _common(p, spectrum=True)
    p.add_argument("--projector", required=True, help="projector JSON file")
    p.add_argument("--mode", choices=("exact", "first-order"), default="exact")
    p.add_argument("--with-shifts", action="store_true")

    p = sub.add_parser("mc-validate", help="filter function vs Monte Carlo infidelity")
    _common(p, spectrum=True)
    p.add_argument("--n-traj", type=int, default=2000)
    p.add_argument("--n-sub", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bench", help="scaling benchmark", epilog=_CSV_HELP["bench"])
    p.add_argument("--dims", type=int, nargs="+", default=[2, 3, 4, 6, 8])
    p.add_argument("--n-traj", type=int, default=100)
    p.add_argument("--n-sub", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--out", default=None, help="CSV file (default stdout)")
    p.add_argument("--fits-out", default=None, help="power-law fits JSON")
    p.add_argument("--threads", type=int, default=1)
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
def _flag_grid(args):
    # --omega-n alone only resizes the default grid
    if args.omega_min is None and args.omega_max is None:
        return None
    if args.omega_min is None or args.omega_max is None or args.omega_n is None:
        raise ValidationError("--omega-min and --omega-max need --omega-n")
    from .spectrum import frequency_grid
    scale = TWO_PI if args.hz else 1.0
    return frequency_grid(args.omega_min * scale, args.omega_max * scale, args.omega_n,
                          args.omega_scale)


def _pulse_grid(args, pulse):
    omega = _flag_grid(args)
    if omega is None:
        from .spectrum import default_grid
        omega = default_grid(pulse, args.omega_n or 500)
    return omega


def _spectrum(args, pulse):
    """Spectrum matched to the pulse's sources; flag grids override model grids."""
    data = files.load_json(args.spectrum)
    omega = _flag_grid(args)
    if "model" in data:
        if omega is None and ("grid" not in data or args.omega_n):
            from .spectrum import default_grid
            omega = default_grid(pulse, args.omega_n or 500)
        return files.load_spectrum(args.spectrum, pulse.noise_ids, omega=omega, hz=args.hz)
    if omega is not None:
        raise ValidationError("a tabulated spectrum defines its own grid; drop the --omega flags")
    return files.load_spectrum(args.spectrum, pulse.noise_ids, hz=args.hz)


def _prime_cache(pulse, omega, threads):
    from .control_matrix import single_pulse_control_matrix
    return single_pulse_control_matrix(pulse, omega, threads=max(1, threads))


def _ff_rows(omega, F, hz):
    scale = 1 / TWO_PI if hz else 1.0
    for w, row in zip(omega, F.T):
        yield [float(w * scale), *[float(x) for x in row]]


def _write_ff(path, omega, F, ids, hz):
    files.write_csv(path, ["omega", *[f"F_{i}" for i in ids]], _ff_rows(omega, F, hz))


def _emit_json(path, obj):
    files.emit_text(path, files.dumps_json(obj))


def _convergence(pulse, spec):
    from .metrics import convergence
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return convergence(pulse, spec, warn=False)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_filter_function(args):
    from .control_matrix import filter_function
    pulse = files.load_pulse(args.pulse)
    omega = _pulse_grid(args, pulse)
    if args.method != "hilbert":
        _prime_cache(pulse, omega, args.threads)
    F = filter_function(pulse, omega, method=args.method)
    _write_ff(args.out, omega, F, pulse.noise_ids, args.hz)


def cmd_infidelity(args):
    from .metrics import infidelity
    pulse = files.load_pulse(args.pulse)
    spec = _spectrum(args, pulse)
    cm = _prime_cache(pulse, spec.omega, args.threads)
    inf = infidelity(cm, spec, pulse.dim, method=args.method)
    ids = pulse.noise_ids
    _emit_json(args.out, {
        "method": args.method,
        "noise_ids": list(ids),
        "infidelity": {f"{a},{b}": float(inf[i, j])
                       for i, a in enumerate(ids) for j, b in enumerate(ids)},
        "total": float(np.sum(inf)),
        "convergence": _convergence(pulse, spec),
    })


def _channel(args, pulse, spec):
    from .error_channel import error_channel
    _prime_cache(pulse, spec.omega, args.threads)
    return error_channel(pulse, spec, mode=args.mode, with_shifts=args.with_shifts)


def cmd_transfer_matrix(args):
    from .metrics import avg_gate_fidelity, entanglement_fidelity
    pulse = files.load_pulse(args.pulse)
    spec = _spectrum(args, pulse)
    ch = _channel(args, pulse, spec)
    U = np.asarray(ch.transfer, dtype=complex)
    if args.out and args.out.endswith(".csv"):
        n = U.shape[0]
        files.write_csv(args.out, ["row", "col", "real", "imag"],
                        ([i, j, float(U[i, j].real), float(U[i, j].imag)]
                         for i in range(n) for j in range(n)))
        return
    _emit_json(args.out, {
        "mode": args.mode,
        "with_shifts": bool(args.with_shifts),
        "dim": pulse.dim,
        "basis": pulse.basis.kind,
        "labels": list(pulse.basis.labels),
        "real": U.real.tolist(),
        "imag": U.imag.tolist(),
        "entanglement_fidelity": float(entanglement_fidelity(ch.transfer, pulse.dim)),
        "average_gate_fidelity": float(avg_gate_fidelity(ch.transfer, pulse.dim)),
        "convergence": _convergence(pulse, spec),
    })


def cmd_concat(args):
    from .control_matrix import concatenate, fidelity_filter_function
    pulses = [files.load_pulse(path) for path in args.pulse]
    omega = _pulse_grid(args, pulses[0])
    for p in pulses:
        _prime_cache(p, omega, args.threads)
    merged, cm = concatenate(pulses, omega)
    files.dump_pulse(merged, args.out)
    _write_ff(args.ff_out, omega, fidelity_filter_function(cm), merged.noise_ids, args.hz)


def cmd_periodic(args):
    from .control_matrix import concatenate_periodic, fidelity_filter_function
    pulse = files.load_pulse(args.pulse)
    omega = _pulse_grid(args, pulse)
    _prime_cache(pulse, omega, args.threads)
    if args.pulse_out:
        merged, cm = concatenate_periodic(pulse, args.reps, omega, return_pulse=True)
        files.dump_pulse(merged, args.pulse_out)
    else:
        cm = concatenate_periodic(pulse, args.reps, omega)
    _write_ff(args.out, omega, fidelity_filter_function(cm), pulse.noise_ids, args.hz)


def cmd_leakage(args):
    from .metrics import leakage_rates
    pulse = files.load_pulse(args.pulse)
    spec = _spectrum(args, pulse)
    P = files.load_projector(args.projector, pulse.dim)
    ch = _channel(args, pulse, spec)
    # rates of the full operation: ideal gate after the error channel
    total = pulse.total_liouville @ ch.transfer
    L_c, L_l = leakage_rates(total, P, pulse.basis)
    d_c = int(round(np.trace(P).real))
    _emit_json(args.out, {
        "mode": args.mode,
        "with_shifts": bool(args.with_shifts),
        "leakage": L_c,
        "seepage": L_l,
        "d_c": d_c,
        "d_l": pulse.dim - d_c,
    })


def cmd_mc_validate(args):
    from .montecarlo import McConfig, mc_entanglement_fidelity, noise_model_from_spectrum
    from .metrics import infidelity
    pulse = files.load_pulse(args.pulse)
    data = files.load_json(args.spectrum)
    if "model" not in data:
        raise ValidationError("mc-validate needs an analytic (model) spectrum")
    omega = _flag_grid(args)
    if omega is None:
        # one-sided grid over the Monte Carlo band: IR cutoff (or 0 for white
        # noise) up to the sub-step Nyquist frequency
        nyquist = np.pi * args.n_sub / float(np.min(pulse.dt))
        ir = TWO_PI / pulse.duration
        n = args.omega_n or 4000
        if data["model"] == "white":
            omega = np.concatenate([[0.0], np.geomspace(1e-3 * ir, nyquist, n - 1)])
        else:
            omega = np.geomspace(ir, nyquist, n)
    spec = files.load_spectrum(args.spectrum, pulse.noise_ids, omega=omega, hz=args.hz)
    cm = _prime_cache(pulse, spec.omega, args.threads)
    ff = float(np.sum(infidelity(cm, spec, pulse.dim)))
    cfg = McConfig(n_traj=args.n_traj, n_sub=args.n_sub, seed=args.seed,
                   spectrum_model=noise_model_from_spectrum(spec),
                   threads=max(1, args.threads))
    res = mc_entanglement_fidelity(pulse, cfg, keep_samples=False)
    mc = 1.0 - res.mean
    sigma = abs(ff - mc) / res.std_error if res.std_error > 0 else float("inf")
    _emit_json(args.out, {
        "ff_infidelity": ff,
        "mc_infidelity": mc,
        "mc_stderr": res.std_error,
        "discrepancy_sigma": float(sigma),
        "n_traj": args.n_traj,
        "n_sub": args.n_sub,
        "seed": args.seed,
    })


def cmd_bench(args):
    from .montecarlo import McConfig, WhiteNoise, scaling_benchmark
    cfg = McConfig(n_traj=args.n_traj, n_sub=args.n_sub, seed=args.seed,
                   spectrum_model=WhiteNoise(1e-4), threads=max(1, args.threads))
    res = scaling_benchmark(args.dims, cfg, timeout=args.timeout, seed=args.seed)
    files.write_csv(args.out, ["d", "method", "wall_seconds", "estimate", "stderr"],
                    ([r["d"], r["method"], r["wall_seconds"], r["estimate"], r["stderr"]]
                     for r in res.records))
    if args.fits_out:
        _emit_json(args.fits_out, res.fits)


COMMANDS = {
    "filter-function": cmd_filter_function,
    "infidelity": cmd_infidelity,
    "transfer-matrix": cmd_transfer_matrix,
    "concat": cmd_concat,
    "periodic": cmd_periodic,
    "leakage": cmd_leakage,
    "mc-validate": cmd_mc_validate,
    "bench": cmd_bench,
}


def _exit_code(exc) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    if isinstance(exc, (np.linalg.LinAlgError, FloatingPointError, ArithmeticError)):
        return 3
    if isinstance(exc, MemoryError):
        return 3
    if isinstance(exc, ValueError):
        return 2
    return None


def _report(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("line", "column", "path"):
        val = getattr(exc, attr, None)
        if val is not None:
            payload[attr] = val
    sys.stderr.write(json.dumps(payload) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - mapped onto exit codes below
        code = _exit_code(exc)
        if code is None:
            raise
        _report(exc, code)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
