"""JSON and CSV file formats.

Complex matrices are nested lists whose entries are either real numbers or
``[re, im]`` pairs.

Pulse file::

    {"dim": 2, "dt": [...],
     "control": [{"op": M, "coeffs": [...], "id": "x"}],
     "noise": [{"op": M, "sens": [...], "id": "z"}],
     "basis": "pauli" | "ggm" | {"custom": "basis.json"}}

A custom basis file holds ``{"elements": [M, ...]}``; fewer than ``d**2``
orthonormal elements are completed automatically. Relative paths are
resolved against the directory of the pulse file.

Spectrum file, tabulated::

    {"omega": [...], "S": {"z,z": [...], "x,z": [[re, im], ...]}}

or analytic::

    {"model": "white" | "power_law",
     "params": {"level": ...} | {"amplitude": ..., "exponent": ..., "omega_ref": ...},
     "grid": {"type": "log" | "linear", "n": ..., "min": ..., "max": ...,
              "symmetric": false},
     "sources": ["z"]}

Projector file: ``{"projector": M}`` or ``{"levels": [0, 1]}``.
"""
from __future__ import annotations

import csv
import io
import json
import os
import sys

import numpy as np

from .basis import Basis, complete_basis
from .errors import ParseError, ValidationError
from .pulse import PulseSequence
from .spectrum import Spectrum, frequency_grid, power_law, tabulated, white

__all__ = [
    "decode_matrix",
    "encode_matrix",
    "decode_vector",
    "load_json",
    "load_pulse",
    "pulse_to_dict",
    "dump_pulse",
    "load_spectrum",
    "load_projector",
    "write_csv",
    "dumps_json",
    "emit_text",
]


def load_json(path):
    """Parse a JSON file, reporting the position of syntax errors."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}", path=str(path)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno, column=exc.colno,
                         path=str(path)) from None


def decode_matrix(obj, what="matrix") -> np.ndarray:
    """Nested lists (entries real or ``[re, im]``) to a complex 2-d array."""
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{what} is not a rectangular numeric array") from None
    if arr.ndim == 3 and arr.shape[-1] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    if arr.ndim == 2:
        return arr.astype(complex)
    raise ParseError(f"{what} must be a matrix of numbers or [re, im] pairs, "
                     f"got array of shape {arr.shape}")


def decode_vector(obj, what="vector") -> np.ndarray:
    """List of real numbers or ``[re, im]`` pairs to a complex 1-d array."""
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{what} is not a numeric array") from None
    if arr.ndim == 2 and arr.shape[-1] == 2:
        return arr[:, 0] + 1j * arr[:, 1]
    if arr.ndim == 1:
        return arr.astype(complex)
    raise ParseError(f"{what} must be a list of numbers or [re, im] pairs")


def encode_matrix(m) -> list:
    m = np.asarray(m)
    return [[[float(x.real), float(x.imag)] for x in row] for row in m]


def _require(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"{where}: missing key {key!r}")
    return obj[key]


def _load_basis(spec, dim, base_dir):
    if spec is None or isinstance(spec, str):
        return spec
    if isinstance(spec, dict) and "custom" in spec:
        path = spec["custom"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        data = load_json(path)
        elements = np.array([decode_matrix(m, "basis element")
                             for m in _require(data, "elements", path)])
        if elements.shape[1:] != (dim, dim):
            raise ValidationError(f"custom basis elements have shape {elements.shape[1:]}, "
                                  f"pulse dimension is {dim}")
        if len(elements) < dim * dim:
            return complete_basis(elements)
        return Basis(elements, kind="custom", labels=data.get("labels"))
    raise ParseError(f"unrecognized basis entry {spec!r}")


def load_pulse(path) -> PulseSequence:
    data = load_json(path)
    where = str(path)
    dim = int(_require(data, "dim", where))
    dt = _require(data, "dt", where)
    control = data.get("control", [])
    noise = data.get("noise", [])
    if not isinstance(control, list) or not isinstance(noise, list):
        raise ParseError(f"{where}: 'control' and 'noise' must be lists")
    c_ops = [decode_matrix(_require(c, "op", f"{where} control"), "control op") for c in control]
    c_coeffs = [list(map(float, _require(c, "coeffs", f"{where} control"))) for c in control]
    c_ids = [str(c.get("id", f"A{i}")) for i, c in enumerate(control)]
    n_ops = [decode_matrix(_require(n, "op", f"{where} noise"), "noise op") for n in noise]
    n_sens = [list(map(float, _require(n, "sens", f"{where} noise"))) for n in noise]
    n_ids = [str(n.get("id", f"B{i}")) for i, n in enumerate(noise)]
    for op in c_ops + n_ops:
        if op.shape != (dim, dim):
            raise ValidationError(f"{where}: operator of shape {op.shape} in a dim-{dim} pulse")
    basis = _load_basis(data.get("basis"), dim, os.path.dirname(os.path.abspath(path)))
    if not c_ops and not n_ops:
        from .basis import basis_from_spec
        basis = basis_from_spec(basis, dim)
    return PulseSequence(c_ops or None, c_coeffs or None, n_ops or None, n_sens or None,
                         dt, basis, noise_ids=n_ids, control_ids=c_ids)


def pulse_to_dict(p: PulseSequence, basis_file: str | None = None) -> dict:
    if p.basis.kind in ("pauli", "ggm"):
        basis = p.basis.kind
    elif basis_file is not None:
        basis = {"custom": basis_file}
    else:
        raise ValidationError("a custom basis needs a file name to be serialized")
    return {
        "dim": p.dim,
        "dt": [float(x) for x in p.dt],
        "control": [{"id": cid, "op": encode_matrix(op), "coeffs": [float(x) for x in c]}
                    for cid, op, c in zip(p.control_ids, p.control_ops, p.control_coeffs)],
        "noise": [{"id": nid, "op": encode_matrix(op), "sens": [float(x) for x in s]}
                  for nid, op, s in zip(p.noise_ids, p.noise_ops, p.noise_sens)],
        "basis": basis,
    }


def dump_pulse(p: PulseSequence, path) -> None:
    basis_file = None
    if p.basis.kind == "custom":
        stem = os.path.splitext(os.path.basename(path))[0]
        basis_file = f"{stem}_basis.json"
        with open(os.path.join(os.path.dirname(os.path.abspath(path)), basis_file), "w") as fh:
            fh.write(dumps_json({"elements": [encode_matrix(c) for c in p.basis.elements],
                                 "labels": list(p.basis.labels)}))
    with open(path, "w") as fh:
        fh.write(dumps_json(pulse_to_dict(p, basis_file)))


def _grid_from_spec(grid, hz):
    try:
        kind = grid.get("type", "log")
        n, lo, hi = int(grid["n"]), float(grid["min"]), float(grid["max"])
    except (KeyError, TypeError, ValueError, AttributeError):
        raise ParseError("grid needs 'n', 'min' and 'max'") from None
    scale = 2 * np.pi if hz else 1.0
    return frequency_grid(lo * scale, hi * scale, n, kind,
                          symmetric=bool(grid.get("symmetric", False)))


def load_spectrum(path, source_ids=None, *, omega=None, hz=False) -> Spectrum:
    """Load a spectrum file.

    ``source_ids`` fixes the source order (and supplies ids for analytic
    models without a ``sources`` entry). ``omega`` overrides the grid of an
    analytic model. With ``hz`` the grid is taken to be in ordinary
    frequency and converted to angular frequency; density values are
    unchanged since ``dω/2π = df``.
    """
    data = load_json(path)
    where = str(path)
    if "model" in data:
        sources = data.get("sources", source_ids)
        if sources is None:
            sources = ["B0"]
        sources = [str(s) for s in sources]
        if omega is None:
            omega = _grid_from_spec(_require(data, "grid", where), hz)
        params = data.get("params", {})
        model = data["model"]
        try:
            if model == "white":
                spec = white(float(params["level"]), omega, source_ids=sources)
            elif model == "power_law":
                ref = float(params.get("omega_ref", 1.0)) * (2 * np.pi if hz else 1.0)
                spec = power_law(float(params["amplitude"]), float(params["exponent"]),
                                 omega, source_ids=sources, omega_ref=ref)
            else:
                raise ParseError(f"{where}: unknown model {model!r}")
        except KeyError as exc:
            raise ParseError(f"{where}: missing model parameter {exc}") from None
    else:
        grid = np.asarray(_require(data, "omega", where), dtype=float)
        if hz:
            grid = grid * 2 * np.pi
        entries = _require(data, "S", where)
        if not isinstance(entries, dict) or not entries:
            raise ParseError(f"{where}: 'S' must be a non-empty object")
        ids = []
        parsed = {}
        for key, vals in entries.items():
            parts = [s.strip() for s in str(key).split(",")]
            if len(parts) != 2:
                raise ParseError(f"{where}: spectrum key {key!r} must look like 'a,b'")
            for s in parts:
                if s not in ids:
                    ids.append(s)
            parsed[tuple(parts)] = decode_vector(vals, f"S[{key}]")
        if source_ids is not None:
            missing = [s for s in ids if s not in source_ids]
            if missing:
                raise ValidationError(f"{where}: unknown sources {missing}")
            ids = [str(s) for s in source_ids]
        n = len(ids)
        values = np.zeros((n, n, grid.size), complex)
        for (a, b), v in parsed.items():
            if v.size != grid.size:
                raise ValidationError(f"{where}: S[{a},{b}] has {v.size} points, "
                                      f"grid has {grid.size}")
            i, j = ids.index(a), ids.index(b)
            values[i, j] = v
            if (b, a) not in parsed:
                values[j, i] = v.conj()
        spec = tabulated(grid, values, ids)
    if source_ids is not None and tuple(source_ids) != spec.source_ids:
        spec = spec.select(source_ids)
    return spec


def load_projector(path, dim: int) -> np.ndarray:
    data = load_json(path)
    if "projector" in data:
        P = decode_matrix(data["projector"], "projector")
    elif "levels" in data:
        P = np.zeros((dim, dim), complex)
        for lv in data["levels"]:
            if not 0 <= int(lv) < dim:
                raise ValidationError(f"projector level {lv} outside 0..{dim - 1}")
            P[int(lv), int(lv)] = 1
    else:
        raise ParseError(f"{path}: need 'projector' or 'levels'")
    if P.shape != (dim, dim):
        raise ValidationError(f"projector has shape {P.shape}, expected {(dim, dim)}")
    return P


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    """Write rows with ``repr`` floats (round-trip exact, deterministic)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    emit_text(path, buf.getvalue())


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=True) + "\n"


def emit_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)
