import csv
import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from pulsefilter import (PulseSequence, complete_basis, filter_function, infidelity,
                         single_pulse_control_matrix)
from pulsefilter.cli import build_parser, main
from pulsefilter.errors import ParseError, ValidationError
from pulsefilter.files import (decode_matrix, dump_pulse, encode_matrix, load_json,
                               load_projector, load_pulse, load_spectrum)

from conftest import SIGMA, random_qubit_pulse

INPUTS = os.path.join(os.path.dirname(__file__), os.pardir, "demos", "inputs")


def demo(name):
    return os.path.join(INPUTS, name)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


# file formats ----------------------------------------------------------------------
def test_matrix_codec_round_trip(rng):
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    np.testing.assert_array_equal(decode_matrix(encode_matrix(m)), m)
    np.testing.assert_array_equal(decode_matrix([[1, 0], [0, 2]]), np.diag([1, 2]))


@pytest.mark.parametrize("bad", [[1, 2], [[1, 2], [3]], "x", [[[1, 2, 3]]]])
def test_matrix_codec_rejects_malformed(bad):
    with pytest.raises(ParseError):
        decode_matrix(bad)


def test_pulse_round_trip(tmp_path, rng):
    p = random_qubit_pulse(rng, noise=("x", "z"))
    path = tmp_path / "p.json"
    dump_pulse(p, path)
    q = load_pulse(path)
    assert q.noise_ids == p.noise_ids and q.basis.kind == "pauli"
    np.testing.assert_array_equal(q.dt, p.dt)
    np.testing.assert_array_equal(q.control_coeffs, p.control_coeffs)
    np.testing.assert_allclose(q.total_propagator, p.total_propagator, atol=1e-15)


def test_custom_basis_round_trip(tmp_path):
    # seed with a single normalized element; the rest is completed on load
    seed = SIGMA[2] / np.sqrt(2)
    b = complete_basis(seed[None])
    p = PulseSequence([SIGMA[0] / 2], [[1.0]], [SIGMA[2] / 2], [[1.0]], [1.0], b)
    dump_pulse(p, tmp_path / "c.json")
    assert (tmp_path / "c_basis.json").exists()
    q = load_pulse(tmp_path / "c.json")
    np.testing.assert_allclose(q.basis.elements, b.elements, atol=1e-15)
    partial = write_json(tmp_path / "seed.json", {"elements": [encode_matrix(seed)]})
    obj = json.loads((tmp_path / "c.json").read_text())
    obj["basis"] = {"custom": os.path.basename(partial)}
    r = load_pulse(write_json(tmp_path / "d.json", obj))
    assert len(r.basis.elements) == 4
    assert min(np.abs(e - seed).max() for e in r.basis.elements) < 1e-15


def test_parse_error_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "dim": 2,\n "dt": [1.0,,]\n}')
    with pytest.raises(ParseError) as info:
        load_json(path)
    assert (info.value.line, info.value.column) == (3, 13)


def test_missing_key_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_pulse(write_json(tmp_path / "p.json", {"dim": 2}))


def test_tabulated_spectrum_fills_conjugate(tmp_path):
    omega = [0.0, 1.0, 2.0]
    path = write_json(tmp_path / "s.json", {
        "omega": omega,
        "S": {"x,x": [1, 1, 1], "z,z": [2, 2, 2], "x,z": [[0, 0.5], [0, 0.5], [0, 0.5]]}})
    spec = load_spectrum(path, ["z", "x"])
    assert spec.source_ids == ("z", "x")
    assert spec.values[1, 0, 0] == 0.5j and spec.values[0, 1, 0] == -0.5j
    with pytest.raises(ValidationError):
        load_spectrum(path, ["x"])


def test_hz_grid_conversion():
    spec = load_spectrum(demo("white.json"), ["z"], hz=True)
    plain = load_spectrum(demo("white.json"), ["z"])
    np.testing.assert_allclose(spec.omega, 2 * np.pi * plain.omega, rtol=1e-14)


def test_projector_formats(tmp_path):
    P = load_projector(demo("qubit_levels.json"), 3)
    np.testing.assert_array_equal(P, np.diag([1, 1, 0]))
    full = load_projector(write_json(tmp_path / "p.json", {"projector": encode_matrix(P)}), 3)
    np.testing.assert_array_equal(full, P)
    with pytest.raises(ValidationError):
        load_projector(demo("qubit_levels.json"), 1)


# command line ----------------------------------------------------------------------
def run(*argv):
    return main([str(a) for a in argv])


def test_filter_function_matches_library(tmp_path):
    out = tmp_path / "ff.csv"
    assert run("filter-function", "--pulse", demo("fid.json"), "--omega-min", 0.1,
               "--omega-max", 10, "--omega-n", 20, "--out", out) == 0
    header, data = read_csv(out)
    assert header == ["omega", "F_z"]
    p = load_pulse(demo("fid.json"))
    np.testing.assert_allclose(data[:, 1], filter_function(p, data[:, 0])[0], rtol=1e-14)


def test_echo_filter_function_suppressed_at_low_frequency(tmp_path):
    args = ["--omega-min", 1e-3, "--omega-max", 1e-1, "--omega-n", 30]
    run("filter-function", "--pulse", demo("echo.json"), *args, "--out", tmp_path / "e.csv")
    run("filter-function", "--pulse", demo("fid.json"), *args, "--out", tmp_path / "f.csv")
    _, echo = read_csv(tmp_path / "e.csv")
    _, fid = read_csv(tmp_path / "f.csv")
    assert np.all(echo[:, 1] / fid[:, 1] <= 1e-3)


def test_outputs_are_byte_identical(tmp_path):
    for i in range(2):
        run("filter-function", "--pulse", demo("echo.json"), "--out", tmp_path / f"{i}.csv")
        run("infidelity", "--pulse", demo("echo.json"), "--spectrum", demo("white.json"),
            "--out", tmp_path / f"{i}.json")
    assert (tmp_path / "0.csv").read_bytes() == (tmp_path / "1.csv").read_bytes()
    assert (tmp_path / "0.json").read_bytes() == (tmp_path / "1.json").read_bytes()


def test_hz_flag_round_trips_grid(tmp_path):
    run("filter-function", "--pulse", demo("fid.json"), "--omega-min", 1, "--omega-max", 2,
        "--omega-n", 3, "--omega-scale", "linear", "--hz", "--out", tmp_path / "hz.csv")
    run("filter-function", "--pulse", demo("fid.json"), "--omega-min", 2 * np.pi,
        "--omega-max", 4 * np.pi, "--omega-n", 3, "--omega-scale", "linear",
        "--out", tmp_path / "rad.csv")
    _, hz = read_csv(tmp_path / "hz.csv")
    _, rad = read_csv(tmp_path / "rad.csv")
    np.testing.assert_allclose(hz[:, 0], [1.0, 1.5, 2.0], rtol=1e-14)
    np.testing.assert_allclose(hz[:, 1], rad[:, 1], rtol=1e-12)


@pytest.mark.parametrize("method", ["gamma_trace", "ff_integral"])
def test_infidelity_command(tmp_path, method):
    out = tmp_path / "inf.json"
    assert run("infidelity", "--pulse", demo("fid.json"), "--spectrum", demo("white.json"),
               "--method", method, "--out", out) == 0
    res = json.loads(out.read_text())
    p = load_pulse(demo("fid.json"))
    spec = load_spectrum(demo("white.json"), ["z"])
    expected = infidelity(single_pulse_control_matrix(p, spec.omega), spec, 2)[0, 0]
    assert res["infidelity"]["z,z"] == pytest.approx(expected, rel=1e-12)
    # white noise is UV divergent: the expansion parameter grows with the cutoff
    assert res["convergence"]["xi_sq"] == pytest.approx(0.5 * 0.02 * spec.omega[-1] / np.pi,
                                                        rel=1e-2)


def test_tabulated_spectrum_rejects_grid_flags(tmp_path):
    spec = write_json(tmp_path / "s.json", {"omega": [0, 1], "S": {"z,z": [1, 1]}})
    assert run("infidelity", "--pulse", demo("fid.json"), "--spectrum", spec,
               "--omega-min", 0, "--omega-max", 1, "--omega-n", 5) == 2


def test_transfer_matrix_json_and_csv(tmp_path):
    base = ["transfer-matrix", "--pulse", demo("echo.json"), "--spectrum", demo("white.json")]
    run(*base, "--out", tmp_path / "t.json")
    run(*base, "--out", tmp_path / "t.csv")
    res = json.loads((tmp_path / "t.json").read_text())
    U = np.array(res["real"]) + 1j * np.array(res["imag"])
    header, data = read_csv(tmp_path / "t.csv")
    assert header == ["row", "col", "real", "imag"]
    np.testing.assert_array_equal(data[:, 2].reshape(4, 4), U.real)
    assert U[0, 0] == pytest.approx(1.0) and 0.9 < res["average_gate_fidelity"] < 1.0


def test_concat_and_periodic_agree(tmp_path):
    grid = ["--omega-min", 0.1, "--omega-max", 100, "--omega-n", 40]
    assert run("concat", "--pulse", demo("echo.json"), demo("echo.json"), demo("echo.json"),
               "--out", tmp_path / "c.json", "--ff-out", tmp_path / "c.csv", *grid) == 0
    assert run("periodic", "--pulse", demo("echo.json"), "--reps", 3, *grid,
               "--out", tmp_path / "p.csv", "--pulse-out", tmp_path / "p.json") == 0
    _, a = read_csv(tmp_path / "c.csv")
    _, b = read_csv(tmp_path / "p.csv")
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-14)
    merged = load_pulse(tmp_path / "c.json")
    assert merged.n_segments == 9 and merged.duration == pytest.approx(3.0)
    assert load_pulse(tmp_path / "p.json").n_segments == 9


def qutrit_pulse(tmp_path, theta):
    gen = np.zeros((3, 3))
    gen[1, 2] = gen[2, 1] = 1
    dephase = np.diag([1.0, -1.0, 0.0])
    p = PulseSequence([gen], [[theta]], [dephase], [[1.0]], [1.0], "ggm", noise_ids=["z"])
    dump_pulse(p, tmp_path / "q.json")
    return tmp_path / "q.json"


def test_leakage_command_noiseless_rotation(tmp_path):
    theta = 0.3
    spec = write_json(tmp_path / "s.json", {"model": "white", "params": {"level": 0.0},
                                            "grid": {"n": 50, "min": 0.01, "max": 100}})
    out = tmp_path / "l.json"
    assert run("leakage", "--pulse", qutrit_pulse(tmp_path, theta), "--spectrum", spec,
               "--projector", demo("qubit_levels.json"), "--out", out) == 0
    res = json.loads(out.read_text())
    assert res["leakage"] == pytest.approx(np.sin(theta) ** 2 / 2, abs=1e-12)
    assert res["d_c"] * res["leakage"] == pytest.approx(res["d_l"] * res["seepage"], abs=1e-12)


def test_mc_validate_free_evolution(tmp_path):
    out = tmp_path / "mc.json"
    assert run("mc-validate", "--pulse", demo("fid.json"), "--spectrum", demo("white.json"),
               "--n-traj", 1000, "--n-sub", 10, "--seed", 4, "--out", out) == 0
    res = json.loads(out.read_text())
    assert res["discrepancy_sigma"] < 3
    assert (res["n_traj"], res["n_sub"], res["seed"]) == (1000, 10, 4)


def test_bench_command(tmp_path):
    assert run("bench", "--dims", 2, 3, "--n-traj", 3, "--n-sub", 2,
               "--out", tmp_path / "b.csv", "--fits-out", tmp_path / "f.json") == 0
    header, _ = read_csv_text(tmp_path / "b.csv")
    assert header == ["d", "method", "wall_seconds", "estimate", "stderr"]
    assert set(json.loads((tmp_path / "f.json").read_text())) == {"mc", "ff_liouville",
                                                                  "ff_conj"}


def read_csv_text(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# errors ------------------------------------------------------------------------------
def test_malformed_json_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dim": 2,\n  "dt": ]')
    assert run("filter-function", "--pulse", bad) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 1 and err["line"] == 2 and err["column"] == 9


def test_validation_exit_code(tmp_path, capsys):
    obj = json.loads(open(demo("fid.json")).read())
    obj["dt"] = [-1.0]
    assert run("filter-function", "--pulse", write_json(tmp_path / "p.json", obj)) == 2
    assert json.loads(capsys.readouterr().err)["error"]


def test_non_hermitian_noise_operator_exit_code(tmp_path):
    obj = json.loads(open(demo("fid.json")).read())
    obj["noise"][0]["op"] = [[0, 1], [0, 0]]
    assert run("filter-function", "--pulse", write_json(tmp_path / "p.json", obj)) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure_exit_code(tmp_path, capsys):
    obj = json.loads(open(demo("fid.json")).read())
    obj["noise"][0]["sens"] = [1e300]
    spec = write_json(tmp_path / "s.json", {"model": "white", "params": {"level": 1e300},
                                            "grid": {"n": 20, "min": 1, "max": 1e300}})
    code = run("transfer-matrix", "--pulse", write_json(tmp_path / "p.json", obj),
               "--spectrum", spec)
    assert code == 3
    assert json.loads(capsys.readouterr().err)["exit_code"] == 3


def test_grid_flags_need_count():
    assert run("filter-function", "--pulse", demo("fid.json"), "--omega-min", 1) == 2


@pytest.mark.parametrize("command", ["filter-function", "concat", "periodic", "bench",
                                     "transfer-matrix"])
def test_help_documents_csv_columns(command):
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[command]
    assert "columns" in sub.format_help()


@pytest.mark.skipif(shutil.which("pulsefilter") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["pulsefilter", "filter-function", "--pulse", demo("fid.json"),
                           "--omega-min", "1", "--omega-max", "2", "--omega-n", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("omega,F_z\n")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pulsefilter.cli", "filter-function",
                           "--pulse", "/nonexistent.json"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stderr)["error"] == "ParseError"
