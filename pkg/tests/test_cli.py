import csv
import json
import os

import numpy as np
import pytest

from pencilci.census import ExperimentSpec, fit_power_law
from pencilci.cli import main
from pencilci.pencil import (
    analytic_ci_pencil,
    load_pencil,
    save_pencil,
    sgplus_generate,
    sgplus_pencil,
)

DATA = os.path.join(os.path.dirname(__file__), "data", "reference_counts.csv")


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def analytic_descriptor(tmp_path):
    path = tmp_path / "analytic.json"
    save_pencil(analytic_ci_pencil(0.1), path)
    return str(path)


def test_generate_sgplus_roundtrip(tmp_path):
    rc = run(
        "generate", "--kind", "sgplus", "--n", 6, "--b", 3, "--delta", 0.4,
        "--seed", 5, "--out-dir", tmp_path,
    )
    assert rc == 0
    pencil = load_pencil(tmp_path / "pencil.json")
    direct = sgplus_pencil(sgplus_generate(6, 3, 0.4, 5))
    for x, y in [(0.0, 0.0), (1.3, 2.1)]:
        A1, B1 = pencil.eval(x, y)
        A2, B2 = direct.eval(x, y)
        np.testing.assert_array_equal(A1, A2)
        np.testing.assert_array_equal(B1, B2)


def test_generate_full_bandwidth_token(tmp_path):
    rc = run(
        "generate", "--n", 5, "--b", "full", "--delta", 0.4,
        "--out-dir", tmp_path,
    )
    assert rc == 0
    pencil = load_pencil(tmp_path / "pencil.json")
    direct = sgplus_pencil(sgplus_generate(5, 4, 0.4, 0))
    np.testing.assert_array_equal(pencil.eval(0.7, 0.2)[0], direct.eval(0.7, 0.2)[0])


def test_generate_rejects_bad_bandwidth(tmp_path):
    rc = run(
        "generate", "--n", 6, "--b", 0, "--delta", 0.4, "--out-dir", tmp_path,
    )
    assert rc == 1


def test_generate_rejects_bad_dispersion(tmp_path, caplog):
    rc = run(
        "generate", "--n", 10, "--b", 3, "--delta", 2.0, "--out-dir", tmp_path,
    )
    assert rc == 1
    assert "sqrt((n+1)/(n+5))" in caplog.text


def test_trace_loop_around_coalescence(tmp_path, analytic_descriptor, capfd):
    rc = run(
        "trace", "--pencil", analytic_descriptor,
        "--loop", '{"kind": "circle", "center": [0, 0], "radius": 1}',
        "--out-dir", tmp_path,
    )
    assert rc == 0
    out = capfd.readouterr().out
    assert "D = -1 -1" in out
    assert "flagged pairs: 1" in out
    with open(tmp_path / "signature.json") as fh:
        sig = json.load(fh)
    assert sig["D"] == [-1, -1]
    assert sig["pairs"] == [1]
    assert all(abs(abs(v) - 1) < 1e-6 for v in sig["signature_raw"])
    assert (tmp_path / "trace.csv").exists()


def test_trace_distant_loop_identity(tmp_path, analytic_descriptor):
    rc = run(
        "trace", "--pencil", analytic_descriptor,
        "--loop", '{"kind": "circle", "center": [2.5, 0], "radius": 0.4}',
        "--out-dir", tmp_path,
    )
    assert rc == 0
    with open(tmp_path / "signature.json") as fh:
        sig = json.load(fh)
    assert sig["D"] == [1, 1]
    assert sig["pairs"] == []


def test_trace_loop_spec_from_file(tmp_path, analytic_descriptor):
    loop = tmp_path / "loop.json"
    loop.write_text('{"kind": "box", "rect": [-1, 1, -1, 1]}')
    rc = run(
        "trace", "--pencil", analytic_descriptor, "--loop", f"@{loop}",
        "--out-dir", tmp_path,
    )
    assert rc == 0
    with open(tmp_path / "signature.json") as fh:
        assert json.load(fh)["pairs"] == [1]


def test_trace_open_segment_through_coalescence(tmp_path, analytic_descriptor):
    rc = run(
        "trace", "--pencil", analytic_descriptor,
        "--loop", '{"kind": "segment", "start": [-1, -0.03125], "end": [1, -0.03125]}',
        "--out-dir", tmp_path,
    )
    assert rc == 2


def test_trace_bad_loop_kind(tmp_path, analytic_descriptor):
    rc = run(
        "trace", "--pencil", analytic_descriptor,
        "--loop", '{"kind": "spiral"}', "--out-dir", tmp_path,
    )
    assert rc == 1


def test_sweep_matches_single_loop(tmp_path, analytic_descriptor):
    sweep_dir = tmp_path / "sweep"
    rc = run(
        "sweep", "--pencil", analytic_descriptor, "--rows", 1, "--cols", 1,
        "--x-range", -1, 1, "--y-range", -1, 1, "--workers", 1,
        "--out-dir", sweep_dir,
    )
    assert rc == 0
    with open(sweep_dir / "ci_boxes.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and rows[0]["pair_index"] == "1"

    trace_dir = tmp_path / "trace"
    rc = run(
        "trace", "--pencil", analytic_descriptor,
        "--loop", '{"kind": "box", "rect": [-1, 1, -1, 1]}',
        "--out-dir", trace_dir,
    )
    assert rc == 0
    with open(trace_dir / "signature.json") as fh:
        assert json.load(fh)["pairs"] == [int(rows[0]["pair_index"])]


def test_sweep_outputs_deterministic(tmp_path):
    desc = tmp_path / "pencil.json"
    save_pencil(sgplus_pencil(sgplus_generate(6, 5, 0.45, 2)), desc)
    blobs = []
    for name in ("one", "two"):
        out = tmp_path / name
        rc = run(
            "sweep", "--pencil", desc, "--rows", 4, "--cols", 8,
            "--x-range", 0, 3.141592653589793, "--y-range", 0, 6.283185307179586,
            "--seed", 1, "--workers", 2, "--out-dir", out,
        )
        assert rc == 0
        blobs.append(
            tuple((out / f).read_bytes() for f in ("ci_boxes.csv", "sweep_summary.json"))
        )
    assert blobs[0] == blobs[1]


def test_census_cli(tmp_path, capfd):
    spec = ExperimentSpec(
        n_list=(2,),
        rows=3,
        cols=3,
        x_range=(-1.05, 0.95),
        y_range=(-1.05, 0.95),
        pencil_kind="analytic_ci",
        pencil_params=(("eps", 0.1),),
    )
    spec_path = tmp_path / "spec.json"
    spec.to_json(spec_path)
    out = tmp_path / "census"
    rc = run("census", "--spec", spec_path, "--workers", 1, "--out-dir", out)
    assert rc == 0
    for name in (
        "census_counts.csv", "census_fits.csv", "census_loglog.dat",
        "census_report.json", "manifest.json",
    ):
        assert (out / name).exists()
    with open(out / "census_counts.csv") as fh:
        lines = fh.read().splitlines()
    assert len(lines) == 2 and lines[1].endswith(",1,0")


def test_fit_matches_library(tmp_path, capfd):
    rc = run("fit", "--data", DATA, "--out-dir", tmp_path)
    assert rc == 0
    printed = capfd.readouterr().out
    assert "reference p 2.73" in printed and "reference p 2.0" in printed

    with open(DATA, newline="") as fh:
        rows = list(csv.DictReader(fh))
    with open(tmp_path / "fit_summary.csv", newline="") as fh:
        fitted = {r["bandwidth"]: r for r in csv.DictReader(fh)}
    assert set(fitted) == {"3", "4", "5", "full"}
    for token, row in fitted.items():
        pts = [
            (float(r["n"]), float(r["mean_count"]))
            for r in rows
            if r["bandwidth"] == token
        ]
        ref = fit_power_law(pts)
        assert float(row["p"]) == ref.p
        assert float(row["c"]) == ref.c
        assert float(row["rmsd"]) == ref.rmsd
        assert int(row["n_points"]) == 8


def test_fit_empty_data(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("bandwidth,n,mean_count\n")
    assert run("fit", "--data", empty, "--out-dir", tmp_path) == 1


def test_fit_missing_file(tmp_path):
    assert run("fit", "--data", tmp_path / "nope.csv", "--out-dir", tmp_path) == 1


def test_unknown_subcommand_exits_one():
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 1


def test_missing_required_argument_exits_one(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("trace", "--out-dir", tmp_path)
    assert exc.value.code == 1


def test_manifest_shape(tmp_path, analytic_descriptor):
    rc = run(
        "trace", "--pencil", analytic_descriptor,
        "--loop", '{"kind": "circle", "center": [0, 0], "radius": 1}',
        "--out-dir", tmp_path,
    )
    assert rc == 0
    with open(tmp_path / "manifest.json") as fh:
        doc = json.load(fh)
    assert set(doc) == {"command", "config", "outputs", "version"}
    assert doc["command"] == "trace"
    assert doc["outputs"] == ["signature.json", "trace.csv"]
    assert "func" not in doc["config"]
