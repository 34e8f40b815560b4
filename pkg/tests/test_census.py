import json
import math
import os
import shutil

import numpy as np
import pytest

from pencilci.census import (
    GOE_REFERENCE_EXPONENTS,
    CensusReport,
    ExperimentSpec,
    PowerLawFit,
    cell_seed,
    fit_power_law,
    run_census,
    summarize_exponents,
    write_report,
)
from pencilci.errors import NonPositiveCount

TINY_ANALYTIC = dict(
    seed=0,
    n_list=(2,),
    b_list=("full",),
    delta_list=(0.45,),
    realizations=1,
    rows=3,
    cols=3,
    x_range=(-1.05, 0.95),
    y_range=(-1.05, 0.95),
    pencil_kind="analytic_ci",
    pencil_params=(("eps", 0.0),),
)


def test_cell_seed_deterministic_and_distinct():
    base = cell_seed(0, "full", 0, 50, 0)
    assert base == cell_seed(0, "full", 0, 50, 0)
    assert 0 <= base < 2**128
    variants = {
        cell_seed(1, "full", 0, 50, 0),
        cell_seed(0, 3, 0, 50, 0),
        cell_seed(0, "full", 1, 50, 0),
        cell_seed(0, "full", 0, 51, 0),
        cell_seed(0, "full", 0, 50, 1),
    }
    assert base not in variants
    assert len(variants) == 5


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(n_list=(10,), delta_list=(2.0,))  # above the sigma bound
    with pytest.raises(ValueError):
        ExperimentSpec(n_list=(10,), b_list=(0,))
    with pytest.raises(ValueError):
        ExperimentSpec(n_list=(10,), b_list=(10,))  # max is n - 1
    with pytest.raises(ValueError):
        ExperimentSpec(n_list=(10,), realizations=0)
    with pytest.raises(ValueError):
        ExperimentSpec(n_list=(10,), rows=0)
    with pytest.raises(ValueError):
        ExperimentSpec(n_list=(10,), pencil_kind="nope")


def test_spec_json_roundtrip(tmp_path):
    spec = ExperimentSpec(
        seed=7,
        n_list=(10, 20),
        b_list=(3, "full"),
        delta_list=(0.3, 0.45),
        realizations=2,
        rows=4,
        cols=8,
    )
    spec.to_json(tmp_path / "spec.json")
    assert ExperimentSpec.from_json(tmp_path / "spec.json") == spec
    spec2 = ExperimentSpec(**TINY_ANALYTIC)
    spec2.to_json(tmp_path / "spec2.json")
    assert ExperimentSpec.from_json(tmp_path / "spec2.json") == spec2
    assert ExperimentSpec.from_dict(spec2.to_dict()) == spec2


def test_spec_cell_order_deterministic():
    spec = ExperimentSpec(n_list=(4, 6), b_list=(3, "full"), realizations=2)
    cells = list(spec.cells())
    assert cells == list(spec.cells())
    assert len(cells) == 2 * 2 * 1 * 2


def test_fit_power_law_exact_recovery():
    ns = np.array([50, 60, 70, 80])
    fit = fit_power_law(zip(ns, 0.13 * ns**2.5))
    assert fit.p == pytest.approx(2.5, abs=1e-12)
    assert fit.c == pytest.approx(0.13, rel=1e-12)
    assert fit.rmsd == pytest.approx(0.0, abs=1e-14)
    assert fit.n_points == 4


def test_fit_power_law_scale_consistency():
    rng = np.random.default_rng(11)
    ns = np.arange(50, 130, 10)
    counts = 0.2 * ns**2.3 * np.exp(rng.normal(0, 0.05, ns.size))
    f1 = fit_power_law(zip(ns, counts))
    f2 = fit_power_law(zip(ns, 3.0 * counts))
    assert f2.p == pytest.approx(f1.p, abs=1e-12)
    assert f2.c == pytest.approx(3.0 * f1.c, rel=1e-12)
    assert f2.rmsd == pytest.approx(f1.rmsd, abs=1e-12)


def test_fit_power_law_drops_nonpositive():
    with pytest.warns(NonPositiveCount):
        fit = fit_power_law([(10, 100.0), (20, 0.0), (30, 900.0)])
    assert fit.n_points == 2
    with pytest.warns(NonPositiveCount):
        with pytest.raises(ValueError):
            fit_power_law([(10, 0.0), (20, -1.0)])
    with pytest.raises(ValueError):
        fit_power_law([(10, 5.0)])


def test_census_analytic_override(tmp_path):
    spec = ExperimentSpec(**TINY_ANALYTIC)
    report = run_census(spec, tmp_path)
    assert len(report.cells) == 1
    cell = report.cells[0]
    assert cell["count"] == 1
    assert cell["pair_counts"] == {"1": 1}
    assert cell["n_unresolved"] == 0
    assert cell["wall_time"] > 0
    assert report.means[("full", 0, 2)] == 1.0
    assert report.fits[("full", 0)] is None  # one n cannot pin a slope


def test_census_empty_n_list(tmp_path):
    spec = ExperimentSpec(n_list=())
    report = run_census(spec, tmp_path)
    assert report.cells == [] and report.means == {}
    paths = write_report(report, tmp_path)
    with open(paths["counts"]) as fh:
        assert fh.read() == "b,delta,n,realization,count,n_unresolved\n"
    with open(paths["fits"]) as fh:
        assert fh.read() == "b,delta,p,c,rmsd,n_points\n"


def _read_aggregates(out_dir):
    blobs = {}
    for name in ("census_counts.csv", "census_fits.csv", "census_loglog.dat"):
        with open(os.path.join(out_dir, name), "rb") as fh:
            blobs[name] = fh.read()
    return blobs


def test_census_determinism_and_resume(tmp_path):
    spec = ExperimentSpec(
        seed=3, n_list=(4, 6), realizations=1, rows=3, cols=3
    )
    dir_a = tmp_path / "a"
    dir_b = tmp_path / "b"
    write_report(run_census(spec, dir_a, workers=1), dir_a)
    write_report(run_census(spec, dir_b, workers=2), dir_b)
    assert _read_aggregates(dir_a) == _read_aggregates(dir_b)

    # resume from a partial cell directory reproduces the same aggregates
    dir_c = tmp_path / "c"
    os.makedirs(dir_c / "cells")
    names = sorted(os.listdir(dir_a / "cells"))
    for name in names[: len(names) // 2]:
        shutil.copy(dir_a / "cells" / name, dir_c / "cells" / name)
    write_report(run_census(spec, dir_c, workers=1, resume=True), dir_c)
    assert _read_aggregates(dir_a) == _read_aggregates(dir_c)


def test_write_report_files(tmp_path):
    spec = ExperimentSpec(**TINY_ANALYTIC)
    report = run_census(spec, tmp_path)
    paths = write_report(report, tmp_path)
    assert set(paths) == {"counts", "fits", "loglog", "report"}
    with open(paths["report"]) as fh:
        doc = json.load(fh)
    assert set(doc) >= {"spec", "cells", "means", "fits"}
    assert ExperimentSpec.from_dict(doc["spec"]) == spec
    assert doc["cells"][0]["count"] == 1
    with open(paths["counts"]) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "b,delta,n,realization,count,n_unresolved"
    assert lines[1].split(",") == ["full", "0.45000000000000001", "2", "0", "1", "0"]


def test_goe_reference_exponents():
    assert GOE_REFERENCE_EXPONENTS == {"full": 2.00, "5": 2.55, "4": 2.66, "3": 2.73}


def test_summarize_exponents():
    fits = {
        ("full", 0): PowerLawFit(p=2.02, c=0.7, rmsd=0.01, n_points=8),
        ("3", 0): PowerLawFit(p=2.59, c=0.13, rmsd=0.005, n_points=8),
        ("2", 0): PowerLawFit(p=2.8, c=0.1, rmsd=0.01, n_points=8),
        ("9", 0): None,
    }
    rows = summarize_exponents(fits)
    by_b = {r["b"]: r for r in rows}
    assert set(by_b) == {"full", "3", "2"}
    assert by_b["full"]["reference_p"] == 2.00
    assert by_b["full"]["difference"] == pytest.approx(0.02)
    assert by_b["3"]["reference_p"] == 2.73
    assert by_b["2"]["reference_p"] is None and by_b["2"]["difference"] is None
