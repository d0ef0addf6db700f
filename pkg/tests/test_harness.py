import io
from dataclasses import dataclass

import numpy as np
import pytest

from smoothgrad.api import GradResult
from smoothgrad.errors import ConfigError
from smoothgrad.estimators import EstimatorSpec
from smoothgrad.harness import (BenchRow, FidelityRow, bench, fidelity_mae, format_value, grid_offsets,
                                write_csv)
from smoothgrad.optimize import DescentRecord
from smoothgrad.problems import Heaviside, Synthetic, Traffic

from oracles import heaviside_smoothed


def test_format_value():
    assert format_value(0.1) == "0.1"
    assert format_value(np.float64(1 / 3)) == repr(1 / 3)
    assert format_value(np.int64(7)) == "7"
    assert format_value(True) == "true"
    assert format_value("DGO/100") == "DGO/100"


def test_empty_table_is_header_only():
    buf = io.StringIO()
    write_csv([], buf, DescentRecord.CSV_FIELDS)
    assert buf.getvalue() == "step,wall_ms,expectation,crisp_objective\n"
    with pytest.raises(ConfigError):
        write_csv([], io.StringIO())


def test_rows_and_files(tmp_path):
    rows = [FidelityRow(0, 0.25, 0.01), FidelityRow(1, 0.5, 0.02)]
    p = tmp_path / "f.csv"
    write_csv(rows, p)
    first = p.read_bytes()
    write_csv(rows, p)
    assert p.read_bytes() == first == b"dim,mae,baseline_se\n0,0.25,0.01\n1,0.5,0.02\n"


def test_grid_offsets():
    assert grid_offsets(1, 3.0).tolist() == [0.0]
    assert grid_offsets(3, 1.0).tolist() == [-1.0, 0.0, 1.0]
    with pytest.raises(ConfigError):
        grid_offsets(0, 1.0)


def test_baseline_against_itself_scores_zero():
    p = Synthetic(4)
    base = EstimatorSpec("pgo", sigma=0.5, samples=200)
    rep = fidelity_mae(p, base, base, count=4, seed=3, baseline_seed=3)
    assert [r.mae for r in rep.rows] == [0.0, 0.0]


@dataclass
class Shifted:
    inner: EstimatorSpec
    shift: np.ndarray

    def estimate(self, program, x, seed=0, program_seed=None):
        r = self.inner.estimate(program, x, seed=seed, program_seed=program_seed)
        return GradResult(r.expectation, r.gradient + self.shift)


def test_constant_offset_scores_its_size():
    p = Synthetic(4)
    base = EstimatorSpec("pgo", sigma=0.5, samples=200)
    rep = fidelity_mae(p, Shifted(base, np.array([0.3, -0.125])), base, count=3, baseline_seed=0)
    assert [r.mae for r in rep.rows] == pytest.approx([0.3, 0.125], abs=1e-12)


class Analytic:
    def estimate(self, program, x, seed=0, program_seed=None):
        e, g = heaviside_smoothed(float(x[0]), 0.25)
        return GradResult(e, np.array([g]), np.zeros(1))


def test_dgo_close_to_analytic_heaviside():
    rep = fidelity_mae(Heaviside(), EstimatorSpec("dgo", sigma=0.25, samples=10_000), Analytic(), count=10,
                       half_width=1.0, point=[0.0])
    assert rep.mean_mae <= 0.05


def test_fidelity_argument_checks():
    p = Traffic(2)
    dgo = EstimatorSpec("dgo", sigma=0.5, samples=100)
    with pytest.raises(ConfigError):
        fidelity_mae(p, dgo, EstimatorSpec("rf", sigma=0.5, samples=1000))
    with pytest.raises(ConfigError):
        fidelity_mae(p, dgo, EstimatorSpec("pgo", sigma=0.5, samples=10))
    with pytest.raises(ConfigError):
        fidelity_mae(p, dgo, EstimatorSpec("pgo", sigma=0.5, samples=100), dims=5)


def test_fidelity_report_shape():
    p = Traffic(2)
    rep = fidelity_mae(p, EstimatorSpec("dgo", sigma=0.5, samples=50), EstimatorSpec("pgo", sigma=0.5, samples=50),
                       dims=2, count=3)
    assert [r.dim for r in rep.rows] == [0, 1]
    assert all(r.mae >= 0 and r.baseline_se >= 0 for r in rep.rows)
    assert rep.grid.tolist() == [-2.0, 0.0, 2.0]


def test_bench_row():
    row = bench(Traffic(2), EstimatorSpec("dgo", sigma=0.5, samples=20), repeats=1)
    assert isinstance(row, BenchRow)
    assert row.estimator == "DGO/20" and row.samples_or_paths == 20
    assert row.mean_ms > 0 and row.slowdown_per_unit > 0
    si = bench(Synthetic(4), EstimatorSpec("dgsi", sigma=0.5, paths=8), repeats=1)
    assert 1.0 <= si.samples_or_paths <= 8
    with pytest.raises(ConfigError):
        bench(Traffic(2), EstimatorSpec("dgo"), repeats=0)
