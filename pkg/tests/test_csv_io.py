"""
Tests for CSV import and export
"""
import os

import numpy as np
import pytest

from src.handlers import csv_handlers as csv_io
from src.handlers.simulate_handlers import gen_mixture, gen_spike
from src.states.errors import ParseError
from src.states.models import (BiasFactors, ExperimentReport, MixtureSpec, ProcrustesFit, ScoreMatrix,
                               ScorePairTable, SpikeSpec)


class TestMatrices:
    """Tests for plain matrix files"""

    def test_full_precision_is_exact(self, tmp_path):
        """17 significant digits reproduce float64 values bit for bit"""
        rng = np.random.default_rng(1)
        values = rng.standard_normal((6, 4)) * 1e3
        path = str(tmp_path / "m.csv")
        csv_io.write_matrix(path, values, full_precision=True)
        assert np.array_equal(csv_io.read_matrix(path), values)

    def test_default_precision(self, tmp_path):
        """Default output keeps nine significant digits"""
        path = str(tmp_path / "m.csv")
        csv_io.write_matrix(path, [[np.pi]])
        with open(path) as handle:
            assert handle.read() == "3.14159265\n"

    def test_dialect(self, tmp_path):
        """Metadata lines come first and lines end in LF"""
        path = str(tmp_path / "m.csv")
        csv_io.write_matrix(path, np.eye(2), metadata={"model": "spike"})
        with open(path, "rb") as handle:
            content = handle.read()
        assert content == b"# model=spike\n1,0\n0,1\n"
        assert csv_io.read_metadata(path) == {"model": "spike"}

    def test_ragged_rows(self, tmp_path):
        """A short row is reported with its line number"""
        path = tmp_path / "ragged.csv"
        path.write_text("# comment\n1,2,3\n4,5\n")
        with pytest.raises(ParseError) as excinfo:
            csv_io.read_matrix(str(path))
        assert excinfo.value.line_number == 3
        assert "line 3" in str(excinfo.value)

    def test_non_numeric(self, tmp_path):
        """Text fields are rejected with their line number"""
        path = tmp_path / "text.csv"
        path.write_text("1,2\n3,x\n")
        with pytest.raises(ParseError) as excinfo:
            csv_io.read_matrix(str(path))
        assert excinfo.value.line_number == 2

    def test_missing_and_empty(self, tmp_path):
        """Missing files and files without data fail to parse"""
        with pytest.raises(ParseError):
            csv_io.read_matrix(str(tmp_path / "absent.csv"))
        empty = tmp_path / "empty.csv"
        empty.write_text("# only metadata\n\n")
        with pytest.raises(ParseError):
            csv_io.read_matrix(str(empty))

    def test_derived_path(self):
        """Companion files insert the part before the suffix"""
        assert csv_io.derived_path("out/run.csv", "test") == "out/run_test.csv"
        assert csv_io.derived_path("run", "rms") == "run_rms.csv"


class TestDatasetExport:
    """Tests for dataset and oracle files"""

    def test_spike_dataset(self, tmp_path):
        """Data and oracle sidecars are written and read back"""
        ds = gen_spike(SpikeSpec(d=100, n=10, seed=2), n_test=4)
        out = str(tmp_path / "data.csv")
        paths = csv_io.write_dataset(out, ds, full_precision=True)
        assert all(os.path.exists(path) for path in paths)
        assert np.array_equal(csv_io.read_matrix(out), ds.train)
        assert np.array_equal(csv_io.read_matrix(csv_io.derived_path(out, "test")), ds.test)
        name, values = csv_io.read_oracle_field(csv_io.derived_path(out, "oracle_true_scores"))
        assert name == "true_scores"
        assert np.array_equal(values, ds.oracle.true_scores)
        assert not os.path.exists(csv_io.derived_path(out, "oracle_labels"))

    def test_mixture_labels(self, tmp_path):
        """Mixture exports carry the group labels"""
        ds = gen_mixture(MixtureSpec(d=200, n=12, seed=2), n_test=4)
        out = str(tmp_path / "mix.csv")
        csv_io.write_dataset(out, ds)
        _, labels = csv_io.read_oracle_field(csv_io.derived_path(out, "oracle_labels"))
        assert np.array_equal(labels.ravel(), ds.oracle.labels)


class TestResults:
    """Tests for scores, factors, fits and reports"""

    def test_scores(self, tmp_path):
        """Scores keep their kind and one observation per row"""
        scores = ScoreMatrix(values=np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]), kind="adjusted-sample")
        path = str(tmp_path / "s.csv")
        csv_io.write_scores(path, scores, full_precision=True)
        with open(path) as handle:
            lines = handle.read().splitlines()
        assert lines[:3] == ["# kind=adjusted-sample", "comp_1,comp_2", "1,4"]
        back = csv_io.read_scores(path)
        assert back.kind == "adjusted-sample"
        assert np.array_equal(back.values, scores.values)

    def test_factors(self, tmp_path):
        """Factors and their rotation are written side by side"""
        factors = BiasFactors(rho=np.array([1.25, 1.5]), provenance="theory", rotation=np.eye(2))
        path = str(tmp_path / "f.csv")
        paths = csv_io.write_factors(path, factors)
        assert paths == [path, csv_io.derived_path(path, "rotation")]
        back = csv_io.read_factors(path)
        assert len(back) == 1
        assert back[0].provenance == "theory"
        assert np.allclose(back[0].rho, [1.25, 1.5])

    def test_procrustes(self, tmp_path):
        """The fit is one header and one value row"""
        fit = ProcrustesFit(scale=np.array([1.5, 2.0]), rotation=np.eye(2), objective=0.25, iters=7,
                            theta=0.5)
        path = str(tmp_path / "p.csv")
        csv_io.write_procrustes(path, fit)
        with open(path) as handle:
            assert handle.read().splitlines() == ["theta,scale_1,scale_2,objective,iters", "0.5,1.5,2,0.25,7"]

    def test_report_round_trip(self, tmp_path):
        """Rows survive and the aggregate is recomputed identically"""
        report = ExperimentReport(name="bias_table", columns=["rep", "seed", "rho_theory_1", "status", "reason"],
                                  metadata={"experiment": "bias_table"})
        report.rows = [
            {"rep": 0, "seed": 11, "rho_theory_1": 1.5, "status": "ok", "reason": ""},
            {"rep": 1, "seed": 12, "rho_theory_1": 1.25, "status": "ok", "reason": ""},
            {"rep": 2, "seed": 13, "rho_theory_1": None, "status": "degenerate", "reason": "DegenerateSignal: x"},
        ]
        path = str(tmp_path / "r.csv")
        csv_io.write_report(path, report, full_precision=True)
        back = csv_io.read_report(path)
        assert back.name == "bias_table"
        assert back.excluded == 1
        assert back.aggregate() == report.aggregate()
        mean, sd, count = back.aggregate()["rho_theory_1"]
        assert mean == pytest.approx(1.375)
        assert sd == pytest.approx(np.std([1.5, 1.25], ddof=1))
        assert count == 2
        with open(path) as handle:
            assert "# aggregate\n" in handle.read()

    def test_report_ragged_row(self, tmp_path):
        """Report rows must match the header"""
        path = tmp_path / "bad.csv"
        path.write_text("rep,seed,status\n0,1\n")
        with pytest.raises(ParseError):
            csv_io.read_report(str(path))

    def test_score_pairs(self, tmp_path):
        """Pairs and RMS distances go to two files"""
        table = ScorePairTable(columns=["rep", "set", "obs", "true_1"],
                               rows=[{"rep": 0, "set": "train", "obs": 0, "true_1": 0.5}],
                               rms=[{"rep": 0, "seed": 1, "rms_train_raw": 0.1, "status": "ok", "reason": ""}])
        path = str(tmp_path / "pairs.csv")
        paths = csv_io.write_score_pairs(path, table)
        assert paths == [path, csv_io.derived_path(path, "rms")]
        with open(paths[1]) as handle:
            assert handle.read().splitlines()[0] == "rep,seed,rms_train_raw,status,reason"

    def test_write_rows(self, tmp_path):
        """Plain tables leave missing cells empty"""
        path = str(tmp_path / "t.csv")
        csv_io.write_rows(path, ["a", "b"], [{"a": 1}, {"a": 2, "b": "x"}])
        with open(path) as handle:
            assert handle.read().splitlines() == ["a,b", "1,", "2,x"]
