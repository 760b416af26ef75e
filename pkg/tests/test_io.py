import numpy as np
import pytest

from semicausal import io
from semicausal.datagen import SimSpec, simulate
from semicausal.errors import SchemaError, ValidationError


def test_dataset_round_trips_bit_exactly(tmp_path):
    data = simulate(SimSpec("Ex2", 250, 0.6, seed=3))
    io.write_dataset(data, tmp_path / "d.csv")
    back = io.ingest_csv(tmp_path / "d.csv")
    assert back.equals(data)
    io.write_dataset(back, tmp_path / "e.csv")
    assert (tmp_path / "d.csv").read_bytes() == (tmp_path / "e.csv").read_bytes()


def test_x_greater_than_y_cites_the_line(tmp_path):
    data = simulate(SimSpec("Ex1", 20, 0.3, seed=3))
    io.write_dataset(data, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    f = lines[6].split(",")  # file line 7
    f[0], f[1] = "9.5", "2.0"
    lines[6] = ",".join(f)
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError, match="line 7"):
        io.ingest_csv(tmp_path / "d.csv")


def test_malformed_rows_cite_lines(tmp_path):
    (tmp_path / "d.csv").write_text("x,y,d1,d2,a,z1\n1,2,1,0,0,0.5\n1,2,2,0,0,0.1\n")
    with pytest.raises(ValidationError, match="line 3"):
        io.ingest_csv(tmp_path / "d.csv")
    (tmp_path / "d.csv").write_text("x,y,d1,d2,a,z1\n1,2,1,0,0\n")
    with pytest.raises(ValidationError, match="line 2"):
        io.ingest_csv(tmp_path / "d.csv")


def test_missing_columns_are_schema_errors(tmp_path):
    (tmp_path / "d.csv").write_text("x,y,d1,d2,a,z1\n1,2,1,0,0,0.5\n")
    with pytest.raises(SchemaError):
        io.ingest_csv(tmp_path / "d.csv", covariates=["z1", "z2"])
    (tmp_path / "e.csv").write_text("x,y,d1,a,z1\n1,2,1,0,0.5\n")
    with pytest.raises(SchemaError):
        io.ingest_csv(tmp_path / "e.csv")


def test_report_counts():
    data = simulate(SimSpec("Ex1", 300, 0.3, seed=3))
    rep = io.data_report(data)
    assert rep["n"] == 300 and rep["n_arm0"] + rep["n_arm1"] == 300
    assert rep["censoring_t1"] == pytest.approx(1 - data.d1.mean())


def test_fit_round_trip(tmp_path, ex1_fit):
    io.write_fit(ex1_fit, tmp_path / "f.json")
    back = io.read_fit(tmp_path / "f.json")
    for a in (0, 1):
        x, y = ex1_fit.arm(a), back.arm(a)
        assert x.alpha == y.alpha
        np.testing.assert_array_equal(x.beta1, y.beta1)
        np.testing.assert_array_equal(x.lambda02.jumps, y.lambda02.jumps)
    io.write_fit(back, tmp_path / "g.json")
    assert (tmp_path / "f.json").read_bytes() == (tmp_path / "g.json").read_bytes()


def test_fit_document_version_is_checked(tmp_path):
    (tmp_path / "f.json").write_text('{"format_version": 99}')
    with pytest.raises(SchemaError):
        io.read_fit(tmp_path / "f.json")
    (tmp_path / "g.json").write_text("not json")
    with pytest.raises(SchemaError):
        io.read_fit(tmp_path / "g.json")


def test_potential_outcome_table(tmp_path):
    data, po = simulate(SimSpec("Ex4", 30, 0.3, sigma=0.2, seed=1), return_potential=True)
    io.write_potential(po, tmp_path / "po.csv", data.covariate_names, include_gamma=True)
    head = (tmp_path / "po.csv").read_text().splitlines()[0]
    assert head == "t1_0,t2_0,t1_1,t2_1,z1,z2,gamma"
    arr = np.loadtxt(tmp_path / "po.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(arr[:, 6], po.gamma)
