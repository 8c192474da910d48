import csv
import io as stringio

import numpy as np
import pytest

from matlife.diagnostics import CoxSnellResiduals, kaplan_meier
from matlife.exceptions import InvalidInputError, TableParseError
from matlife.inhomogeneity import ScaledTransform, make_transform
from matlife.io import (
    load_model,
    model_from_dict,
    model_to_dict,
    read_survival_csv,
    save_model,
    write_curve_csv,
    write_lee_carter_csv,
    write_residuals_csv,
    write_step_csv,
    write_survival_csv,
    write_trace_csv,
)
from matlife.mortality import lee_carter_fit
from matlife.phasetype import IPHModel, PHRepresentation
from matlife.regression import PIModel


def models():
    rep = PHRepresentation([0.7, 0.3], [[-3.1, 1.7], [0.0, -5.3]])
    third = 1.0 / 3.0
    return [
        IPHModel(rep),
        IPHModel(rep, make_transform("gompertz", np.pi)),
        IPHModel(rep, make_transform("weibull", third)),
        PIModel(rep, "weibull", beta=[0.1, -0.2], gamma=[third]),
        PIModel(rep, "gompertz", beta=[np.e], gamma=[0.5, -0.25],
                standardization={"center": [1.5], "scale": [2.0]}),
        PIModel(rep, "identity", beta=[0.4, 0.6]),
    ]


class TestModelRoundTrip:
    @pytest.mark.parametrize("idx", range(6))
    def test_save_load_is_bitwise(self, tmp_path, idx):
        model = models()[idx]
        path = tmp_path / "model.json"
        save_model(path, model)
        back = load_model(path)
        assert type(back) is type(model)
        assert np.array_equal(back.rep.pi, model.rep.pi)
        assert np.array_equal(back.rep.T, model.rep.T)
        if isinstance(model, PIModel):
            assert back.family == model.family
            assert np.array_equal(back.beta, model.beta)
            if model.gamma is None:
                assert back.gamma is None
            else:
                assert np.array_equal(back.gamma, model.gamma)
            assert back.standardization == model.standardization
        else:
            assert back.transform.family == model.transform.family
            assert back.transform.params == model.transform.params

    def test_wrapped_transform_refuses_to_serialize(self):
        m = IPHModel(PHRepresentation([1.0], [[-1.0]]),
                     ScaledTransform(make_transform("gompertz", 2.0), 1.5))
        with pytest.raises(InvalidInputError):
            model_to_dict(m)

    def test_unknown_kind_rejected(self):
        data = model_to_dict(models()[0])
        data["kind"] = "mystery"
        with pytest.raises(InvalidInputError):
            model_from_dict(data)

    def test_missing_parameter_rejected(self):
        data = model_to_dict(models()[1])
        data["params"] = {}
        with pytest.raises(InvalidInputError):
            model_from_dict(data)

    def test_not_a_model_file(self, tmp_path):
        path = tmp_path / "noise.json"
        path.write_text("not json at all")
        with pytest.raises(InvalidInputError):
            load_model(path)

    def test_non_model_object_rejected(self):
        with pytest.raises(InvalidInputError):
            model_to_dict({"anything": 1})


CSV_TEXT = """time,status,weight,karno,age
10.5,1,1.0,0.6,66
3.25,0,2.0,0.8,42
7.75,1,1.0,0.3,58
"""


class TestReadSurvivalCsv:
    def test_basic_parse(self):
        data = read_survival_csv(stringio.StringIO(CSV_TEXT))
        assert data.covariate_names == ["karno", "age"]
        s = data.sample
        np.testing.assert_array_equal(s.y, [10.5, 3.25, 7.75])
        np.testing.assert_array_equal(s.delta, [1, 0, 1])
        np.testing.assert_array_equal(s.weight, [1.0, 2.0, 1.0])
        np.testing.assert_array_equal(s.x[:, 1], [66, 42, 58])

    def test_weight_column_optional(self):
        text = "time,status\n1.0,1\n2.0,0\n"
        data = read_survival_csv(stringio.StringIO(text))
        np.testing.assert_array_equal(data.sample.weight, [1.0, 1.0])
        assert data.sample.d == 0

    def test_header_case_insensitive(self):
        text = "Time,Status,Karno\n1.0,1,0.5\n"
        data = read_survival_csv(stringio.StringIO(text))
        assert data.covariate_names == ["Karno"]

    def test_missing_required_column(self):
        with pytest.raises(TableParseError) as err:
            read_survival_csv(stringio.StringIO("time,karno\n1.0,2\n"))
        assert err.value.line == 1

    def test_ragged_row_reports_line(self):
        text = "time,status\n1.0,1\n2.0\n"
        with pytest.raises(TableParseError) as err:
            read_survival_csv(stringio.StringIO(text))
        assert err.value.line == 3

    def test_bad_value_reports_line(self):
        text = "time,status\nabc,1\n"
        with pytest.raises(TableParseError) as err:
            read_survival_csv(stringio.StringIO(text))
        assert err.value.line == 2

    def test_empty_and_headers_only(self):
        with pytest.raises(TableParseError):
            read_survival_csv(stringio.StringIO(""))
        with pytest.raises(TableParseError):
            read_survival_csv(stringio.StringIO("time,status\n"))


class TestWriteReadCycle:
    def test_survival_csv_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(4)
        from matlife.regression import RegressionSample
        sample = RegressionSample(rng.exponential(3.0, 40) + 1e-3,
                                  rng.integers(0, 2, 40),
                                  rng.normal(size=(40, 2)),
                                  rng.uniform(0.5, 2.0, 40))
        path = tmp_path / "sample.csv"
        write_survival_csv(path, sample, names=["a", "b"])
        back = read_survival_csv(path)
        assert back.covariate_names == ["a", "b"]
        assert np.array_equal(back.sample.y, sample.y)
        assert np.array_equal(back.sample.delta, sample.delta)
        assert np.array_equal(back.sample.x, sample.x)
        assert np.array_equal(back.sample.weight, sample.weight)

    def test_name_count_enforced(self, tmp_path):
        from matlife.regression import RegressionSample
        sample = RegressionSample([1.0], [1], np.ones((1, 2)), [1.0])
        with pytest.raises(InvalidInputError):
            write_survival_csv(tmp_path / "s.csv", sample, names=["only_one"])

    def test_step_csv_layout(self, tmp_path):
        km = kaplan_meier([(1.0, 1), (2.0, 0), (3.0, 1)])
        path = tmp_path / "km.csv"
        write_step_csv(path, km)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["time", "estimate", "lower", "upper"]
        assert float(rows[1][0]) == 0.0 and float(rows[1][1]) == 1.0
        assert float(rows[2][0]) == 1.0
        assert float(rows[2][1]) == km.values[0]
        assert float(rows[2][2]) == km.lower[0]
        assert float(rows[2][3]) == km.upper[0]

    def test_step_csv_missing_bounds_written_as_nan(self, tmp_path):
        from matlife.diagnostics import StepFunction
        step = StepFunction(np.array([1.0]), np.array([0.5]))
        path = tmp_path / "step.csv"
        write_step_csv(path, step)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[2][2] == "nan" and rows[2][3] == "nan"

    def test_trace_csv(self, tmp_path):
        path = tmp_path / "trace.csv"
        write_trace_csv(path, [-10.0, -8.5, -8.4], value_name="loglik")
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "loglik"]
        assert [int(r[0]) for r in rows[1:]] == [1, 2, 3]
        assert float(rows[2][1]) == -8.5

    def test_residuals_csv(self, tmp_path):
        res = CoxSnellResiduals(np.array([0.5, 1.25]), np.array([1, 0]),
                                np.array([1.0, 2.0]))
        path = tmp_path / "resid.csv"
        write_residuals_csv(path, res)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["residual", "status", "weight"]
        assert float(rows[2][0]) == 1.25 and rows[2][1] == "0"

    def test_curve_csv(self, tmp_path):
        path = tmp_path / "curve.csv"
        write_curve_csv(path, [60, 61], [-4.0, -3.9], [-4.05, -3.85], "p2-gompertz")
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[1] == ["60", "-4", "-4.0499999999999998", "p2-gompertz"]
        with pytest.raises(InvalidInputError):
            write_curve_csv(path, [60], [-4.0, -3.9], [-4.0, -3.9], "x")

    def test_lee_carter_csv(self, tmp_path):
        rng = np.random.default_rng(2)
        fit = lee_carter_fit(rng.normal(size=(5, 8)))
        p, ix = tmp_path / "profile.csv", tmp_path / "index.csv"
        write_lee_carter_csv(p, ix, np.arange(5), np.arange(1990, 1998), fit)
        with open(p, newline="") as fh:
            prows = list(csv.reader(fh))
        with open(ix, newline="") as fh:
            irows = list(csv.reader(fh))
        assert len(prows) == 6 and len(irows) == 9
        assert float(prows[1][2]) == fit.b[0]
        assert float(irows[1][1]) == fit.k[0]
        with pytest.raises(InvalidInputError):
            write_lee_carter_csv(p, ix, np.arange(4), np.arange(8), fit)
