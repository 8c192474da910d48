"""Model persistence and CSV interchange.

Models serialize to JSON with full-precision floats, so a save/load cycle
reproduces every parameter bitwise.  CSV exports use ``%.17g`` for the same
reason.  Only plain transform families serialize; the shifted and scaled
wrappers describe derived models and are rebuilt on demand instead.
"""

from __future__ import annotations

import csv
import json
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidInputError, TableParseError
from .inhomogeneity import make_transform
from .phasetype import IPHModel, PHRepresentation
from .regression import PIModel, RegressionSample

__all__ = [
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "SurvivalData",
    "read_survival_csv",
    "write_survival_csv",
    "write_step_csv",
    "write_trace_csv",
    "write_residuals_csv",
    "write_curve_csv",
    "write_lee_carter_csv",
]

_FAMILY_PARAM = {"gompertz": "beta", "weibull": "theta"}


def model_to_dict(model) -> dict:
    """JSON-ready description of a lifetime or regression model."""
    if isinstance(model, PIModel):
        return {
            "kind": "regression",
            "pi": model.rep.pi.tolist(),
            "T": model.rep.T.tolist(),
            "family": model.family,
            "beta": model.beta.tolist(),
            "gamma": None if model.gamma is None else model.gamma.tolist(),
            "link": model.link,
            "standardization": model.standardization,
        }
    if isinstance(model, IPHModel):
        family = model.transform.family
        if family not in ("identity", "gompertz", "weibull"):
            raise InvalidInputError(
                "only plain transform families serialize; rebuild shifted or "
                "scaled models from their base")
        params = {} if family == "identity" else dict(model.transform.params)
        return {
            "kind": "lifetime",
            "pi": model.rep.pi.tolist(),
            "T": model.rep.T.tolist(),
            "family": family,
            "params": params,
        }
    raise InvalidInputError("model must be a lifetime or regression model")


def model_from_dict(data: dict):
    """Rebuild a model saved by ``model_to_dict``."""
    try:
        kind = data["kind"]
        rep = PHRepresentation(np.asarray(data["pi"]), np.asarray(data["T"]))
        family = data["family"]
    except (KeyError, TypeError) as err:
        raise InvalidInputError(f"malformed model description: {err}") from None
    if kind == "lifetime":
        if family == "identity":
            return IPHModel(rep)
        name = _FAMILY_PARAM.get(family)
        if name is None or name not in data.get("params", {}):
            raise InvalidInputError(f"malformed parameters for family {family!r}")
        return IPHModel(rep, make_transform(family, float(data["params"][name])))
    if kind == "regression":
        gamma = data.get("gamma")
        return PIModel(rep, family, np.asarray(data["beta"], dtype=float),
                       None if gamma is None else np.asarray(gamma, dtype=float),
                       data.get("link", "exp"), data.get("standardization"))
    raise InvalidInputError(f"unknown model kind {data.get('kind')!r}")


def save_model(path, model) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise InvalidInputError(f"not a model file: {err}") from None
    return model_from_dict(data)


class SurvivalData(NamedTuple):
    """Sample plus the covariate column names it was read with."""

    sample: RegressionSample
    covariate_names: list


def _fmt(value) -> str:
    return "%.17g" % float(value)


def read_survival_csv(source) -> SurvivalData:
    """Read observations from CSV with columns time, status[, weight], x...

    ``time`` and ``status`` are required, ``weight`` is optional, and every
    remaining column is a covariate (kept in file order).  Header matching is
    case-insensitive.
    """
    if hasattr(source, "read"):
        rows = list(csv.reader(source))
    else:
        with open(source, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise TableParseError(1, "empty file")
    header = [cell.strip() for cell in rows[0]]
    lowered = [cell.lower() for cell in header]
    if "time" not in lowered or "status" not in lowered:
        raise TableParseError(1, "header must name time and status columns")
    pos_time = lowered.index("time")
    pos_status = lowered.index("status")
    pos_weight = lowered.index("weight") if "weight" in lowered else None
    special = {pos_time, pos_status}
    if pos_weight is not None:
        special.add(pos_weight)
    cov_pos = [i for i in range(len(header)) if i not in special]
    names = [header[i] for i in cov_pos]

    y, delta, weight, x = [], [], [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise TableParseError(line_no,
                                  f"expected {len(header)} fields, got {len(row)}")
        try:
            y.append(float(row[pos_time]))
            delta.append(int(float(row[pos_status])))
            weight.append(1.0 if pos_weight is None else float(row[pos_weight]))
            x.append([float(row[i]) for i in cov_pos])
        except ValueError as err:
            raise TableParseError(line_no, str(err)) from None
    if not y:
        raise TableParseError(len(rows), "no data rows")
    sample = RegressionSample(np.asarray(y), np.asarray(delta),
                              np.asarray(x, dtype=float).reshape(len(y), -1),
                              np.asarray(weight))
    return SurvivalData(sample, names)


def write_survival_csv(path, sample: RegressionSample, names=None) -> None:
    """Write a sample with columns time, status, weight, covariates."""
    names = list(names) if names is not None else [
        f"x{i + 1}" for i in range(sample.d)]
    if len(names) != sample.d:
        raise InvalidInputError("one name per covariate column is required")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "status", "weight", *names])
        for i in range(sample.n):
            writer.writerow([_fmt(sample.y[i]), int(sample.delta[i]),
                             _fmt(sample.weight[i]),
                             *(_fmt(v) for v in sample.x[i])])


def write_step_csv(path, step) -> None:
    """Export an estimator as rows of time, estimate, lower, upper.

    A leading row anchors the curve at time zero; missing bounds write as
    ``nan``.
    """
    def bound(arr, i):
        return _fmt(arr[i]) if arr is not None else "nan"

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "estimate", "lower", "upper"])
        writer.writerow([_fmt(0.0), _fmt(step.initial),
                         _fmt(step.initial), _fmt(step.initial)])
        for i in range(step.times.size):
            writer.writerow([_fmt(step.times[i]), _fmt(step.values[i]),
                             bound(step.lower, i), bound(step.upper, i)])


def write_trace_csv(path, values, value_name: str = "loglik") -> None:
    values = np.asarray(values, dtype=float).ravel()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", value_name])
        for i, v in enumerate(values, start=1):
            writer.writerow([i, _fmt(v)])


def write_residuals_csv(path, residuals) -> None:
    """Export fitted residuals with their censoring status and weight."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["residual", "status", "weight"])
        for i in range(residuals.residual.size):
            writer.writerow([_fmt(residuals.residual[i]),
                             int(residuals.delta[i]),
                             _fmt(residuals.weight[i])])


def write_curve_csv(path, ages, observed, fitted, model_id: str) -> None:
    ages = np.asarray(ages)
    observed = np.asarray(observed, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    if not (ages.size == observed.size == fitted.size):
        raise InvalidInputError("curve column lengths disagree")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["age", "observed_log_mx", "fitted_log_mx", "model_id"])
        for i in range(ages.size):
            writer.writerow([int(ages[i]), _fmt(observed[i]), _fmt(fitted[i]),
                             model_id])


def write_lee_carter_csv(profile_path, index_path, ages, years, fit) -> None:
    """Export the age profile (level, loading) and the period index."""
    ages = np.asarray(ages)
    years = np.asarray(years)
    if ages.size != fit.a.size or years.size != fit.k.size:
        raise InvalidInputError("grid sizes disagree with the fit")
    with open(profile_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["age", "level", "loading"])
        for i in range(ages.size):
            writer.writerow([int(ages[i]), _fmt(fit.a[i]), _fmt(fit.b[i])])
    with open(index_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["year", "index"])
        for j in range(years.size):
            writer.writerow([int(years[j]), _fmt(fit.k[j])])
