"""Comparison reports and their on-disk form (report.json, report.csv, plotdata/*.csv)."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

RESULT_COLUMNS = ("predicted", "mc_mean", "mc_stderr", "z", "pass")


def row_passes(predicted, mc_mean, mc_stderr, abs_floor: float, n_sigma: float = 3.0) -> bool:
    """|predicted - mc| <= max(n_sigma * stderr, floor); rows missing either side pass."""
    if predicted is None or mc_mean is None:
        return True
    if not (math.isfinite(predicted) and math.isfinite(mc_mean)):
        return False
    return abs(predicted - mc_mean) <= max(n_sigma * (mc_stderr or 0.0), abs_floor)


def row_pass(row: dict) -> bool:
    """Pass flag of a stored row: a window test when the inputs carry one, else the tolerance law."""
    inp = row["inputs"]
    if "window_lo" in inp:
        v = row["mc_mean"]
        return v is not None and math.isfinite(v) and inp["window_lo"] <= v <= inp["window_hi"]
    return row_passes(row["predicted"], row["mc_mean"], row["mc_stderr"], inp.get("abs_floor", 0.0),
                      inp.get("n_sigma", 3.0))


def make_row(inputs: dict, predicted=None, mc_mean=None, mc_stderr=None, abs_floor: float = 0.0,
             n_sigma: float = 3.0, window: tuple | None = None) -> dict:
    """Assemble a report row; the pass rule's parameters are stored with the inputs.

    With ``window=(lo, hi)`` the row passes when lo <= mc_mean <= hi.
    """
    inp = dict(inputs)
    if window is not None:
        inp["window_lo"], inp["window_hi"] = float(window[0]), float(window[1])
    else:
        inp["abs_floor"] = float(abs_floor)
        inp["n_sigma"] = float(n_sigma)
    z = None
    if predicted is not None and mc_mean is not None and mc_stderr:
        z = (mc_mean - predicted) / mc_stderr
    row = {"inputs": inp, "predicted": _f(predicted), "mc_mean": _f(mc_mean),
           "mc_stderr": _f(mc_stderr), "z": _f(z)}
    row["pass"] = row_pass(row)
    return row


def _f(v):
    return None if v is None else float(v)


@dataclass
class ComparisonReport:
    experiment: str
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    plotdata: dict = field(default_factory=dict)  # name -> {"columns": [...], "rows": [[...]]}
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)

    def input_columns(self) -> list:
        cols: list = []
        for r in self.rows:
            for k in r["inputs"]:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "rows": self.rows, "metadata": self.metadata,
                "plotdata": self.plotdata, "extras": self.extras}

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        return cls(d["experiment"], d.get("rows", []), d.get("metadata", {}), d.get("plotdata", {}),
                   d.get("extras", {}))


def recompute_pass_flags(report: ComparisonReport) -> list:
    return [row_pass(r) for r in report.rows]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True, separators=(",", ":"))
    return str(v)


def report_csv(report: ComparisonReport) -> str:
    """Flat CSV: input columns in first-seen order, then the fixed result columns."""
    cols = report.input_columns()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols + list(RESULT_COLUMNS))
    for r in report.rows:
        w.writerow([_cell(r["inputs"].get(c)) for c in cols] + [_cell(r[k]) for k in RESULT_COLUMNS])
    return buf.getvalue()


def _json_default(o):
    import numpy as np

    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def report_json(report: ComparisonReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def emit_outputs(report: ComparisonReport, out_dir: str) -> dict:
    """Write report.json, report.csv and plotdata/*.csv; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {"json": os.path.join(out_dir, "report.json"), "csv": os.path.join(out_dir, "report.csv")}
    with open(paths["json"], "w", newline="") as fh:
        fh.write(report_json(report))
    with open(paths["csv"], "w", newline="") as fh:
        fh.write(report_csv(report))
    if report.plotdata:
        pdir = os.path.join(out_dir, "plotdata")
        os.makedirs(pdir, exist_ok=True)
        for name in sorted(report.plotdata):
            series = report.plotdata[name]
            p = os.path.join(pdir, f"{name}.csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(series["columns"])
                for row in series["rows"]:
                    w.writerow([_cell(v) for v in row])
            paths[f"plot:{name}"] = p
    return paths


def load_report(path: str) -> ComparisonReport:
    with open(path) as fh:
        return ComparisonReport.from_dict(json.load(fh))
