"""Convergence reports: per-step-size errors and a fitted log-log slope."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats


class InsufficientDataError(ValueError):
    """Too few step sizes to fit an order."""


class ReportFormatError(ValueError):
    """A report file could not be parsed."""


CSV_HEADER = ("h", "error_l2", "std_error", "n_samples")


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    error_l2: float
    std_error: float
    n_samples: int


@dataclass
class ConvergenceReport:
    """Rows sorted by ``h`` descending plus the least-squares slope of ``log error`` on ``log h``.

    ``order_ci`` is a 95% t-interval on the slope. ``saturated`` means every
    error sits below the configured floor, so the slope carries no information.
    """

    rows: list[ConvergenceRow] = field(default_factory=list)
    fitted_order: float = math.nan
    order_ci: tuple[float, float] = (math.nan, math.nan)
    window: tuple[float, float] | None = None
    saturated: bool = False
    label: str = ""

    @classmethod
    def fit(cls, rows, window=None, label: str = "", floor: float = 0.0) -> "ConvergenceReport":
        rows = sorted(rows, key=lambda r: -r.h)
        order, ci = fit_order([r.h for r in rows], [r.error_l2 for r in rows])
        saturated = bool(rows) and all(r.error_l2 <= floor for r in rows)
        return cls(rows, order, ci, tuple(window) if window else None, saturated, label)

    @property
    def passed(self) -> bool:
        if self.window is None or self.saturated or not math.isfinite(self.fitted_order):
            return False
        lo, hi = self.window
        return lo <= self.fitted_order <= hi

    def summary(self) -> str:
        lo, hi = self.order_ci
        tag = "saturated" if self.saturated else ("pass" if self.passed else "fail")
        win = f" window={list(self.window)}" if self.window else ""
        return f"{self.label or 'report'}: order={self.fitted_order:.4f} ci=[{lo:.4f}, {hi:.4f}]{win} {tag}"


def fit_order(hs, errors) -> tuple[float, tuple[float, float]]:
    """Least-squares slope of ``log(error)`` against ``log(h)`` with a 95% CI."""
    hs = np.asarray(hs, float)
    errors = np.asarray(errors, float)
    ok = (hs > 0) & (errors > 0) & np.isfinite(errors)
    x, y = np.log(hs[ok]), np.log(errors[ok])
    if x.size < 2:
        return math.nan, (math.nan, math.nan)
    res = stats.linregress(x, y)
    if x.size < 3:
        return float(res.slope), (math.nan, math.nan)
    half = stats.t.ppf(0.975, x.size - 2) * res.stderr
    return float(res.slope), (float(res.slope - half), float(res.slope + half))


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else str(v)


def report_to_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in report.rows:
        writer.writerow([_fmt(r.h), _fmt(r.error_l2), _fmt(r.std_error), int(r.n_samples)])
    lo, hi = report.order_ci
    buf.write(f"# fitted_order={_fmt(report.fitted_order)} ci={_fmt(lo)},{_fmt(hi)}\n")
    return buf.getvalue()


def report_to_json(report: ConvergenceReport) -> str:
    doc = {
        "rows": [asdict(r) for r in report.rows],
        "fitted_order": report.fitted_order,
        "order_ci": list(report.order_ci),
        "window": list(report.window) if report.window else None,
        "saturated": report.saturated,
        "pass": report.passed,
        "label": report.label,
    }
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def write_report(report: ConvergenceReport, path, fmt: str = "csv") -> Path:
    path = Path(path)
    text = {"csv": report_to_csv, "json": report_to_json}[fmt](report)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def parse_csv(text: str) -> ConvergenceReport:
    lines = text.splitlines()
    if not lines or tuple(lines[0].split(",")) != CSV_HEADER:
        raise ReportFormatError("missing or wrong CSV header")
    rows, order, ci = [], math.nan, (math.nan, math.nan)
    for line in lines[1:]:
        if line.startswith("# fitted_order="):
            body = line[2:]
            left, right = body.split(" ci=")
            order = float(left.split("=", 1)[1])
            lo, hi = right.split(",")
            ci = (float(lo), float(hi))
        elif line.strip():
            h, e, s, n = line.split(",")
            rows.append(ConvergenceRow(float(h), float(e), float(s), int(n)))
    return ConvergenceReport(rows, order, ci)


def parse_json(text: str) -> ConvergenceReport:
    doc = json.loads(text)
    rows = [ConvergenceRow(**r) for r in doc["rows"]]
    window = tuple(doc["window"]) if doc.get("window") else None
    return ConvergenceReport(
        rows, float(doc["fitted_order"]), tuple(doc["order_ci"]), window, doc.get("saturated", False), doc.get("label", "")
    )


def read_report(path) -> ConvergenceReport:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        return parse_json(text)
    return parse_csv(text)
