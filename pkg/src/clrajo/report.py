"""NMSE report containers and their CSV / JSON serializations."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

CSV_COLUMNS = [
    "axis_value", "slot", "estimator", "mean_nmse", "stderr", "trials", "failed",
    "rank_recovery_rate", "overhead", "cumulative_overhead", "seed",
]


@dataclass
class EstimatorStats:
    mean_nmse: float
    stderr: float
    trials: int
    failed: int
    rank_recovery_rate: float
    mean_loss: list = field(default_factory=list)
    nmse: list = field(default_factory=list)
    rank_hat: list = field(default_factory=list)


@dataclass
class PointResult:
    axis_value: object
    estimators: dict
    overhead: int = 0
    slot: int | None = None
    cumulative_overhead: int | None = None


@dataclass
class NMSEReport:
    axis: str
    points: list
    seed: int
    config_hash: str = ""
    config: dict = field(default_factory=dict)

    def mean(self, estimator: str) -> list[float]:
        return [p.estimators[estimator].mean_nmse for p in self.points]

    def rows(self) -> list[dict]:
        out = []
        for p in self.points:
            for name, st in p.estimators.items():
                out.append({
                    "axis_value": p.axis_value, "slot": p.slot, "estimator": name,
                    "mean_nmse": st.mean_nmse, "stderr": st.stderr, "trials": st.trials,
                    "failed": st.failed, "rank_recovery_rate": st.rank_recovery_rate,
                    "overhead": p.overhead, "cumulative_overhead": p.cumulative_overhead,
                    "seed": self.seed,
                })
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NMSEReport":
        points = [
            PointResult(
                axis_value=p["axis_value"], overhead=p["overhead"], slot=p["slot"],
                cumulative_overhead=p["cumulative_overhead"],
                estimators={k: EstimatorStats(**v) for k, v in p["estimators"].items()},
            )
            for p in d["points"]
        ]
        return cls(axis=d["axis"], points=points, seed=d["seed"],
                   config_hash=d.get("config_hash", ""), config=d.get("config", {}))


def emit_report(report: NMSEReport, fmt: str, path) -> Path:
    """Write ``report`` as ``csv`` (one row per point and estimator) or
    ``json`` (everything, including per-trial arrays and the config echo)."""
    path = Path(path)
    try:
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
                writer.writeheader()
                for row in report.rows():
                    writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
        elif fmt == "json":
            with path.open("w") as fh:
                json.dump(report.to_dict(), fh, indent=1)
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_report_json(path) -> NMSEReport:
    with Path(path).open() as fh:
        return NMSEReport.from_dict(json.load(fh))


def _parse_scalar(text: str):
    if text == "":
        return None
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_report_csv(path) -> list[dict]:
    """Rows of a CSV report with numeric fields converted back."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v if k == "estimator" else _parse_scalar(v)) for k, v in r.items()} for r in rows]
