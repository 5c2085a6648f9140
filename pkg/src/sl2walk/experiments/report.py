"""Experiment reports and their JSON / CSV serialisations."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

from .config import SCHEMA_VERSION

# verdict statuses
PASS = "pass"
FAIL = "fail"
DEGENERATE = "degenerate"
INCONCLUSIVE = "inconclusive"
HYPOTHESES_NOT_MET = "hypotheses not met"


def verdict(name: str, status: str, value=None, threshold=None, detail: str = "") -> dict:
    return {"name": name, "status": status, "value": value, "threshold": threshold, "detail": detail}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


@dataclass
class Report:
    experiment: str
    config: dict
    records: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    hard_checks: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)

    @property
    def hard_failures(self) -> int:
        return int(sum(c.get("violations", 0) for c in self.hard_checks.values()))

    @property
    def passed(self) -> bool:
        return self.hard_failures == 0 and all(v["status"] in (PASS, DEGENERATE) for v in self.verdicts)

    def body(self, deterministic: bool = True) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "config": self.config,
            "records": self.records,
            "verdicts": self.verdicts,
            "hard_checks": self.hard_checks,
            "diagnostics": self.diagnostics,
            "provenance": self.provenance,
        }
        if not deterministic:
            out["runtime"] = self.runtime
        return _clean(out)

    def to_json(self, deterministic: bool = True) -> str:
        return json.dumps(self.body(deterministic), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        """One row per grid point; the verdict column holds the overall status."""
        rows = _clean(self.records)
        status = ";".join(f"{v['name']}={v['status']}" for v in self.verdicts)
        cols = ["experiment", "estimate", "se", "count"]
        for r in rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        cols.append("verdict")
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow({"experiment": self.experiment, **r, "verdict": status})
        return buf.getvalue()

    def summary_lines(self) -> list[str]:
        lines = [f"[{self.experiment}]"]
        for v in self.verdicts:
            lines.append(f"  {v['status']:>18}  {v['name']}: value={v['value']} threshold={v['threshold']} {v['detail']}".rstrip())
        for name, chk in self.hard_checks.items():
            lines.append(f"  {'hard':>18}  {name}: {chk['violations']} violations / {chk['checked']}")
        return lines


def load_report(text: str) -> dict:
    return json.loads(text)
