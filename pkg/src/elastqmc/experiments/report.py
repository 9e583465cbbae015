"""Experiment reports: CSV tables, a JSON manifest and a separate timings file."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from .config import ExperimentConfig

__all__ = ["ExperimentReport", "format_table"]

# settings that change how a run executes but not what it computes
EXECUTION_KEYS = ("workers", "out")


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return v.item()
    return v


@dataclass
class ExperimentReport:
    experiment: str
    config: ExperimentConfig
    tables: dict = field(default_factory=dict)      # name -> list of row dicts
    summary: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def add_rows(self, table: str, rows) -> None:
        self.tables.setdefault(table, []).extend(rows)

    def table_csv(self, name: str) -> str:
        rows = self.tables[name]
        buf = io.StringIO()
        if rows:
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(list(rows[0]))
            for r in rows:
                w.writerow([_cell(r[k]) for k in rows[0]])
        return buf.getvalue()

    def manifest(self, files: dict) -> dict:
        config = self.config.to_dict()
        for k in EXECUTION_KEYS:
            config.pop(k)
        return _jsonable({
            "experiment": self.experiment,
            "package_version": __version__,
            "config": config,
            "config_digest": self.config.digest(),
            "summary": self.summary,
            "files": files,
        })

    def write(self, out_dir) -> list[Path]:
        """Write ``<experiment>_<table>.csv``, ``manifest.json`` and ``timings.json``.

        Everything except ``timings.json`` is byte-identical for identical configs.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written, files = [], {}
        for name in self.tables:
            path = out / f"{self.experiment}_{name}.csv"
            text = self.table_csv(name)
            path.write_text(text)
            files[path.name] = hashlib.sha256(text.encode()).hexdigest()
            written.append(path)
        man = out / "manifest.json"
        man.write_text(json.dumps(self.manifest(files), indent=2, sort_keys=True) + "\n")
        tim = out / "timings.json"
        run = {"seconds": self.timings,
               "execution": {k: getattr(self.config, k) for k in EXECUTION_KEYS}}
        tim.write_text(json.dumps(_jsonable(run), indent=2, sort_keys=True) + "\n")
        return written + [man, tim]


def format_table(rows, columns=None) -> str:
    """Fixed-width text rendering of a list of row dicts."""
    if not rows:
        return ""
    columns = columns or list(rows[0])

    def fmt(v):
        if isinstance(v, float):
            return f"{v:.3e}" if v != 0 and (abs(v) < 1e-2 or abs(v) >= 1e4) else f"{v:.4f}"
        return "" if v is None else str(v)

    cells = [[fmt(r.get(c)) for c in columns] for r in rows]
    width = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, width))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, width)) for row in cells]
    return "\n".join(lines)
