"""Report documents: JSON and CSV renderings plus optional matplotlib figures.

A report is a plain mapping with four numeric parts: ``results`` (scalars),
``tables`` (column lists plus rows), ``series`` ((x, y) data for plotting)
and ``provenance``. Both renderings format every float with ``repr``, so the
two carry identical numbers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

SCHEMA = "singleshot-report"
SCHEMA_VERSION = 1

CONVENTIONS = {
    "trace_distance": "D(a, b) = (1/2) * sum |a - b| (half the trace norm)",
    "entropy_unit": "nats (k_B = 1)",
    "energy": "energy_quanta * quantum; beta in inverse energy units",
    "free_energy": "F = U - S / beta",
}


def plain(x: Any) -> Any:
    """Convert numbers and containers to JSON-compatible values deterministically."""
    if isinstance(x, dict):
        return {_key(k): plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [plain(v) for v in x.tolist()]
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else str(x)
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def _key(k) -> str:
    if isinstance(k, tuple):
        return ",".join(str(plain(v)) for v in k)
    return str(k)


def make_report(command: str, version: str, config_dict: dict | None, config_hash: str | None,
                flags: dict, results: dict, tables: dict | None = None, series: dict | None = None) -> dict:
    return {
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "conventions": CONVENTIONS,
        "inputs": plain({"config": config_dict, "flags": flags}),
        "provenance": {"version": version, "config_sha256": config_hash, "seed": flags.get("seed")},
        "results": plain(results),
        "tables": plain(tables or {}),
        "series": plain(series or {}),
    }


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, separators=(",", ":"))
    if v is None:
        return ""
    return str(v)


def _flatten(prefix: str, value, out: list):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    else:
        out.append((prefix, value))


def render_csv(report: dict) -> str:
    """Sections separated by ``# name`` lines: metadata, results, each table and each series."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    meta = []
    for key in ("schema", "schema_version", "command"):
        meta.append((key, report[key]))
    _flatten("conventions", report["conventions"], meta)
    _flatten("provenance", report["provenance"], meta)
    _flatten("flags", report["inputs"]["flags"], meta)
    meta.append(("config", report["inputs"]["config"]))
    buf.write("# metadata\n")
    w.writerow(["key", "value"])
    for k, v in meta:
        w.writerow([k, _cell(v)])
    flat = []
    _flatten("", report["results"], flat)
    buf.write("# results\n")
    w.writerow(["key", "value"])
    for k, v in flat:
        w.writerow([k, _cell(v)])
    for name, table in report["tables"].items():
        buf.write(f"# table {name}\n")
        w.writerow(table["columns"])
        for row in table["rows"]:
            w.writerow([_cell(v) for v in row])
    for name, s in report["series"].items():
        buf.write(f"# series {name}\n")
        w.writerow([s["x_label"], s["y_label"]])
        for x, y in zip(s["x"], s["y"]):
            w.writerow([_cell(x), _cell(y)])
    return buf.getvalue()


def series(x, y, x_label: str, y_label: str, log_x: bool = False, log_y: bool = False, reference=None) -> dict:
    """An (x, y) series; ``reference`` is an optional second curve drawn dashed in figures."""
    out = {"x_label": x_label, "y_label": y_label, "x": list(x), "y": list(y), "log_x": log_x, "log_y": log_y}
    if reference is not None:
        out["reference"] = {"label": reference[0], "y": list(reference[1])}
    return out


def render_figures(report: dict, directory) -> list[Path]:
    """Draw every series of ``report`` to ``<directory>/<command>_<series>.png``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, s in report["series"].items():
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.plot(s["x"], s["y"], "o-", ms=3, lw=1.2, label=s["y_label"])
        if "reference" in s:
            ax.plot(s["x"], s["reference"]["y"], "--", lw=1, color="0.4", label=s["reference"]["label"])
            ax.legend(frameon=False, fontsize=8)
        if s.get("log_x"):
            ax.set_xscale("log")
        if s.get("log_y"):
            ax.set_yscale("log")
        ax.set_xlabel(s["x_label"])
        ax.set_ylabel(s["y_label"])
        ax.set_title(f"{report['command']}: {name}", fontsize=9)
        fig.tight_layout()
        path = directory / f"{report['command']}_{name}.png"
        fig.savefig(path, dpi=120, metadata={"Software": None})
        plt.close(fig)
        paths.append(path)
    return paths
