"""Report envelopes and their file formats.

JSON is the authoritative record.  The flattened CSV holds one row per leaf
and per container, which is enough to rebuild the JSON exactly.  Floats are
written with ``repr`` so they round-trip bit for bit; non-finite floats are
stored as the strings ``"nan"``, ``"inf"`` and ``"-inf"`` in JSON.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig

__all__ = [
    "REPORT_SCHEMA",
    "SWEEP_SCHEMA",
    "FLAT_SCHEMA",
    "DECAY_SCHEMA",
    "CUBES_SCHEMA",
    "PLOT_SCHEMA",
    "TIMING_SCHEMA",
    "envelope",
    "sweep_envelope",
    "to_jsonable",
    "dumps",
    "loads",
    "flatten",
    "unflatten",
    "to_csv",
    "from_csv",
    "plot_data",
    "emit",
]

REPORT_SCHEMA = "katolab.report/1"
SWEEP_SCHEMA = "katolab.sweep/1"
FLAT_SCHEMA = "katolab.flat/1"
DECAY_SCHEMA = "katolab.decay/1"
CUBES_SCHEMA = "katolab.cubes/1"
PLOT_SCHEMA = "katolab.plot/1"
TIMING_SCHEMA = "katolab.timing/1"

DECAY_COLUMNS = ("family", "variant", "lambda", "k_or_d", "norm_ratio", "fitted_c")
CUBE_COLUMNS = ("scale", "cube", "value")

_NONFINITE = {"nan": math.nan, "inf": math.inf, "-inf": -math.inf}


def to_jsonable(x):
    """Plain Python containers, numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": to_jsonable(x.real), "im": to_jsonable(x.imag)}
    if x is None or isinstance(x, str):
        return x
    raise TypeError(f"cannot serialize {type(x).__name__}")


def environment(cfg: ExperimentConfig) -> dict:
    g = cfg.grid
    return {
        "grid": {"n": g.n, "Nx": g.Nx, "Nt": g.Nt, "Lx": g.Lx, "Lt": g.Lt},
        "versions": {
            "katolab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def config_echo(cfg: ExperimentConfig) -> dict:
    # worker count and output location do not change results, so reports of
    # identical experiments agree byte for byte
    d = cfg.to_dict()
    d.pop("workers")
    d.pop("output")
    return d


def envelope(cfg: ExperimentConfig, results: list[dict]) -> dict:
    """Assemble a report; ``results`` are suite dicts in declared order."""
    return to_jsonable(
        {
            "schema": REPORT_SCHEMA,
            "config": config_echo(cfg),
            "environment": environment(cfg),
            "suites": results,
            "passed": all(r["passed"] for r in results),
        }
    )


def sweep_envelope(cfg: ExperimentConfig, parameter: str, values, reports: list[dict], checks: list[dict]) -> dict:
    return to_jsonable(
        {
            "schema": SWEEP_SCHEMA,
            "config": config_echo(cfg),
            "parameter": parameter,
            "values": list(values),
            "runs": reports,
            "checks": checks,
            "passed": all(r["passed"] for r in reports) and all(c["verdict"] == "pass" for c in checks),
        }
    )


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n"


def loads(text: str) -> dict:
    return json.loads(text)


# -- flattened CSV -------------------------------------------------------------------


def _escape(key: str) -> str:
    return key.replace("~", "~0").replace("/", "~1")


def _unescape(seg: str) -> str:
    return seg.replace("~1", "/").replace("~0", "~")


def flatten(obj, path: str = "") -> list[tuple[str, str, str]]:
    """Rows ``(path, type, value)`` in document order; paths are JSON pointers.

    CSV cannot carry NUL characters, so keys and strings containing one are rejected.
    """
    if "\x00" in path:
        raise ValueError("NUL characters are not representable in the flat CSV")
    if isinstance(obj, dict):
        rows = [(path, "object", str(len(obj)))]
        for k in sorted(obj):
            rows += flatten(obj[k], f"{path}/{_escape(k)}")
        return rows
    if isinstance(obj, list):
        rows = [(path, "array", str(len(obj)))]
        for i, v in enumerate(obj):
            rows += flatten(v, f"{path}/{i}")
        return rows
    if obj is None:
        return [(path, "null", "")]
    if isinstance(obj, bool):
        return [(path, "bool", "true" if obj else "false")]
    if isinstance(obj, int):
        return [(path, "int", str(obj))]
    if isinstance(obj, float):
        return [(path, "float", repr(obj))]
    if isinstance(obj, str):
        if "\x00" in obj:
            raise ValueError("NUL characters are not representable in the flat CSV")
        return [(path, "str", obj)]
    raise TypeError(f"cannot flatten {type(obj).__name__}")


def _parse(kind: str, value: str):
    if kind == "null":
        return None
    if kind == "bool":
        return value == "true"
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "str":
        return value
    raise ValueError(f"unknown leaf type {kind!r}")


def unflatten(rows) -> object:
    """Inverse of :func:`flatten`."""
    root = None
    parents: dict[str, object] = {}
    for path, kind, value in rows:
        if kind == "object":
            node = {}
        elif kind == "array":
            node = [None] * int(value)
        else:
            node = _parse(kind, value)
        if path == "":
            root = node
        else:
            head, _, seg = path.rpartition("/")
            parent = parents[head]
            if isinstance(parent, list):
                parent[int(seg)] = node
            else:
                parent[_unescape(seg)] = node
        if kind in ("object", "array"):
            parents[path] = node
    return root


def to_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_ALL)
    w.writerow(["path", "type", "value"])
    w.writerow(["#schema", "str", FLAT_SCHEMA])
    w.writerows(flatten(report))
    return buf.getvalue()


def from_csv(text: str) -> dict:
    rows = list(csv.reader(io.StringIO(text)))
    if rows[:1] != [["path", "type", "value"]]:
        raise ValueError("not a katolab flat CSV (bad header)")
    body = [r for r in rows[1:] if r[0] != "#schema"]
    return unflatten(body)


def _table(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="raise")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


# -- plot data ---------------------------------------------------------------------------


def _reports(report: dict) -> list[tuple[str, dict]]:
    if report.get("schema") == SWEEP_SCHEMA:
        return [(f"{report['parameter']}={v}", r) for v, r in zip(report["values"], report["runs"])]
    return [("", report)]


def plot_data(report: dict) -> dict:
    """``(x, y)`` series for decay fits and Kato-ratio histograms."""
    series = {}
    for prefix, rep in _reports(report):
        for s in rep.get("suites", []):
            for name, xy in s.get("plot", {}).items():
                key = f"{prefix}/{name}" if prefix else name
                series[key] = xy
            if s["name"] == "kato":
                for name, xy in s.get("plot", {}).items():
                    y = [v for v in xy["y"] if isinstance(v, float)]
                    if y:
                        counts, edges = np.histogram(y, bins=10)
                        key = f"{prefix}/{name}/histogram" if prefix else f"{name}/histogram"
                        series[key] = {"x": to_jsonable(0.5 * (edges[1:] + edges[:-1])), "y": counts.tolist()}
    return {"schema": PLOT_SCHEMA, "series": series}


def _collect_rows(report: dict, table: str) -> list[dict]:
    out = []
    for _, rep in _reports(report):
        for s in rep.get("suites", []):
            out.extend(s.get("rows", {}).get(table, []))
    return out


def emit(report: dict, prefix, formats=("json", "csv", "plotdata"), timing: dict | None = None) -> list[Path]:
    """Write the report files for ``prefix``; returns the paths written.

    ``<prefix>.json`` (authoritative), ``<prefix>.csv`` (flattened),
    ``<prefix>.plot.json``, ``<prefix>.decay.csv`` and ``<prefix>.cubes.csv``
    when the offdiag or carleson suites ran, and ``<prefix>.timing.json``.
    """
    prefix = Path(prefix)
    files: dict[Path, str] = {}
    if "json" in formats:
        files[prefix.with_name(prefix.name + ".json")] = dumps(report)
    if "csv" in formats:
        files[prefix.with_name(prefix.name + ".csv")] = to_csv(report)
        decay = _collect_rows(report, "decay")
        if decay:
            files[prefix.with_name(prefix.name + ".decay.csv")] = _table(DECAY_COLUMNS, decay)
        cubes = _collect_rows(report, "cubes")
        if cubes:
            files[prefix.with_name(prefix.name + ".cubes.csv")] = _table(CUBE_COLUMNS, cubes)
    if "plotdata" in formats:
        files[prefix.with_name(prefix.name + ".plot.json")] = dumps(plot_data(report))
    if timing is not None:
        files[prefix.with_name(prefix.name + ".timing.json")] = json.dumps({"schema": TIMING_SCHEMA, **timing}, indent=1, sort_keys=True) + "\n"
    written = []
    for path, text in files.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(path)
    return written
