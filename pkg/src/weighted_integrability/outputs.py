"""CSV/JSON writers.  Every file carries the resolved parameters and tool version.

CSV files start with ``#``-prefixed metadata lines followed by the column
header; read them with ``comment="#"`` (pandas) or :func:`read_csv_rows`.
Floats use 17 significant digits so files round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from typing import Iterable, Sequence

from . import __version__


def fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return "%.17g" % x


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _meta_lines(params: dict) -> list[str]:
    return [
        "# params: " + json.dumps(params, sort_keys=True),
        "# tool_version: " + __version__,
    ]


def csv_text(header: Sequence[str], rows: Iterable[Sequence], params: dict) -> str:
    buf = io.StringIO()
    for line in _meta_lines(params):
        buf.write(line + "\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def read_csv_rows(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_csv_params(path: str) -> dict:
    with open(path) as fh:
        for ln in fh:
            if ln.startswith("# params: "):
                return json.loads(ln[len("# params: "):])
    raise ValueError(f"{path} has no params line")


def ftle_csv_text(records, labels: Sequence[str], params: dict) -> str:
    header = ["index"] + [f"{lab}_0" for lab in labels] + [
        "rho0", "lambda_max", "escaped", "regular"]
    rows = ([r.index, *[float(x) for x in r.u0], r.rho0, r.lambda_max, bool(r.escaped),
             int(r.regular)] for r in records)
    return csv_text(header, rows, params)


def trajectory_csv_text(traj, labels: Sequence[str], params: dict) -> str:
    header = ["t"] + list(labels)
    rows = ([float(t), *[float(x) for x in s]] for t, s in zip(traj.times, traj.states))
    return csv_text(header, rows, params)


def sweep_csv_text(alphas, reports, params: dict) -> str:
    rows = ([float(a), r.m_rho, r.n_regular, r.n_escaped] for a, r in zip(alphas, reports))
    return csv_text(["alpha", "m_rho", "n_regular", "n_escaped"], rows, params)


def poincare_csv_text(rows, params: dict) -> str:
    m = len(rows[0].map_point.angles) if rows else 1
    header = (["epsilon", "map_I"] + [f"map_theta{i + 1}" for i in range(m)] + ["oracle_I"]
              + [f"oracle_theta{i + 1}" for i in range(m)] + ["error"])
    out = ([r.epsilon, r.map_point.action, *r.map_point.angles.tolist(),
            r.oracle_point.action, *r.oracle_point.angles.tolist(), r.error] for r in rows)
    return csv_text(header, out, params)


def json_text(obj: dict) -> str:
    return json.dumps(obj, indent=2) + "\n"
