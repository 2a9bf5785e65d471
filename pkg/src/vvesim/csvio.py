"""CSV and JSON output helpers shared by the command-line runs.

Floats are written with ``repr`` so every value parses back to the same
double; ``inf`` survives the round trip.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

METRICS_FIELDS = ("t", "x", "y", "psi", "v", "v_ref", "beta", "r", "action", "reward",
                  "ttz_veh_1", "ttz_ped_1", "ttz_veh_2", "ttz_ped_2", "band_1", "band_2")

_INT_FIELDS = {"action", "episode", "steps", "collisions"}
_STR_FIELDS = {"band_1", "band_2"}


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        # plain float repr; numpy scalars would otherwise print as np.float64(...)
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


class CsvWriter:
    """Row-at-a-time CSV writer that flushes each row, so partial runs
    still leave a readable file."""

    def __init__(self, path, fieldnames):
        self.fieldnames = list(fieldnames)
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(self.fieldnames)
        self.fh.flush()

    def write(self, row: dict):
        self.writer.writerow([_cell(row.get(k)) for k in self.fieldnames])
        self.fh.flush()

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path, fieldnames, rows):
    with CsvWriter(path, fieldnames) as w:
        for row in rows:
            w.write(row)


def read_csv(path) -> list[dict]:
    """Read a CSV written by :func:`write_csv`, restoring numeric types."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if k in _STR_FIELDS:
                    row[k] = v
                elif v == "":
                    row[k] = None
                elif k in _INT_FIELDS:
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            out.append(row)
    return out


def write_json_atomic(path, doc):
    """Write ``doc`` to a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".json", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
