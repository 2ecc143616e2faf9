"""CSV and manifest writers for experiment outputs.

All CSVs carry a leading '#'-prefixed metadata block followed by a fixed,
documented header row.  Numbers are serialized with 17 significant digits
so reruns of the same seeded experiment are byte-identical.
"""

import json

import numpy as np

__all__ = [
    "format_number",
    "write_series_csv",
    "write_correlation_csv",
    "write_pv_csv",
    "write_manifest",
    "read_csv",
]


def format_number(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.17g}"


def _write_table(path, meta, header, rows):
    with open(path, "w", newline="\n") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}: {value}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_number(v) for v in row) + "\n")


def write_series_csv(path, meta, columns):
    """One row per time; `columns` is an ordered mapping name -> array."""
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    _write_table(path, meta, names, zip(*arrays))


def write_correlation_csv(path, meta, grid):
    """(t1, t2, S) triples for a CorrelationGrid, row-major over the grid."""
    rows = ((grid.times[i], grid.times[j], grid.values[i, j])
            for i in range(len(grid.times)) for j in range(len(grid.times)))
    _write_table(path, meta, ["t1", "t2", "S"], rows)


def write_pv_csv(path, meta, pv, ideal_path=None):
    """(bin, x, p, count) per angle bin; empty bins have p = nan.

    When ideal_path is given, the ideal cycle curve is written alongside
    as (bin, x, p).
    """
    rows = zip(range(len(pv.bin_centers)), pv.x, pv.pressure, pv.counts)
    _write_table(path, meta, ["bin", "x", "p", "count"], rows)
    if ideal_path is not None and pv.ideal is not None:
        rows = zip(range(len(pv.bin_centers)), pv.x, pv.ideal)
        _write_table(ideal_path, meta, ["bin", "x", "p"], rows)


def write_manifest(path, manifest):
    with open(path, "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_csv(path):
    """Read back a package CSV: returns (meta dict, column dict of arrays)."""
    meta = {}
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append([float(v) for v in line.split(",")])
    data = np.array(rows) if rows else np.empty((0, len(header or [])))
    return meta, {name: data[:, i] for i, name in enumerate(header or [])}
