"""CSV and key=value output for simulation records, spectra and matrices."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .solver import RecordSet

PROBES_CSV = "probes.csv"
ENERGY_CSV = "energy.csv"
META_TXT = "meta.txt"


class OutputExistsError(FileExistsError):
    pass


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _prepare(directory, names, force: bool) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    clash = [n for n in names if (d / n).exists()]
    if clash and not force:
        raise OutputExistsError(f"{d / clash[0]} exists; pass --force to overwrite")
    return d


def write_csv(path, header, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([fmt(v) for v in row])


def write_meta(path, meta: dict) -> None:
    with open(path, "w") as fh:
        for k, v in meta.items():
            fh.write(f"{k}={fmt(v)}\n")


def read_meta(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def write_records(rec: RecordSet, directory, force: bool = False, extra_meta: dict | None = None) -> list:
    """Write ``probes.csv`` (if any probes), ``energy.csv`` and ``meta.txt``."""
    names = ([PROBES_CSV] if rec.probes else []) + [ENERGY_CSV, META_TXT]
    d = _prepare(directory, names, force)
    steps = [int(s) for s in rec.steps]
    times = [float(t) for t in rec.times]
    written = []
    if rec.probes:
        cols = list(rec.probes)
        write_csv(d / PROBES_CSV, ["step", "time_s", *cols, "energy_J"],
                  [steps, times, *[rec.probes[c] for c in cols], rec.energy])
        written.append(d / PROBES_CSV)
    write_csv(d / ENERGY_CSV, ["step", "time_s", "energy_J"], [steps, times, rec.energy])
    written.append(d / ENERGY_CSV)
    meta = dict(rec.meta)
    meta.update(extra_meta or {})
    write_meta(d / META_TXT, meta)
    written.append(d / META_TXT)
    return written


def read_csv(path) -> dict:
    """Columns of a CSV written by this module, as float arrays (``step`` as int)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for k, name in enumerate(header):
        vals = [r[k] for r in body]
        out[name] = np.array(vals, dtype=int if name == "step" else float)
    return out


def write_triplets(path, M) -> None:
    """Sparse matrix as ``row col value`` lines (17 significant digits)."""
    C = sp.coo_matrix(M)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        fh.write(f"# shape {C.shape[0]} {C.shape[1]}\n")
        for k in order:
            fh.write(f"{C.row[k]} {C.col[k]} {C.data[k]:.17g}\n")


def read_triplets(path) -> sp.csr_matrix:
    lines = Path(path).read_text().splitlines()
    shape = tuple(int(a) for a in lines[0].split()[2:4])
    data = np.loadtxt(lines[1:], ndmin=2) if len(lines) > 1 else np.zeros((0, 3))
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)
