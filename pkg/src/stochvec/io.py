"""CSV/JSON serialization of grid fields and run artifacts.

One CSV per field: header ``x1,...,xd,f1,...,fm``, rows in row-major node
order, '.' decimals, LF line endings, UTF-8. A JSON sidecar carries the grid
metadata. Floats are written with repr (shortest round-trip), so identical
inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import os
from typing import Optional

import numpy as np

from .errors import InvalidConfig
from .fields import GridField

__all__ = ["write_field_csv", "read_field_csv", "write_json", "field_sidecar_path"]


def field_sidecar_path(csv_path: str) -> str:
    base, _ = os.path.splitext(csv_path)
    return base + ".json"


def write_field_csv(field: GridField, csv_path: str, seed: Optional[int] = None):
    d = field.dim
    m = field.ncomp
    header = ",".join([f"x{i+1}" for i in range(d)] + [f"f{a+1}" for a in range(m)])
    ax = field.spec.axis()
    flat = field.values.reshape(m, -1)
    lines = [header]
    for row, idx in enumerate(np.ndindex(*(field.n,) * d)):
        coords = [repr(float(ax[i])) for i in idx]
        vals = [repr(float(flat[a, row])) for a in range(m)]
        lines.append(",".join(coords + vals))
    with open(csv_path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = {"dim": d, "L": field.extent, "n": field.n, "t": field.t,
               "name": field.name, "seed": seed}
    write_json(sidecar, field_sidecar_path(csv_path))


def read_field_csv(csv_path: str) -> GridField:
    side_path = field_sidecar_path(csv_path)
    try:
        with open(side_path) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise InvalidConfig(f"missing sidecar {side_path}")
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    d, n = int(meta["dim"]), int(meta["n"])
    m = data.shape[1] - d
    if data.shape[0] != n ** d or m < 1:
        raise InvalidConfig(f"CSV {csv_path} does not match its sidecar grid")
    vals = data[:, d:].T.reshape((m,) + (n,) * d)
    return GridField(vals, float(meta["L"]), t=float(meta.get("t") or 0.0),
                     name=meta.get("name") or "")


def _jsonable(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(obj, path: str):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
