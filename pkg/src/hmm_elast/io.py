"""CSV tables and legacy-VTK field output."""

from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np

from .mesh import Q1, Mesh


def fmt(v) -> str:
    """Full-precision text for a table cell (17 significant digits for floats)."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(header, rows))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def write_vtk(path, mesh: Mesh, point_vectors: dict | None = None, point_scalars: dict | None = None,
              cell_scalars: dict | None = None, title: str = "hmm-elast") -> None:
    """Legacy ASCII unstructured grid (VTK_QUAD = 9, VTK_TRIANGLE = 5)."""
    n, ne = mesh.n_nodes, mesh.n_elems
    nen = mesh.conn.shape[1]
    ctype = 9 if mesh.kind == Q1 else 5
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    out += [f"{fmt(x)} {fmt(y)} 0" for x, y in mesh.coords]
    out.append(f"CELLS {ne} {ne * (nen + 1)}")
    out += [" ".join([str(nen)] + [str(int(i)) for i in row]) for row in mesh.conn]
    out.append(f"CELL_TYPES {ne}")
    out += [str(ctype)] * ne
    if point_vectors or point_scalars:
        out.append(f"POINT_DATA {n}")
        for name, v in (point_vectors or {}).items():
            v = np.asarray(v, dtype=float).reshape(n, -1)
            out.append(f"VECTORS {name} double")
            out += [f"{fmt(a)} {fmt(b)} 0" for a, b in v[:, :2]]
        for name, s in (point_scalars or {}).items():
            out += _scalars(name, s, n)
    if cell_scalars:
        out.append(f"CELL_DATA {ne}")
        for name, s in cell_scalars.items():
            out += _scalars(name, s, ne)
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def _scalars(name: str, s, count: int) -> list[str]:
    s = np.asarray(s, dtype=float).ravel()
    if len(s) != count:
        raise ValueError(f"field {name!r} has {len(s)} values, expected {count}")
    return [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [fmt(v) for v in s]


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
