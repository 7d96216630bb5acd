"""Structured and imported 2D meshes, hierarchical refinement, periodic pairing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

Q1 = "Q1"
T3 = "T3"
NODES_PER_KIND = {Q1: 4, T3: 3}

# reference vertex coordinates (Q1 on [-1,1]^2, T3 on the unit triangle)
REF_VERTS = {
    Q1: np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]),
    T3: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
}

EDGE_TAGS = ("bottom", "right", "top", "left")


class MeshError(ValueError):
    """Raised for malformed meshes or mesh input."""


@dataclass(eq=False)
class Mesh:
    """Single-kind 2D mesh.

    ``conn`` is zero-based into ``coords``. ``edges`` maps a tag to an
    (m, 2) array of (element index, local edge). Local edge k joins local
    nodes k and k+1 (cyclic). ``parent_elem``/``parent_map`` are set when
    the mesh was produced by refinement: row e of ``parent_map`` is the 2x3
    affine map taking a parametric point of element e to the parametric
    point of its parent element.
    """

    coords: np.ndarray
    conn: np.ndarray
    kind: str = Q1
    phase: np.ndarray | None = None
    edges: dict[str, np.ndarray] = field(default_factory=dict)
    node_ids: np.ndarray | None = None
    elem_ids: np.ndarray | None = None
    parent: "Mesh | None" = None
    parent_elem: np.ndarray | None = None
    parent_map: np.ndarray | None = None
    grid: tuple | None = None  # (nx, ny, origin, lengths) for structured quads

    def __post_init__(self):
        self.coords = np.ascontiguousarray(self.coords, dtype=float)
        self.conn = np.ascontiguousarray(self.conn, dtype=np.int64)
        if self.kind not in NODES_PER_KIND:
            raise MeshError(f"unsupported element kind {self.kind!r}")
        if self.conn.ndim != 2 or self.conn.shape[1] != NODES_PER_KIND[self.kind]:
            raise MeshError("connectivity shape does not match element kind")
        if self.conn.size and (self.conn.min() < 0 or self.conn.max() >= len(self.coords)):
            raise MeshError("connectivity references a missing node")
        if self.phase is None:
            self.phase = np.zeros(len(self.conn), dtype=np.int64)
        if self.node_ids is None:
            self.node_ids = np.arange(1, len(self.coords) + 1)
        if self.elem_ids is None:
            self.elem_ids = np.arange(1, len(self.conn) + 1)
        for arr in (self.coords, self.conn, self.phase):
            arr.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def n_elems(self) -> int:
        return len(self.conn)

    def element_coords(self) -> np.ndarray:
        """Node coordinates per element, shape (ne, nen, 2)."""
        return self.coords[self.conn]

    def element_areas(self) -> np.ndarray:
        x = self.element_coords()
        xs, ys = x[..., 0], x[..., 1]
        # shoelace formula, positive for counter-clockwise ordering
        return 0.5 * np.sum(xs * np.roll(ys, -1, axis=1) - np.roll(xs, -1, axis=1) * ys, axis=1)

    def edge_nodes(self, tag: str) -> np.ndarray:
        """Node index pairs (m, 2) of the boundary edges carrying ``tag``."""
        if tag not in self.edges:
            raise MeshError(f"unknown edge tag {tag!r}")
        el, loc = self.edges[tag].T
        nen = self.conn.shape[1]
        return np.stack([self.conn[el, loc], self.conn[el, (loc + 1) % nen]], axis=1)

    def nodes_on(self, tag: str) -> np.ndarray:
        return np.unique(self.edge_nodes(tag))

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.coords.min(axis=0), self.coords.max(axis=0)


def build_structured_quads(nx: int, ny: int, origin=(0.0, 0.0), lengths=(1.0, 1.0)) -> Mesh:
    """Row-major nx-by-ny Q1 grid with edges tagged bottom/right/top/left."""
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise MeshError("element counts must be >= 1")
    lx, ly = float(lengths[0]), float(lengths[1])
    if lx <= 0 or ly <= 0:
        raise MeshError("lengths must be positive")
    x0, y0 = float(origin[0]), float(origin[1])
    xs = x0 + lx * np.arange(nx + 1) / nx
    ys = y0 + ly * np.arange(ny + 1) / ny
    X, Y = np.meshgrid(xs, ys)
    coords = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (j * (nx + 1) + i).ravel()
    conn = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    eid = np.arange(nx * ny).reshape(ny, nx)
    edges = {
        "bottom": np.column_stack([eid[0, :], np.zeros(nx, int)]),
        "right": np.column_stack([eid[:, -1], np.ones(ny, int)]),
        "top": np.column_stack([eid[-1, :], np.full(nx, 2)]),
        "left": np.column_stack([eid[:, 0], np.full(ny, 3)]),
    }
    return Mesh(coords, conn, Q1, edges=edges, grid=(nx, ny, (x0, y0), (lx, ly)))


def _canonical_order(coords: np.ndarray) -> np.ndarray:
    # row-major: sort by y then x
    return np.lexsort((coords[:, 0], coords[:, 1]))


def _refine_once(mesh: Mesh) -> Mesh:
    kind = mesh.kind
    nen = NODES_PER_KIND[kind]
    xe = mesh.element_coords()
    ne = mesh.n_elems
    # candidate child nodes: vertices, edge midpoints, (Q1) center
    mids = 0.5 * (xe + np.roll(xe, -1, axis=1))
    pts = [xe, mids]
    if kind == Q1:
        pts.append(0.25 * xe.sum(axis=1, keepdims=True))
    allpts = np.concatenate(pts, axis=1)  # (ne, k, 2)
    k = allpts.shape[1]
    flat = allpts.reshape(-1, 2)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    inv = inv.reshape(ne, k)
    order = _canonical_order(uniq)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    coords = uniq[order]
    loc = rank[inv]
    if kind == Q1:
        # local slots: 0..3 vertices, 4..7 midpoints of edges 0..3, 8 center
        children = [(0, 4, 8, 7), (4, 1, 5, 8), (8, 5, 2, 6), (7, 8, 6, 3)]
        # parametric offsets of each child centre in the parent, child scale 1/2
        offs = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
        maps = [np.array([[0.5, 0.0, ox], [0.0, 0.5, oy]]) for ox, oy in offs]
    else:
        children = [(0, 3, 5), (3, 1, 4), (5, 4, 2), (4, 5, 3)]
        maps = [
            np.array([[0.5, 0.0, 0.0], [0.0, 0.5, 0.0]]),
            np.array([[0.5, 0.0, 0.5], [0.0, 0.5, 0.0]]),
            np.array([[0.5, 0.0, 0.0], [0.0, 0.5, 0.5]]),
            np.array([[-0.5, 0.0, 0.5], [0.0, -0.5, 0.5]]),
        ]
    nc = len(children)
    conn = np.empty((ne, nc, nen), dtype=np.int64)
    for c, slots in enumerate(children):
        conn[:, c, :] = loc[:, list(slots)]
    conn = conn.reshape(-1, nen)
    parent_elem = np.repeat(np.arange(ne), nc)
    parent_map = np.tile(np.stack(maps), (ne, 1, 1))
    phase = np.repeat(mesh.phase, nc)
    # canonical element order by centroid (row-major)
    cen = coords[conn].mean(axis=1)
    eorder = np.lexsort((cen[:, 0], cen[:, 1]))
    erank = np.empty_like(eorder)
    erank[eorder] = np.arange(len(eorder))
    conn, parent_elem, parent_map, phase = conn[eorder], parent_elem[eorder], parent_map[eorder], phase[eorder]
    # each parent boundary edge k splits into two child edges
    if kind == Q1:
        edge_children = {0: [(0, 0), (1, 0)], 1: [(1, 1), (2, 1)], 2: [(2, 2), (3, 2)], 3: [(3, 3), (0, 3)]}
    else:
        edge_children = {0: [(0, 0), (1, 0)], 1: [(1, 1), (2, 1)], 2: [(2, 2), (0, 2)]}
    edges = {}
    for tag, arr in mesh.edges.items():
        out = []
        for el, le in arr:
            for c, cl in edge_children[int(le)]:
                out.append((erank[el * nc + c], cl))
        out = np.array(out, dtype=np.int64).reshape(-1, 2)
        edges[tag] = out[np.lexsort((out[:, 1], out[:, 0]))]
    grid = None
    if mesh.grid is not None:
        nx, ny, o, l = mesh.grid
        grid = (2 * nx, 2 * ny, o, l)
    return Mesh(coords, conn, kind, phase=phase, edges=edges, parent=mesh,
                parent_elem=parent_elem, parent_map=parent_map, grid=grid)


def refine_hierarchical(mesh: Mesh, levels: int = 1) -> Mesh:
    """Split every element into 4 congruent children, ``levels`` times."""
    if mesh.kind not in NODES_PER_KIND:
        raise MeshError(f"unsupported element kind {mesh.kind!r}")
    if levels < 0:
        raise MeshError("levels must be >= 0")
    out = mesh
    for _ in range(int(levels)):
        out = _refine_once(out)
    return out


@dataclass(frozen=True)
class NestedMap:
    """Embedding of a coarse mesh into one of its hierarchical refinements.

    ``coarse_to_fine[i]`` is the fine node coinciding with coarse node i.
    ``fine_elem[j]`` / ``fine_local[j]`` give the coarse element containing
    fine node j and the parametric coordinates there.
    """

    coarse_to_fine: np.ndarray
    fine_elem: np.ndarray
    fine_local: np.ndarray


def _node_key(coords: np.ndarray, tol: float) -> list:
    return [tuple(r) for r in np.round(coords / tol).astype(np.int64)]


def _grid_nested_map(coarse: Mesh, fine: Mesh) -> NestedMap | None:
    if coarse.grid is None or fine.grid is None:
        return None
    cnx, cny, co, cl = coarse.grid
    fnx, fny, fo, fl = fine.grid
    if co != fo or cl != fl or fnx % cnx or fny % cny:
        return None
    rx, ry = fnx // cnx, fny // cny
    j, i = np.divmod(np.arange(fine.n_nodes), fnx + 1)
    ci = np.minimum(i // rx, cnx - 1)
    cj = np.minimum(j // ry, cny - 1)
    xi = 2.0 * (i - ci * rx) / rx - 1.0
    eta = 2.0 * (j - cj * ry) / ry - 1.0
    cj_n, ci_n = np.divmod(np.arange(coarse.n_nodes), cnx + 1)
    c2f = cj_n * ry * (fnx + 1) + ci_n * rx
    return NestedMap(c2f, cj * cnx + ci, np.column_stack([xi, eta]))


def nested_map(coarse: Mesh, fine: Mesh) -> NestedMap:
    """Build the coarse/fine embedding.

    Structured grids over the same rectangle with integer refinement
    ratios are mapped directly; otherwise the fine mesh's parent chain is
    walked back to ``coarse``.
    """
    direct = _grid_nested_map(coarse, fine)
    if direct is not None:
        return direct
    # compose ancestor element and affine maps back to ``coarse``
    m = fine
    elem = np.arange(fine.n_elems)
    amap = np.tile(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), (fine.n_elems, 1, 1))
    while m is not coarse:
        if m.parent is None:
            raise MeshError("meshes are not nested: coarse mesh is not an ancestor")
        pm = m.parent_map[elem]
        lin = np.einsum("eij,ejk->eik", pm[:, :, :2], amap[:, :, :2])
        off = np.einsum("eij,ej->ei", pm[:, :, :2], amap[:, :, 2]) + pm[:, :, 2]
        amap = np.concatenate([lin, off[:, :, None]], axis=2)
        elem = m.parent_elem[elem]
        m = m.parent
    ref = REF_VERTS[fine.kind]
    nen = ref.shape[0]
    fine_elem = np.empty(fine.n_nodes, dtype=np.int64)
    fine_local = np.empty((fine.n_nodes, 2))
    # first occurrence of each node over (element, local vertex)
    nodes = fine.conn.ravel()
    _, first = np.unique(nodes, return_index=True)
    e_of = first // nen
    v_of = first % nen
    p = ref[v_of]
    A = amap[e_of]
    fine_elem[:] = elem[e_of]
    fine_local[:] = np.einsum("nij,nj->ni", A[:, :, :2], p) + A[:, :, 2]
    span = float(np.ptp(fine.coords, axis=0).max()) or 1.0
    tol = 1e-10 * span
    lookup = {k: i for i, k in enumerate(_node_key(fine.coords, tol))}
    c2f = np.empty(coarse.n_nodes, dtype=np.int64)
    for i, k in enumerate(_node_key(coarse.coords, tol)):
        if k not in lookup:
            raise MeshError(f"coarse node {i} has no coinciding fine node")
        c2f[i] = lookup[k]
    return NestedMap(c2f, fine_elem, fine_local)


@dataclass(frozen=True)
class PeriodicPairing:
    """Periodic node pairs of a square cell.

    ``pairs`` rows are (slave, master, direction) with direction 0 for a
    shift (d,0), 1 for (0,d), 2 for (d,d). Corner constraints are the last
    three rows.
    """

    pairs: np.ndarray
    corner_group: tuple[int, int, int, int]
    delta: float

    @property
    def n_constraints(self) -> int:
        return len(self.pairs)


def build_periodic_pairing(mesh: Mesh, delta: float) -> PeriodicPairing:
    """Pair right/top boundary nodes onto left/bottom masters, corners 3-to-1."""
    tol = 1e-10 * delta
    lo, hi = mesh.bbox()
    if abs((hi[0] - lo[0]) - delta) > tol or abs((hi[1] - lo[1]) - delta) > tol:
        raise MeshError("mesh does not occupy a delta-by-delta square")
    x, y = mesh.coords[:, 0], mesh.coords[:, 1]
    on_l, on_r = np.abs(x - lo[0]) <= tol, np.abs(x - hi[0]) <= tol
    on_b, on_t = np.abs(y - lo[1]) <= tol, np.abs(y - hi[1]) <= tol
    corner = (on_l | on_r) & (on_b | on_t)

    def match(masters, slaves, coord, label):
        m = masters[np.argsort(coord[masters], kind="stable")]
        s = slaves[np.argsort(coord[slaves], kind="stable")]
        if len(m) != len(s):
            extra = (s if len(s) > len(m) else m)[min(len(m), len(s))]
            raise MeshError(f"{label} boundaries not congruent: unmatched node {extra}")
        bad = np.nonzero(np.abs(coord[m] - coord[s]) > tol)[0]
        if bad.size:
            raise MeshError(f"{label} boundaries not congruent: unmatched node {s[bad[0]]}")
        return s, m

    idx = np.arange(mesh.n_nodes)
    s_x, m_x = match(idx[on_l & ~corner], idx[on_r & ~corner], y, "left/right")
    s_y, m_y = match(idx[on_b & ~corner], idx[on_t & ~corner], x, "bottom/top")

    def one(mask):
        hits = idx[mask]
        if len(hits) != 1:
            raise MeshError("cell corner node missing or duplicated")
        return int(hits[0])

    c_bl, c_br = one(on_l & on_b), one(on_r & on_b)
    c_tl, c_tr = one(on_l & on_t), one(on_r & on_t)
    rows = [np.column_stack([s_x, m_x, np.zeros_like(s_x)]),
            np.column_stack([s_y, m_y, np.ones_like(s_y)]),
            np.array([[c_br, c_bl, 0], [c_tl, c_bl, 1], [c_tr, c_bl, 2]])]
    pairs = np.concatenate(rows).astype(np.int64)
    return PeriodicPairing(pairs, (c_bl, c_br, c_tl, c_tr), float(delta))


def import_two_phase_mesh(text: str | TextIO | Iterable[str]) -> Mesh:
    """Parse the NODE/ELEM/EDGE line format."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    nodes: dict[int, tuple[float, float]] = {}
    elems: list[tuple[int, str, list[int], int, int]] = []
    edges: list[tuple[int, int, str, int]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "NODE":
                if len(tok) != 4:
                    raise ValueError("NODE needs id x y")
                nid = int(tok[1])
                if nid in nodes:
                    raise MeshError(f"line {lineno}: duplicate node id {nid}")
                nodes[nid] = (float(tok[2]), float(tok[3]))
            elif tok[0] == "ELEM":
                kind = tok[2]
                if kind not in NODES_PER_KIND:
                    raise ValueError(f"unknown element kind {kind}")
                n = NODES_PER_KIND[kind]
                if len(tok) != 4 + n:
                    raise ValueError(f"ELEM {kind} needs {n} nodes and a phase")
                elems.append((int(tok[1]), kind, [int(t) for t in tok[3:3 + n]], int(tok[3 + n]), lineno))
            elif tok[0] == "EDGE":
                if len(tok) != 4:
                    raise ValueError("EDGE needs elem local-edge tag")
                edges.append((int(tok[1]), int(tok[2]), tok[3], lineno))
            else:
                raise ValueError(f"unknown record {tok[0]}")
        except MeshError:
            raise
        except (ValueError, IndexError) as exc:
            raise MeshError(f"line {lineno}: {exc}") from None
    if not elems:
        raise MeshError("no elements")
    kinds = {e[1] for e in elems}
    if len(kinds) != 1:
        raise MeshError("mixed element kinds are not supported")
    kind = kinds.pop()
    node_ids = np.array(sorted(nodes))
    pos = {nid: i for i, nid in enumerate(node_ids)}
    coords = np.array([nodes[n] for n in node_ids])
    conn, phase, eids = [], [], []
    epos = {}
    for eid, _, ns, ph, lineno in elems:
        missing = [n for n in ns if n not in pos]
        if missing:
            raise MeshError(f"line {lineno}: element {eid} references missing node {missing[0]}")
        if eid in epos:
            raise MeshError(f"line {lineno}: duplicate element id {eid}")
        epos[eid] = len(eids)
        conn.append([pos[n] for n in ns])
        phase.append(ph)
        eids.append(eid)
    edict: dict[str, list] = {}
    nen = NODES_PER_KIND[kind]
    for eid, le, tag, lineno in edges:
        if eid not in epos or not 0 <= le < nen:
            raise MeshError(f"line {lineno}: invalid edge reference")
        edict.setdefault(tag, []).append((epos[eid], le))
    mesh = Mesh(coords, np.array(conn), kind, phase=np.array(phase),
                edges={t: np.array(v, dtype=np.int64) for t, v in edict.items()},
                node_ids=node_ids, elem_ids=np.array(eids))
    bad = np.nonzero(mesh.element_areas() <= 0)[0]
    if bad.size:
        raise MeshError(f"element {mesh.elem_ids[bad[0]]} has non-positive area")
    return mesh


def export_mesh(mesh: Mesh) -> str:
    """Serialize to the NODE/ELEM/EDGE line format (round-trips exactly)."""
    out = []
    for nid, (x, y) in zip(mesh.node_ids, mesh.coords):
        out.append(f"NODE {nid} {float(x)!r} {float(y)!r}")
    for eid, row, ph in zip(mesh.elem_ids, mesh.conn, mesh.phase):
        ns = " ".join(str(mesh.node_ids[n]) for n in row)
        out.append(f"ELEM {eid} {mesh.kind} {ns} {ph}")
    for tag in sorted(mesh.edges):
        for el, le in mesh.edges[tag]:
            out.append(f"EDGE {mesh.elem_ids[el]} {le} {tag}")
    return "\n".join(out) + "\n"
