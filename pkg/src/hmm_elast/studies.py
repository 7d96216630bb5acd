"""Study drivers shared by the command line and the acceptance suite."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .benchmarks import Benchmark
from .homogenize import COMPONENTS, homogenized_tensor_unit_strain
from .macro import TENSOR, TRANSFER, MacroSolution, solve_macro
from .mesh import _grid_nested_map
from .micro import MicroCell
from .postprocess import (convergence_order, element_center_stresses, error_between, error_overlay,
                          local_order_map, norm, optimal_refinement_schedule, spr_recover, von_mises)

log = logging.getLogger(__name__)

ERROR_KINDS = ("L2", "H1", "energy", "max")


@dataclass
class StudyOutput:
    """One study: a CSV table, scalar metrics and report lines."""

    header: list
    rows: list
    metrics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    extra_tables: dict = field(default_factory=dict)  # file name -> (header, rows)
    fields: dict = field(default_factory=dict)  # vtk name -> (mesh, point vectors, point scalars, cell scalars)


def pmap(fn, items, threads: int = 1) -> list:
    """Ordered map, optionally on a thread pool (results independent of ``threads``)."""
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def compare(coarse: MacroSolution, ref: MacroSolution, kinds=ERROR_KINDS, scale: float = 1.0) -> dict:
    """Errors against a reference on the same domain; nested grids use the
    reference's stiffness for the energy norm, otherwise an overlay gives L2/H1."""
    nm = _grid_nested_map(coarse.mesh, ref.mesh)
    if nm is not None or coarse.mesh.grid is None:
        return error_between(coarse, ref, nm, kinds, scale)
    out = error_overlay(coarse, ref, [k for k in kinds if k in ("L2", "H1")], scale)
    return {k: out.get(k, float("nan")) for k in kinds}


def orders(sizes, errors: Sequence[dict], kinds=ERROR_KINDS) -> dict:
    out = {}
    for k in kinds:
        e = [row[k] for row in errors]
        if len(e) >= 3 and all(np.isfinite(e)) and min(e) > 0:
            out[k] = convergence_order(sizes, e, k)
    return out


# ------------------------------------------------------------------ studies

def solve_one(b: Benchmark, nx: int, ny: int, L: int, mode: str = TENSOR, threads: int = 1) -> MacroSolution:
    return solve_macro(b.problem(nx, ny, L, mode, threads=threads))


def macro_convergence(b: Benchmark, sizes: Sequence[tuple], L: int, ref_size: tuple, mode: str = TENSOR,
                      scale: float = 1.0, threads: int = 1, solutions: dict | None = None):
    """Errors of a macro schedule at fixed micro resolution against a fine FE-HMM reference."""
    sols = solutions if solutions is not None else {}
    for s in list(sizes) + [ref_size]:
        if s not in sols:
            sols[s] = solve_one(b, s[0], s[1], L, mode, threads)
    ref = sols[ref_size]
    errs = [compare(sols[s], ref, scale=scale) for s in sizes]
    H = [b.lengths[0] / s[0] for s in sizes]
    return H, errs, orders(H, errs), sols


def micro_convergence(b: Benchmark, size: tuple, Ls: Sequence[int], L_ref: int, mode: str = TENSOR,
                      scale: float = 1.0, threads: int = 1):
    """Errors of FE-HMM solutions on a fixed macro mesh as the micro mesh is refined."""
    sols = {L: solve_one(b, size[0], size[1], L, mode, threads) for L in list(Ls) + [L_ref]}
    ref = sols[L_ref]
    errs = [compare(sols[L], ref, scale=scale) for L in Ls]
    h = [1.0 / L for L in Ls]
    return h, errs, orders(h, errs), sols


def tensor_convergence(b: Benchmark, Ls: Sequence[int], L_ref: int, center=None, threads: int = 1):
    """A0h components against micro resolution at one sampling point."""
    if center is None:
        center = tuple(np.asarray(b.origin) + 0.5 * np.asarray(b.lengths))
    delta = b.delta or b.field.eps
    at = (0.0, 0.0) if b.field.uniform else center

    def one(L):
        return homogenized_tensor_unit_strain(MicroCell(delta, b.field, at, resolution=L)).A0h

    all_L = list(Ls) + [L_ref]
    tensors = dict(zip(all_L, pmap(one, all_L, threads)))
    ref = tensors[L_ref]
    errs = {name: [abs(tensors[L][idx] - ref[idx]) for L in Ls] for name, idx in COMPONENTS.items()}
    h = [1.0 / L for L in Ls]
    ords = {}
    for name, e in errs.items():
        if len(e) >= 3 and min(e) > 0:
            ords[name] = convergence_order(h, e, name)
    return tensors, errs, ords


def spr_study(b: Benchmark, sizes: Sequence[tuple], L: int, ref_size: tuple, mode: str = TENSOR,
              threads: int = 1, solutions: dict | None = None):
    """Global energy errors and per-node SPR stress orders over a nested hierarchy."""
    sols = solutions if solutions is not None else {}
    for s in list(sizes) + [ref_size]:
        if s not in sols:
            sols[s] = solve_one(b, s[0], s[1], L, mode, threads)
    ref = sols[ref_size]
    A = np.asarray(ref.tensors[0, 0]) if ref.tensors is not None else None
    if A is None or not b.field.uniform:
        raise ValueError("SPR study needs a uniformly periodic field (one homogenized tensor)")
    H = [b.lengths[0] / s[0] for s in sizes]
    energy = [compare(sols[s], ref, kinds=("energy",))["energy"] for s in sizes]
    om = local_order_map([sols[s] for s in sizes], ref, A, sizes=H)
    return H, energy, om, sols


def refine_opt(b: Benchmark, h1_counts, l2_counts, plateau_counts, plateau_L: int, ref_size: tuple,
               exact_tensor=None, L_exact: int | None = None, threads: int = 1):
    """Errors of uniform micro-macro refinement schedules against a homogenized reference.

    The reference is standard FEM on ``ref_size`` with the exact homogenized
    tensor, or with A0h computed at ``L_exact`` when no closed form exists.
    """
    if exact_tensor is None:
        if not b.field.uniform:
            raise ValueError("refinement study needs a uniformly periodic field")
        cell = MicroCell(b.delta or b.field.eps, b.field, (0.0, 0.0), resolution=L_exact)
        exact_tensor = homogenized_tensor_unit_strain(cell).A0h
    ref = b.singlescale(b.mesh(*ref_size), exact_tensor)
    ref.K = None  # only L2/H1 are measured here
    out = {}
    schedules = {"H1": optimal_refinement_schedule("H1", h1_counts),
                 "L2": optimal_refinement_schedule("L2", l2_counts),
                 "plateau": [(M, plateau_L) for M in plateau_counts]}
    for name, sched in schedules.items():
        rows = []
        for M, L in sched:
            sol = solve_one(b, M, M, L, TENSOR, threads)
            e = error_overlay(sol, ref, ("L2", "H1"))
            rows.append((M, L, e["L2"], e["H1"]))
            del sol
        out[name] = rows
    return out


def compare_fe2(b: Benchmark, sizes: Sequence[tuple], Ls: Sequence[int], threads: int = 1):
    """Transfer-mode FE-HMM against tensor-mode (FE2) solutions."""
    rows = []
    for s in sizes:
        for L in Ls:
            a = solve_one(b, s[0], s[1], L, TRANSFER, threads)
            t = solve_one(b, s[0], s[1], L, TENSOR, threads)
            ma, mt = norm(a.mesh, a.D, "max"), norm(t.mesh, t.D, "max")
            ea, et = a.energy(), t.energy()
            rows.append((s, L, ma, mt, (ma - mt) / mt, ea, et, (ea - et) / et,
                         float(np.abs(a.D - t.D).max() / np.abs(t.D).max())))
    return rows


# --------------------------------------------------------- config-driven

def _tag(size) -> str:
    return f"{size[0]}x{size[1]}"


def run_study(config, kind: str) -> StudyOutput:
    b = config.build_benchmark()
    fn = STUDIES.get(kind)
    if fn is None:
        raise ValueError(f"unknown study kind {kind!r}; choose from {sorted(STUDIES)}")
    return fn(config, b)


def _solve(config, b) -> StudyOutput:
    nx, ny = config.macro[0]
    L = config.micro[0] if config.micro else 1
    sol = solve_one(b, nx, ny, L, config.mode, config.threads)
    m = sol.mesh
    rows = [(int(m.node_ids[i]), m.coords[i, 0], m.coords[i, 1], sol.u[i, 0], sol.u[i, 1])
            for i in range(m.n_nodes)]
    metrics = {"max": norm(m, sol.D, "max"), "energy": sol.energy(),
               "L2": norm(m, sol.D, "L2", thickness=sol.thickness),
               "H1": norm(m, sol.D, "H1", config.h1_scale, thickness=sol.thickness)}
    out = StudyOutput(["node", "x", "y", "ux", "uy"], rows, metrics)
    out.notes.append(f"{b.name} {_tag((nx, ny))} macro, L={L}, mode={config.mode}")
    if config.vtk and sol.tensors is not None:
        nu = b.params.get("nu", 0.0)
        sig_e = element_center_stresses(sol)
        sig_n = spr_recover(m, sig_e)
        out.fields["fields_solve.vtk"] = (
            m, {"displacement": sol.u},
            {"sxx": sig_n[:, 0], "syy": sig_n[:, 1], "sxy": sig_n[:, 2], "von_mises": von_mises(sig_n, nu)},
            {"von_mises": von_mises(sig_e, nu)})
    return out


def _error_table(label, sizes, errs, ords, tags):
    rows = [(h, *(e[k] for k in ERROR_KINDS)) for h, e in zip(sizes, errs)]
    metrics = {}
    for tag, e in zip(tags, errs):
        for k in ERROR_KINDS:
            metrics[f"{k}@{tag}"] = e[k]
    notes = []
    for k, r in ords.items():
        metrics[f"order_{k}"] = r.order
        notes.append(f"order {k}: {r.order:.4f} (pairwise {', '.join(f'{p:.3f}' for p in r.pairwise)})")
    return StudyOutput([label, *ERROR_KINDS], rows, metrics, notes)


def _macro_conv(config, b) -> StudyOutput:
    L = config.micro[0] if config.micro else 1
    H, errs, ords, _ = macro_convergence(b, config.macro, L, config.reference_macro, config.mode,
                                         config.h1_scale, config.threads)
    out = _error_table("H", H, errs, ords, [_tag(s) for s in config.macro])
    out.notes.insert(0, f"reference {_tag(config.reference_macro)} macro, L={L}")
    return out


def _micro_conv(config, b) -> StudyOutput:
    h, errs, ords, _ = micro_convergence(b, config.macro[0], config.micro, config.reference_micro,
                                         config.mode, config.h1_scale, config.threads)
    out = _error_table("hOverEps", h, errs, ords, [str(L) for L in config.micro])
    out.notes.insert(0, f"macro {_tag(config.macro[0])}, reference L={config.reference_micro}")
    return out


def _tensor_conv(config, b) -> StudyOutput:
    tensors, errs, ords = tensor_convergence(b, config.micro, config.reference_micro, threads=config.threads)
    names = list(COMPONENTS)
    rows = []
    for L in list(config.micro) + [config.reference_micro]:
        A = tensors[L]
        rows.append((L, *(A[COMPONENTS[n]] for n in names), *(abs(A[COMPONENTS[n]] - tensors[config.reference_micro][COMPONENTS[n]]) for n in names)))
    metrics = {f"{n}@{L}": tensors[L][COMPONENTS[n]] for L in tensors for n in names}
    notes = [f"reference L={config.reference_micro}"]
    for n, r in ords.items():
        metrics[f"order_{n}"] = r.order
        notes.append(f"order {n}: {r.order:.4f} (pairwise {', '.join(f'{p:.3f}' for p in r.pairwise)})")
    return StudyOutput(["L", *names, *(f"err_{n}" for n in names)], rows, metrics, notes)


def _spr(config, b) -> StudyOutput:
    L = config.micro[0] if config.micro else 1
    H, energy, om, _ = spr_study(b, config.macro, L, config.reference_macro, config.mode, config.threads)
    r = convergence_order(H, energy, "energy")
    rows = [(h, e) for h, e in zip(H, energy)]
    metrics = {"order_energy": r.order}
    notes = [f"global energy order {r.order:.4f} (pairwise {', '.join(f'{p:.3f}' for p in r.pairwise)})"]
    x, y = om.coords.T
    H0 = H[0]
    lo, hi = b.origin[0] + 2 * H0, b.origin[0] + b.lengths[0] - 2 * H0
    interior = (x > lo + 1e-9 * H0) & (x < hi - 1e-9 * H0)
    frac = float(np.mean(om.order[interior] >= 1.8)) if interior.any() else float("nan")
    metrics["interior_fraction_ge_1.8"] = frac
    notes.append(f"interior nodes with order >= 1.8: {frac:.3f} of {int(interior.sum())}")
    if config.spr_node is not None:
        d = np.linalg.norm(om.coords - np.asarray(config.spr_node), axis=1)
        i = int(np.argmin(d))
        metrics["node_order"] = float(om.order[i])
        notes.append(f"node {tuple(om.coords[i])}: order {om.order[i]:.4f}")
    coarse = om.coords
    order_rows = [(int(i + 1), coarse[i, 0], coarse[i, 1], om.order[i], *om.component_order[i])
                  for i in range(len(coarse))]
    out = StudyOutput(["H", "energy"], rows, metrics, notes)
    out.extra_tables["order_map.csv"] = (["node", "x", "y", "order", "order_sxx", "order_syy", "order_sxy"],
                                         order_rows)
    if config.vtk:
        m0 = b.mesh(*config.macro[0])
        out.fields["fields_spr.vtk"] = (m0, {}, {"order": om.order}, {})
    return out


def _refine_opt(config, b) -> StudyOutput:
    res = refine_opt(b, config.h1_counts, config.l2_counts, config.plateau_counts, config.plateau_micro,
                     config.reference_macro, b.exact_tensor, config.reference_micro, config.threads)
    rows, metrics, notes = [], {}, [f"reference: standard FEM on {_tag(config.reference_macro)}"]
    for name, sched in res.items():
        for M, L, l2, h1 in sched:
            rows.append((name, 1.0 / M, M, L, l2, h1))
    for name, norm_id in (("H1", "H1"), ("L2", "L2")):
        sched = res[name]
        col = 3 if norm_id == "H1" else 2
        r = convergence_order([1.0 / s[0] for s in sched], [s[col] for s in sched], norm_id)
        metrics[f"slope_{name}"] = r.order
        notes.append(f"{name} schedule, {norm_id} error slope {r.order:.4f}")
    h1 = [s[3] for s in res["H1"]]
    metrics["H1_monotone"] = float(all(b2 < a for a, b2 in zip(h1, h1[1:])))
    pl = [s[3] for s in res["plateau"]]
    dec = [(a - b2) / a for a, b2 in zip(pl, pl[1:])]
    metrics["plateau_last_decrease"] = dec[-1] if dec else float("nan")
    notes.append("fixed-L H1 decrease per step: " + ", ".join(f"{d:.3f}" for d in dec))
    return StudyOutput(["schedule", "H", "M", "L", "L2", "H1"], rows, metrics, notes)


def _compare_fe2(config, b) -> StudyOutput:
    rows = compare_fe2(b, config.macro, config.micro, config.threads)
    out = StudyOutput(["macro", "L", "max_transfer", "max_tensor", "dev_max", "energy_transfer",
                       "energy_tensor", "dev_energy", "dev_nodal"],
                      [(_tag(r[0]), *r[1:]) for r in rows])
    dev = max(max(abs(r[4]), abs(r[7])) for r in rows)
    out.metrics["max_deviation"] = dev
    out.notes.append(f"largest relative deviation {dev:.3e}")
    return out


STUDIES = {
    "solve": _solve,
    "macro-conv": _macro_conv,
    "micro-conv": _micro_conv,
    "tensor-conv": _tensor_conv,
    "spr": _spr,
    "refine-opt": _refine_opt,
    "compare-fe2": _compare_fe2,
}
