"""Study configuration: a sectioned ``key = value`` file.

Example::

    [study]
    benchmark = beam-inclusion
    mode = transfer

    [mesh]
    macro = 50x10, 100x20, 200x40
    micro = 32
    reference_macro = 800x160

    [check]
    order_L2 = 2.0 +- 0.15
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .benchmarks import BEAM, BENCHMARKS, DIRECTIONS, IMPORTED, PLATE, PLATE_NONUNIFORM, Benchmark
from . import benchmarks as bm
from .macro import TENSOR, TRANSFER


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Check:
    """Expected value with an absolute tolerance, or a closed interval."""

    lo: float
    hi: float
    expected: float | None = None
    tol: float | None = None

    def passes(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def describe(self) -> str:
        if self.expected is not None:
            return f"{self.expected:g} +- {self.tol:g}"
        return f"[{self.lo:g}, {self.hi:g}]"


# benchmark defaults; stated benchmark parameters are the defaults
_DEFAULTS = {
    BEAM: dict(macro=[(50, 10), (100, 20), (200, 40), (400, 80)], micro=[32], reference_macro=(800, 160),
               reference_micro=256, eps=5.0, h1_scale=1e-6, mode=TRANSFER),
    IMPORTED: dict(macro=[(50, 10)], micro=[1], reference_macro=(800, 160), reference_micro=None,
                   eps=None, h1_scale=1e-6, mode=TRANSFER),
    PLATE: dict(macro=[(20, 20), (40, 40)], micro=[20, 40, 80, 160], reference_macro=(1152, 1152),
                reference_micro=320, eps=0.025, h1_scale=1.0, mode=TENSOR),
    PLATE_NONUNIFORM: dict(macro=[(20, 20), (40, 40)], micro=[8, 16, 32], reference_macro=(320, 320),
                           reference_micro=64, eps=0.005, h1_scale=1.0, mode=TRANSFER),
}


@dataclass
class StudyConfig:
    benchmark: str = PLATE
    mode: str = TENSOR
    macro: list = field(default_factory=list)
    micro: list = field(default_factory=list)
    reference_macro: tuple | None = None
    reference_micro: int | None = None
    eps: float | None = None
    delta: float | None = None
    material: dict = field(default_factory=dict)
    h1_scale: float = 1.0
    out: str = "results"
    load: float | None = None
    load_direction: str = "-y"
    thickness: float | None = None
    micro_mesh: str | None = None
    threads: int = 1
    vtk: bool = False
    h1_counts: list = field(default_factory=lambda: [16, 64, 144, 256, 576])
    l2_counts: list = field(default_factory=lambda: [9, 18, 36, 72, 144])
    plateau_micro: int = 4
    plateau_counts: list = field(default_factory=lambda: [16, 32, 64, 128, 256])
    spr_node: tuple | None = None
    checks: dict = field(default_factory=dict)
    source: str | None = None

    def validate(self) -> "StudyConfig":
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(f"study.benchmark: unknown benchmark {self.benchmark!r}")
        if self.mode not in (TRANSFER, TENSOR):
            raise ConfigError(f"study.mode: must be {TRANSFER!r} or {TENSOR!r}")
        if self.load_direction not in DIRECTIONS:
            raise ConfigError(f"load.direction: must be one of {sorted(DIRECTIONS)}")
        _increasing("mesh.macro", [m[0] * m[1] for m in self.macro])
        _increasing("mesh.micro", self.micro)
        for key in ("h1_counts", "l2_counts", "plateau_counts"):
            _increasing(f"refine.{key}", getattr(self, key))
        if not self.macro:
            raise ConfigError("mesh.macro: at least one macro mesh is required")
        if not self.micro and self.benchmark != IMPORTED:
            raise ConfigError("mesh.micro: at least one micro resolution is required")
        if self.benchmark == IMPORTED and not self.micro_mesh:
            raise ConfigError("mesh.micro_mesh: required for the imported-rve benchmark")
        if self.threads < 1:
            raise ConfigError("study.threads: must be >= 1")
        return self

    def build_benchmark(self) -> Benchmark:
        m = self.material
        common = dict(direction=self.load_direction)
        if self.load is not None:
            common["load"] = self.load
        if self.thickness is not None:
            common["thickness"] = self.thickness
        if self.benchmark == BEAM:
            b = bm.beam(eps=self.eps, delta=self.delta, **_pick(m, "E_inclusion", "E_matrix", "nu", "side_fraction"),
                        **common)
        elif self.benchmark == PLATE:
            b = bm.plate_laminate(eps=self.eps, delta=self.delta, **_pick(m, "c12", "c33", "coords"), **common)
        elif self.benchmark == PLATE_NONUNIFORM:
            b = bm.plate_nonuniform(eps=self.eps, delta=self.delta, **_pick(m, "nu"), **common)
        else:
            from .mesh import import_two_phase_mesh

            with open(self.micro_mesh) as fh:
                mm = import_two_phase_mesh(fh)
            b = bm.imported_rve(mm, **_pick(m, "E_inclusion", "E_matrix", "nu"), **common)
        return b


def _pick(d: dict, *keys) -> dict:
    return {k: d[k] for k in keys if k in d}


def _increasing(path: str, values) -> None:
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{path}: schedule must be strictly increasing")


def _mesh_size(path: str, text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if m:
        return int(m.group(1)), int(m.group(2))
    if text.strip().isdigit():
        n = int(text)
        return n, n
    raise ConfigError(f"{path}: expected NXxNY, got {text!r}")


def _int(path: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{path}: expected an integer, got {text!r}") from None


def _float(path: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{path}: expected a number, got {text!r}") from None


def _list(text: str) -> list[str]:
    return [t for t in re.split(r"[,\s]+", text.strip()) if t]


def parse_check(path: str, text: str) -> Check:
    m = re.fullmatch(r"\s*(\S+)\s*\+-\s*(\S+)\s*", text)
    if m:
        e, t = _float(path, m.group(1)), _float(path, m.group(2))
        return Check(e - t, e + t, e, t)
    m = re.fullmatch(r"\s*\[\s*(\S+)\s*,\s*(\S+)\s*\]\s*", text)
    if m:
        return Check(_float(path, m.group(1)), _float(path, m.group(2)))
    raise ConfigError(f"{path}: expected 'value +- tol' or '[lo, hi]', got {text!r}")


_KNOWN = {
    "study": {"benchmark", "mode", "out", "threads", "vtk"},
    "mesh": {"macro", "micro", "reference_macro", "reference_micro", "micro_mesh"},
    "micro": {"eps", "delta"},
    "material": {"E_inclusion", "E_matrix", "nu", "side_fraction", "c12", "c33", "coords"},
    "load": {"magnitude", "direction", "thickness"},
    "norms": {"h1_scale"},
    "refine": {"h1_counts", "l2_counts", "plateau_micro", "plateau_counts"},
    "spr": {"node"},
}


def parse_config(text: str, source: str | None = None) -> StudyConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from None
    for sec in cp.sections():
        if sec == "check":
            continue
        if sec not in _KNOWN:
            raise ConfigError(f"{sec}: unknown section")
        for key in cp[sec]:
            if key not in _KNOWN[sec]:
                raise ConfigError(f"{sec}.{key}: unknown key")

    def get(sec, key):
        return cp.get(sec, key, fallback=None)

    bench = get("study", "benchmark") or PLATE
    if bench not in BENCHMARKS:
        raise ConfigError(f"study.benchmark: unknown benchmark {bench!r}")
    d = _DEFAULTS[bench]
    c = StudyConfig(benchmark=bench, source=source)
    c.mode = get("study", "mode") or d["mode"]
    c.out = get("study", "out") or "results"
    c.threads = _int("study.threads", get("study", "threads")) if get("study", "threads") else 1
    c.vtk = (get("study", "vtk") or "false").lower() in ("1", "true", "yes", "on")
    v = get("mesh", "macro")
    c.macro = [_mesh_size("mesh.macro", t) for t in re.split(r"\s*,\s*", v.strip())] if v else list(d["macro"])
    v = get("mesh", "micro")
    c.micro = [_int("mesh.micro", t) for t in _list(v)] if v else list(d["micro"])
    v = get("mesh", "reference_macro")
    c.reference_macro = _mesh_size("mesh.reference_macro", v) if v else d["reference_macro"]
    v = get("mesh", "reference_micro")
    c.reference_micro = _int("mesh.reference_micro", v) if v else d["reference_micro"]
    c.micro_mesh = get("mesh", "micro_mesh")
    if c.micro_mesh and source and not Path(c.micro_mesh).is_absolute():
        c.micro_mesh = str(Path(source).parent / c.micro_mesh)
    v = get("micro", "eps")
    c.eps = _float("micro.eps", v) if v else d["eps"]
    v = get("micro", "delta")
    c.delta = _float("micro.delta", v) if v else None
    for key in ("E_inclusion", "E_matrix", "nu", "side_fraction", "c12", "c33"):
        v = get("material", key)
        if v is not None:
            c.material[key] = _float(f"material.{key}", v)
    if get("material", "coords"):
        c.material["coords"] = get("material", "coords")
    v = get("load", "magnitude")
    c.load = _float("load.magnitude", v) if v else None
    c.load_direction = get("load", "direction") or "-y"
    v = get("load", "thickness")
    c.thickness = _float("load.thickness", v) if v else None
    v = get("norms", "h1_scale")
    c.h1_scale = _float("norms.h1_scale", v) if v else d["h1_scale"]
    for key in ("h1_counts", "l2_counts", "plateau_counts"):
        v = get("refine", key)
        if v:
            setattr(c, key, [_int(f"refine.{key}", t) for t in _list(v)])
    v = get("refine", "plateau_micro")
    if v:
        c.plateau_micro = _int("refine.plateau_micro", v)
    v = get("spr", "node")
    if v:
        xy = [_float("spr.node", t) for t in _list(v)]
        if len(xy) != 2:
            raise ConfigError("spr.node: expected 'x, y'")
        c.spr_node = tuple(xy)
    if cp.has_section("check"):
        c.checks = {k: parse_check(f"check.{k}", cp["check"][k]) for k in cp["check"]}
    return c.validate()


def load_config(path) -> StudyConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def default_config(benchmark: str = PLATE) -> StudyConfig:
    return parse_config(f"[study]\nbenchmark = {benchmark}\n")
