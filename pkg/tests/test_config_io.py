import numpy as np
import pytest

from hmm_elast import io
from hmm_elast.config import ConfigError, default_config, load_config, parse_check, parse_config
from hmm_elast.mesh import build_structured_quads


def test_defaults_follow_benchmarks():
    c = default_config("beam-inclusion")
    assert c.eps == 5.0 and c.micro == [32] and c.reference_macro == (800, 160)
    assert default_config("plate-laminate").mode == "tensor"


def test_full_config():
    c = parse_config("""
[study]
benchmark = plate-laminate
mode = transfer
threads = 3
[mesh]
macro = 20x20, 40x40
micro = 16 32 64
[material]
c12 = 36
[load]
direction = +x
[check]
order_L2 = 2.0 +- 0.15
max = [0.07, 0.08]
""")
    assert c.macro == [(20, 20), (40, 40)] and c.micro == [16, 32, 64]
    assert c.threads == 3 and c.material["c12"] == 36.0
    assert c.checks["order_L2"].passes(2.1) and not c.checks["order_L2"].passes(2.2)
    assert c.checks["max"].passes(0.075)
    b = c.build_benchmark()
    assert b.field.c12 == 36.0 and b.direction == "+x"


@pytest.mark.parametrize("text, path", [
    ("[study]\nbenchmark = nope\n", "study.benchmark"),
    ("[mesh]\nmacro = 20y20\n", "mesh.macro"),
    ("[mesh]\nmicro = 32, 16\n", "mesh.micro"),
    ("[micro]\neps = abc\n", "micro.eps"),
    ("[mesh]\nbogus = 1\n", "mesh.bogus"),
    ("[extra]\nx = 1\n", "extra"),
    ("[check]\nfoo = 1 or 2\n", "check.foo"),
    ("[refine]\nh1_counts = 16, 16\n", "refine.h1_counts"),
    ("[study]\nbenchmark = imported-rve\n", "mesh.micro_mesh"),
    ("[study]\nthreads = 0\n", "study.threads"),
])
def test_errors_name_the_key(text, path):
    with pytest.raises(ConfigError, match=path.replace(".", r"\.")):
        parse_config(text)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/x.ini")


def test_check_formats():
    c = parse_check("k", "1e-3 +- 2e-4")
    assert c.expected == 1e-3 and c.passes(1.2e-3) and not c.passes(1.3e-3)
    assert "+-" in c.describe()


def test_fmt_round_trips():
    for v in (np.pi, 1e-300, -123456789.123456789, 0.1 + 0.2):
        assert float(io.fmt(v)) == v
    assert io.fmt(3) == "3" and io.fmt(True) == "true"


def test_csv_round_trip(tmp_path):
    p = tmp_path / "t.csv"
    io.write_csv(p, ["a", "b"], [(1, 0.1), (2, np.e)])
    header, rows = io.read_csv(p)
    assert header == ["a", "b"] and float(rows[1][1]) == np.e


def test_vtk_layout(tmp_path):
    m = build_structured_quads(2, 1)
    p = tmp_path / "f.vtk"
    io.write_vtk(p, m, {"displacement": np.zeros((m.n_nodes, 2))}, {"sxx": np.zeros(m.n_nodes)},
                 {"von_mises": np.ones(m.n_elems)})
    text = p.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile") and "DATASET UNSTRUCTURED_GRID" in text
    assert "CELL_TYPES 2" in text and text[text.index("CELL_TYPES 2") + 1] == "9"
    assert "VECTORS displacement double" in text and "SCALARS von_mises double 1" in text


def test_vtk_rejects_wrong_length(tmp_path):
    m = build_structured_quads(2, 1)
    with pytest.raises(ValueError):
        io.write_vtk(tmp_path / "f.vtk", m, point_scalars={"x": np.zeros(3)})
