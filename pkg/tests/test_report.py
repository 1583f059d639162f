import numpy as np

from mrpde.filters import build_filter_bank
from mrpde.report import (OutputSink, fmt, render_convergence_figure,
                          write_field_csv, write_grid_dump, write_key_values)
from mrpde.sparse_grid import Domain, compress
from mrpde.transform import forward


def bump_field(eps=1e-3, n0=8, j=3, p=4):
    fb = build_filter_bank(p)
    dom = Domain(n0, j + 1)
    n = (n0 << j) + 1
    x = np.linspace(0, 1, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = np.exp(-((X - 0.55) ** 2 + (Y - 0.45) ** 2) / 0.02)
    return compress([forward(f, fb, n0)], eps, fb, dom=dom, var_names=("u",))


def test_fmt_round_trips_exactly():
    for x in (0.1, 1 / 3, 2.0 ** -52, 1e300, 0.0):
        assert float(fmt(x)) == x


def test_grid_dump_matches_field_order(tmp_path):
    field = bump_field()
    path = tmp_path / "grid.txt"
    write_grid_dump(str(path), field)
    lines = path.read_text().splitlines()
    assert len(lines) == len(field)
    xy = field.dom.xy(field.pos)
    for i in (0, len(field) // 2, len(field) - 1):
        cols = lines[i].split(" ")
        assert float(cols[0]) == xy[i, 0]
        assert float(cols[1]) == xy[i, 1]
        assert int(cols[2]) == field.j[i]
        assert int(cols[3]) == field.lam[i]
        assert float(cols[4]) == field.values[i, 0]


def test_field_csv_header_and_width(tmp_path):
    field = bump_field()
    path = tmp_path / "f.csv"
    write_field_csv(str(path), field)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,j,lambda,u"
    assert all(len(ln.split(",")) == 5 for ln in lines[1:])


def test_key_values_parse_back(tmp_path):
    path = tmp_path / "report.txt"
    write_key_values(str(path), {"steps": 12, "eps": 1e-3, "ok": True,
                                 "name": "model", "dts": [0.1, 0.25]})
    got = dict(ln.split(" = ", 1) for ln in path.read_text().splitlines())
    assert got["steps"] == "12"
    assert float(got["eps"]) == 1e-3
    assert got["ok"] == "true"
    assert got["name"] == "model"
    assert [float(s) for s in got["dts"].split(",")] == [0.1, 0.25]


def test_sink_emits_and_finishes(tmp_path):
    field = bump_field()
    sink = OutputSink(str(tmp_path), figures=True)
    sink.emit(0, 0.0, field)
    sink.finish({"status": "ok", "steps": 0}, ["step 0"])
    assert (tmp_path / "field_000000.csv").exists()
    assert (tmp_path / "grid_000000.txt").exists()
    assert (tmp_path / "field_000000.png").stat().st_size > 0
    assert (tmp_path / "steps.log").read_text() == "step 0\n"
    assert "status = ok" in (tmp_path / "report.txt").read_text()
    assert sink.emitted == [(0, 0.0)]


def test_identical_fields_write_identical_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        sink = OutputSink(str(d), figures=False)
        sink.emit(3, 0.125, bump_field())
        sink.finish({"steps": 3}, ["one", "two"])
    for name in ("field_000003.csv", "grid_000003.txt", "report.txt",
                 "steps.log"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_convergence_figure_renders(tmp_path):
    rows = [{"p": 4, "eps": 1e-2, "error": 3e-2},
            {"p": 4, "eps": 1e-3, "error": 4e-3},
            {"p": 6, "eps": 1e-2, "error": 2e-2}]
    path = tmp_path / "conv.png"
    render_convergence_figure(str(path), rows)
    assert path.stat().st_size > 0
