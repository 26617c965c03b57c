import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from arbilomod.errors import GeometryResolutionError
from arbilomod.geometry import (GRID, ChangeSet, GeometryModel, benchmark_geometry,
                                diff, geometry_from_document, load_geometry,
                                save_geometry)

D = 8


def domain_colrow(dom):
    return dom % D, dom // D


def test_benchmark_geometry_1():
    g = benchmark_geometry(1)
    assert len(g.rectangles) == 5
    assert (0.0, 0.0, 0.1, 1.0) in g.rectangles
    assert (0.9, 0.0, 1.0, 1.0) in g.rectangles
    assert g.mu_min == 1.0 and g.mu_max == 1e5
    assert g.area() == pytest.approx(0.2236, abs=1e-12)


def test_benchmark_geometry_2_is_1_minus_left_tip():
    cs = diff(benchmark_geometry(1), benchmark_geometry(2), D)
    assert cs.added == ()
    assert cs.removed == ((0.1, 0.495, 0.11, 0.505),)


def test_changed_area_fraction():
    g1, g2 = benchmark_geometry(1), benchmark_geometry(2)
    assert g1.area() - g2.area() == pytest.approx(1e-4, rel=1e-9)


@pytest.mark.parametrize("bad", [0, 6, -1, "x"])
def test_benchmark_geometry_range(bad):
    with pytest.raises(ValueError):
        benchmark_geometry(bad)


def test_diff_identical_empty():
    for k in range(1, 6):
        g = benchmark_geometry(k)
        cs = diff(g, g, D)
        assert not cs
        assert cs.affected_domains == frozenset()


def test_diff_sequence_affected_domains():
    expected = {
        (1, 2): {(0, 3), (0, 4)},
        (2, 3): {(7, 3), (7, 4)},
        (3, 4): {(0, 4)},
        (4, 5): {(7, 3), (7, 4)},
    }
    for (a, b), doms in expected.items():
        cs = diff(benchmark_geometry(a), benchmark_geometry(b), D)
        assert {domain_colrow(d) for d in cs.affected_domains} == doms


def test_diff_swap_symmetry():
    g1, g4 = benchmark_geometry(1), benchmark_geometry(4)
    fwd = diff(g1, g4, D)
    bwd = diff(g4, g1, D)
    assert fwd.added == bwd.removed
    assert fwd.removed == bwd.added
    assert fwd.affected_domains == bwd.affected_domains


def test_rectangle_on_interface_affects_both_sides():
    empty = GeometryModel(rectangles=[])
    # rectangle whose top edge lies exactly on the domain line y = 1/8
    g = GeometryModel(rectangles=[(0.25, 0.1, 0.375, 0.125)])
    cs = diff(empty, g, D)
    rows = {domain_colrow(d)[1] for d in cs.affected_domains}
    assert rows == {0, 1}


coords = st.integers(min_value=0, max_value=19)


@st.composite
def rect_sets(draw):
    rects = []
    for _ in range(draw(st.integers(0, 3))):
        x0 = draw(coords)
        y0 = draw(coords)
        x1 = draw(st.integers(x0 + 1, 20))
        y1 = draw(st.integers(y0 + 1, 20))
        rects.append((x0 / 20, y0 / 20, x1 / 20, y1 / 20))
    return GeometryModel(rectangles=rects)


@given(rect_sets(), rect_sets())
def test_affected_domains_match_raster_oracle(g_old, g_new):
    cs = diff(g_old, g_new, D)
    dmask = g_old.raster() ^ g_new.raster()
    w = GRID // D
    oracle = set()
    for dom in range(D * D):
        c, r = domain_colrow(dom)
        block = dmask[max(r * w - 1, 0):(r + 1) * w + 1,
                      max(c * w - 1, 0):(c + 1) * w + 1]
        if block.any():
            oracle.add(dom)
    assert set(cs.affected_domains) == oracle
    # reconstruction: added/removed rectangles reproduce the raster diff
    recon_add = GeometryModel(rectangles=cs.added).raster()
    recon_rem = GeometryModel(rectangles=cs.removed).raster()
    assert np.array_equal(recon_add, g_new.raster() & ~g_old.raster())
    assert np.array_equal(recon_rem, g_old.raster() & ~g_new.raster())


def test_geometry_validation():
    with pytest.raises(ValueError):
        GeometryModel(rectangles=[(0.5, 0.5, 0.25, 0.75)])      # inverted
    with pytest.raises(ValueError):
        GeometryModel(rectangles=[(0.0, 0.0, 1.0001, 0.5)])     # outside
    with pytest.raises(ValueError):
        GeometryModel(rectangles=[(0.0, 0.0, 0.00033, 0.5)])    # off-grid


def test_resolution_check():
    g = benchmark_geometry(1)
    g.check_resolved_by(200)
    g.check_resolved_by(400)
    with pytest.raises(GeometryResolutionError):
        g.check_resolved_by(120)


def test_file_roundtrip(tmp_path):
    g = benchmark_geometry(3)
    path = tmp_path / "geom.json"
    save_geometry(g, path)
    g2 = load_geometry(path)
    assert g2.rectangles == g.rectangles
    assert (g2.mu_min, g2.mu_max) == (g.mu_min, g.mu_max)


def test_fixtures_match_generated():
    from importlib import resources
    for k in range(1, 6):
        path = resources.files("arbilomod").joinpath(f"geometries/bench{k}.json")
        with resources.as_file(path) as p:
            fixture = load_geometry(p)
        assert np.array_equal(fixture.raster(), benchmark_geometry(k).raster())


def test_bad_document_rejected():
    with pytest.raises(ValueError):
        geometry_from_document({"version": 99, "rectangles": []})
    with pytest.raises(ValueError):
        geometry_from_document([1, 2, 3])
