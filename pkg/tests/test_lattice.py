import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from longjump.lattice import (
    GeometryError,
    TorusGeometry,
    Vertex,
    column_of,
    shift,
    to_columns,
    to_vertices,
    translate,
    vertex_of,
)


def test_translate_examples():
    assert translate(Vertex(0, 0), 3, 1, 4) == Vertex(3, 3)
    assert translate(Vertex(2, 1), 1, 0, 4) == Vertex(2, 1)
    assert translate(Vertex(3, 3), 3, -1, 4) == Vertex(0, 0)


def test_column_examples():
    assert column_of(Vertex(0, 0), 4) == (0, 0)
    assert column_of(Vertex(2, 1), 4) == (1, 1)
    assert column_of(translate(Vertex(2, 1), 3, 1, 4), 4) == (1, 0)


@pytest.mark.parametrize("L", range(1, 9))
def test_e3_preserves_column_everywhere(L):
    for u1 in range(L):
        for u2 in range(L):
            v = Vertex(u1, u2)
            d, j = column_of(v, L)
            d3, j3 = column_of(translate(v, 3, 1, L), L)
            assert d3 == d and j3 == (j - 1) % L
            assert vertex_of(d, j, L) == v


vertices = st.integers(2, 30).flatmap(
    lambda L: st.tuples(st.just(L), st.integers(0, L - 1), st.integers(0, L - 1))
)


@given(vertices, st.integers(1, 3), st.integers(-50, 50))
def test_translate_inverse(vlt, i, n):
    L, a, b = vlt
    v = Vertex(a, b)
    assert translate(translate(v, i, n, L), i, -n, L) == v


@given(vertices)
def test_unit_vectors_sum_to_zero(vlt):
    L, a, b = vlt
    v = Vertex(a, b)
    w = translate(translate(translate(v, 1, 1, L), 2, 1, L), 3, 1, L)
    assert w == v


@given(st.integers(1, 20))
def test_layout_roundtrip(L):
    f = np.arange(L * L).reshape(L, L)
    assert np.array_equal(to_vertices(to_columns(f)), f)
    c = to_columns(f)
    for d in range(L):
        for j in range(L):
            v = vertex_of(d, j, L)
            assert c[d, j] == f[v.u1, v.u2]


def test_shift_matches_translate():
    L = 7
    f = np.arange(L * L).reshape(L, L)
    for i in (1, 2, 3):
        for n in (-2, 1, 3):
            g = shift(f, i, n)
            for a in range(L):
                for b in range(L):
                    w = translate(Vertex(a, b), i, n, L)
                    assert g[a, b] == f[w.u1, w.u2]


def test_geometry_validation():
    TorusGeometry(3, (1, 1, 1))
    with pytest.raises(GeometryError):
        TorusGeometry(6, (2, 2, 1))
    with pytest.raises(GeometryError):
        TorusGeometry(6, (3, 3, 0))
    g = TorusGeometry.from_density(64, (1 / 3, 1 / 3))
    assert g.m == (21, 21, 22) and g.n_particles == 64 * 22
