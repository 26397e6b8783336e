"""Coordinates on the periodized triangular lattice.

Vertices of the triangular lattice are the hexagonal faces of the honeycomb
graph.  A vertex is written ``(u1, u2)`` with both coordinates taken mod ``L``;
the three unit vectors are ``e1 = (1, 0)``, ``e2 = (0, 1)`` and
``e3 = (-1, -1)``.  Translation by ``e3`` keeps ``u1 - u2`` fixed, so the
``e3``-cycles (columns of hexagons) are labelled by ``d = (u1 - u2) mod L``
and a face inside its column by ``j = u2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

UNIT = {1: (1, 0), 2: (0, 1), 3: (-1, -1)}


class GeometryError(ValueError):
    """Raised for dimer counts that do not describe an interior slope."""


@dataclass(frozen=True)
class TorusGeometry:
    """Period ``L`` and dimer counts ``m = (m1, m2, m3)`` per length-``L`` cycle."""

    L: int
    m: tuple[int, int, int]

    def __post_init__(self):
        m = tuple(int(x) for x in self.m)
        object.__setattr__(self, "m", m)
        if self.L < 1:
            raise GeometryError(f"L must be positive, got {self.L}")
        if len(m) != 3 or sum(m) != self.L:
            raise GeometryError(f"dimer counts {m} must sum to L={self.L}")
        if min(m) < 1:
            raise GeometryError(f"dimer counts {m} must all be >= 1")

    @classmethod
    def from_density(cls, L: int, rho: tuple[float, float]) -> "TorusGeometry":
        """Nearest admissible geometry: ``m_i = round(rho_i L)``, ``m3 = L - m1 - m2``."""
        m1 = int(round(rho[0] * L))
        m2 = int(round(rho[1] * L))
        return cls(L, (m1, m2, L - m1 - m2))

    @property
    def rho(self) -> tuple[float, float]:
        return (self.m[0] / self.L, self.m[1] / self.L)

    @property
    def n_particles(self) -> int:
        return self.L * self.m[2]


@dataclass(frozen=True)
class Vertex:
    u1: int
    u2: int


@dataclass(frozen=True)
class EdgeRef:
    """The honeycomb edge ``b_i(u)`` crossed by the segment from ``u`` to ``u + e_i``."""

    base: Vertex
    kind: int


def translate(v: Vertex, i: int, n: int, L: int) -> Vertex:
    a, b = UNIT[i]
    return Vertex((v.u1 + n * a) % L, (v.u2 + n * b) % L)


def column_of(v: Vertex, L: int) -> tuple[int, int]:
    return ((v.u1 - v.u2) % L, v.u2 % L)


def vertex_of(d: int, j: int, L: int) -> Vertex:
    """Inverse of :func:`column_of`."""
    return Vertex((d + j) % L, j % L)


@lru_cache(maxsize=64)
def column_index(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays ``(U1, U2)`` with ``field[U1, U2]`` giving ``field`` in column layout.

    For an array ``F`` indexed by vertex ``[u1, u2]``, ``F[U1, U2][d, j]`` is the
    value at face ``j`` of column ``d``.
    """
    d = np.arange(L)[:, None]
    j = np.arange(L)[None, :]
    U1 = (d + j) % L
    U2 = np.broadcast_to(j, (L, L)).copy()
    U1.setflags(write=False)
    U2.setflags(write=False)
    return U1, U2


def to_columns(field: np.ndarray) -> np.ndarray:
    U1, U2 = column_index(field.shape[0])
    return field[U1, U2]


def to_vertices(cols: np.ndarray) -> np.ndarray:
    L = cols.shape[0]
    U1, U2 = column_index(L)
    out = np.empty_like(cols)
    out[U1, U2] = cols
    return out


def shift(field: np.ndarray, i: int, n: int = 1) -> np.ndarray:
    """``out[u] = field[u + n e_i]`` for a vertex-indexed periodic array."""
    a, b = UNIT[i]
    return np.roll(field, shift=(-n * a, -n * b), axis=(0, 1))
