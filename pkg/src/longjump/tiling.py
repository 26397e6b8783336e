"""Dimer coverings stored as interlaced particle columns.

A covering of the periodized honeycomb graph is determined by its type-3
(horizontal) dimers.  Column ``d`` lists the faces ``j`` whose edge ``b_3(u)``
is occupied, ``u = (d + j, j)``; every column holds ``m3`` particles.

Heights are kept as integers ``S = L * H`` so that all identities can be
checked exactly: ``S(u + e_i) - S(u)`` is ``L - m_i`` across an occupied
``b_i(u)`` and ``-m_i`` otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .lattice import TorusGeometry, Vertex, column_of, shift, to_columns, to_vertices


class HeightInconsistency(RuntimeError):
    """The particle columns do not stitch into a single-valued height function."""


class IntegrityError(RuntimeError):
    """A height field whose increments are not those of a dimer covering."""


class RepairFailure(RuntimeError):
    """``from_profile`` could not turn the rounded profile into a valid tiling."""


@dataclass
class Tiling:
    geom: TorusGeometry
    columns: np.ndarray  # (L, m3) int64, each row sorted ascending

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=np.int64)
        if cols.ndim != 2 or cols.shape[0] != self.geom.L:
            raise ValueError(f"columns must have shape (L, m3), got {cols.shape}")
        self.columns = np.sort(cols, axis=1)

    @classmethod
    def from_lists(cls, geom: TorusGeometry, cols: Iterable[Iterable[int]]) -> "Tiling":
        rows = [sorted(int(j) for j in c) for c in cols]
        if len({len(r) for r in rows}) > 1:
            raise ValueError("all columns must hold the same number of particles")
        return cls(geom, np.array(rows, dtype=np.int64).reshape(geom.L, -1))

    def copy(self) -> "Tiling":
        return Tiling(self.geom, self.columns.copy())

    def eta3_columns(self) -> np.ndarray:
        """``(L, L)`` int8 array, ``1`` at ``[d, j]`` when face ``j`` of column ``d`` holds a particle."""
        L = self.geom.L
        out = np.zeros((L, L), dtype=np.int8)
        rows = np.repeat(np.arange(L), self.columns.shape[1])
        out[rows, self.columns.ravel() % L] = 1
        return out

    def __eq__(self, other):
        if not isinstance(other, Tiling):
            return NotImplemented
        return self.geom == other.geom and np.array_equal(self.columns, other.columns)

    # -- serialization ---------------------------------------------------

    def to_text(self) -> str:
        L, (m1, m2, m3) = self.geom.L, self.geom.m
        lines = [f"{L} {m1} {m2} {m3}"]
        for d, row in enumerate(self.columns):
            lines.append(f"{d}: " + " ".join(str(int(j)) for j in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Tiling":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        L, m1, m2, m3 = (int(x) for x in lines[0].split())
        geom = TorusGeometry(L, (m1, m2, m3))
        cols: list[list[int]] = [[] for _ in range(L)]
        for ln in lines[1 : L + 1]:
            head, _, rest = ln.partition(":")
            cols[int(head)] = [int(x) for x in rest.split()]
        return cls.from_lists(geom, cols)


# -- validation ------------------------------------------------------------


@dataclass
class ValidationReport:
    ok: bool
    violations: list[tuple[str, int, tuple[int, int]]] = field(default_factory=list)

    def __bool__(self):
        return self.ok


def _pair_alternation(y: np.ndarray, x: np.ndarray, L: int) -> tuple[int, int] | None:
    """Check that column ``d`` (``y``) and column ``d+1`` (``x``) interlace.

    Between consecutive particles ``y_k < y_{k+1}`` of column ``d`` there must be
    exactly one particle of column ``d+1`` in ``[y_k, y_{k+1} - 1]``.  Placing the
    ``y`` points at ``y - 1/4`` makes this a strict cyclic alternation.
    Returns the first offending window ``(start, end)`` or ``None``.
    """
    keys = np.concatenate([4 * y - 1, 4 * x]) % (4 * L)
    labels = np.concatenate([np.zeros(len(y), np.int8), np.ones(len(x), np.int8)])
    order = np.argsort(keys, kind="stable")
    keys, labels = keys[order], labels[order]
    same = labels == np.roll(labels, -1)
    if not same.any():
        return None
    k = int(np.argmax(same))
    a = int((keys[k] + 1) // 4) % L
    b = int((keys[(k + 1) % len(keys)] + 1) // 4) % L
    return (a, b)


def validate(t: Tiling) -> ValidationReport:
    L, m3 = t.geom.L, t.geom.m[2]
    cols = t.columns
    bad: list[tuple[str, int, tuple[int, int]]] = []
    for d in range(L):
        row = cols[d]
        if len(row) != m3:
            bad.append(("count", d, (len(row), m3)))
        elif np.any(row < 0) or np.any(row >= L) or len(np.unique(row)) != len(row):
            bad.append(("range", d, (int(row.min()), int(row.max()))))
    if bad:
        return ValidationReport(False, bad)
    for d in range(L):
        w = _pair_alternation(cols[d], cols[(d + 1) % L], L)
        if w is not None:
            bad.append(("interlace", d, w))
    if bad:
        return ValidationReport(False, bad)
    try:
        scaled_height(t)
    except HeightInconsistency as exc:
        bad.append(("winding", int(exc.args[1]), (0, L - 1)))
        return ValidationReport(False, bad)
    return ValidationReport(True)


# -- height function ---------------------------------------------------------


def _column_profiles(eta3: np.ndarray, m3: int) -> np.ndarray:
    """``P[d, j] = j m3 - L * #{particles at faces 1..j}``: the height along a column relative to face 0."""
    L = eta3.shape[0]
    counts = np.zeros((L, L), dtype=np.int64)
    counts[:, 1:] = np.cumsum(eta3[:, 1:], axis=1)
    return np.arange(L, dtype=np.int64)[None, :] * m3 - L * counts


def scaled_height_columns(t: Tiling, anchor: int = 0) -> np.ndarray:
    """Scaled height in column layout ``C[d, j] = S(d + j, j)``."""
    L, (m1, m2, m3) = t.geom.L, t.geom.m
    eta3 = t.eta3_columns()
    P = _column_profiles(eta3, m3)
    C = np.empty((L, L), dtype=np.int64)
    C[0] = P[0] + anchor
    for d in range(L):
        nxt = (d + 1) % L
        if nxt != 0:
            # just below a particle of column d the e1 step is forced to be unoccupied
            pins = np.flatnonzero(np.roll(eta3[d], -1))
            if len(pins) == 0:
                raise HeightInconsistency("empty column", d)
            js = int(pins[0])
            C[nxt] = P[nxt] + (C[d, js] - m1 - P[nxt, js])
        d1 = C[nxt] - C[d]
        d2 = np.roll(C[d], -1) - C[nxt]
        if not (np.all((d1 == -m1) | (d1 == L - m1)) and np.all((d2 == -m2) | (d2 == L - m2))):
            raise HeightInconsistency("columns do not stitch", d)
    return C


def scaled_height(t: Tiling, anchor: int = 0) -> np.ndarray:
    """Integer field ``S = L H`` indexed ``[u1, u2]`` with ``S(0, 0) = anchor``."""
    return to_vertices(scaled_height_columns(t, anchor))


def occupations(S: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """``eta[i-1, u1, u2] = 1`` iff ``b_i(u)`` is a dimer, read off the height increments."""
    L = geom.L
    out = np.empty((3,) + S.shape, dtype=np.int8)
    for i in (1, 2, 3):
        num = shift(S, i) - S + geom.m[i - 1]
        q, r = np.divmod(num, L)
        if np.any(r != 0) or np.any((q != 0) & (q != 1)):
            raise IntegrityError(f"increments along e{i} are not those of a dimer covering")
        out[i - 1] = q
    return out


def occupancy(S: np.ndarray, v: Vertex, i: int, geom: TorusGeometry) -> int:
    L = geom.L
    a, b = {1: (1, 0), 2: (0, 1), 3: (-1, -1)}[i]
    num = int(S[(v.u1 + a) % L, (v.u2 + b) % L]) - int(S[v.u1, v.u2]) + geom.m[i - 1]
    q, r = divmod(num, L)
    if r != 0 or q not in (0, 1):
        raise IntegrityError(f"increment at {v} along e{i} gives occupancy {num}/{L}")
    return q


# -- local observables ---------------------------------------------------------


@dataclass
class LocalObservables:
    """Per-vertex fields, all indexed ``[u1, u2]``.

    ``kval`` is zero where ``eps == 0``.
    """

    eps: np.ndarray
    kval: np.ndarray
    F: np.ndarray


def epsilon_field(eta: np.ndarray) -> np.ndarray:
    e1, e2 = eta[0].astype(np.int64), eta[1].astype(np.int64)
    return e1 * e2 - shift(e1, 1, -1) * shift(e2, 2, -1)


def F_field(eta: np.ndarray) -> np.ndarray:
    return np.abs(eta[0].astype(np.int64) - eta[1])


def k_field(eta: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Jump length attached to each vertex with ``eps != 0``.

    ``eps = +1``: smallest ``n >= 1`` with a particle at ``b_3(u + (n-1) e3)``;
    ``eps = -1``: smallest ``n >= 1`` with a particle at ``b_3(u - n e3)``.
    In column layout ``e3`` lowers ``j`` by one.
    """
    L = eta.shape[1]
    e3 = to_columns(eta[2])
    ec = to_columns(eps)
    j = np.arange(L)
    out = np.zeros((L, L), dtype=np.int64)
    for d in range(L):
        ys = np.flatnonzero(e3[d])
        below = (j[:, None] - ys[None, :]) % L  # steps down to a particle at or below j
        above = (ys[None, :] - j[:, None] - 1) % L + 1  # steps up to a particle strictly above j
        out[d] = np.where(ec[d] > 0, below.min(axis=1) + 1, np.where(ec[d] < 0, above.min(axis=1), 0))
    return to_vertices(out)


def observables_from_height(S: np.ndarray, geom: TorusGeometry) -> LocalObservables:
    eta = occupations(S, geom)
    eps = epsilon_field(eta)
    return LocalObservables(eps=eps, kval=k_field(eta, eps), F=F_field(eta))


def observables(t: Tiling) -> LocalObservables:
    return observables_from_height(scaled_height(t), t.geom)


def epsilon(t: Tiling, v: Vertex) -> int:
    eta = occupations(scaled_height(t), t.geom)
    return int(epsilon_field(eta)[v.u1, v.u2])


def k_of(t: Tiling, v: Vertex) -> int:
    obs = observables(t)
    if obs.eps[v.u1, v.u2] == 0:
        raise ValueError(f"k is undefined at {v}: eps = 0")
    return int(obs.kval[v.u1, v.u2])


def laplacian_field(S: np.ndarray) -> np.ndarray:
    """``L * Delta H`` for the plain Z^2 Laplacian in the ``(e1, e2)`` axes."""
    return shift(S, 1) + shift(S, 1, -1) + shift(S, 2) + shift(S, 2, -1) - 4 * S


def laplacian_H(S: np.ndarray, v: Vertex) -> int:
    L = S.shape[0]
    a, b = v.u1, v.u2
    return int(
        S[(a + 1) % L, b] + S[(a - 1) % L, b] + S[a, (b + 1) % L] + S[a, (b - 1) % L] - 4 * S[a, b]
    )


def mutual_volume(t1: Tiling, t2: Tiling) -> int:
    if t1.geom != t2.geom:
        raise ValueError(f"geometry mismatch: {t1.geom} vs {t2.geom}")
    return int(np.abs(scaled_height(t1) - scaled_height(t2)).sum())


# -- construction ------------------------------------------------------------


def _columns_from_counts(N: np.ndarray, m3: int) -> np.ndarray:
    """Particle positions from cumulative counts ``N[d, j]``, ``j = -1 .. L-1``."""
    steps = np.diff(N, axis=1)
    L = N.shape[0]
    rows = [np.flatnonzero(steps[d]) for d in range(L)]
    return np.array(rows, dtype=np.int64).reshape(L, m3)


def _repair(N: np.ndarray, geom: TorusGeometry, sweeps: int = 3) -> np.ndarray:
    """Clamp each column's counting function into the window allowed by its left neighbour.

    Interlacement of columns ``d, d+1`` reads ``N_d(j+1) <= N_{d+1}(j) <= N_d(j) + 1``;
    clamping moves each offending particle of column ``d+1`` the minimal number
    of ``e3`` steps.  Columns are swept in increasing ``d``.
    """
    L, m1 = geom.L, geom.m[0]
    N = N.copy()
    for _ in range(sweeps):
        changed = False
        for d in range(L):
            nxt = (d + 1) % L
            wrap = -(L - m1) if nxt == 0 else 0
            cur = N[d, 1:]  # j = 0 .. L-1
            lo = np.append(cur[1:], cur[0] + geom.m[2]) + wrap
            hi = cur + 1 + wrap
            tgt = N[nxt, 1:]
            new = np.clip(tgt, lo, hi) if np.all(lo <= hi) else tgt
            if not np.array_equal(new, tgt):
                changed = True
                N[nxt, 1:] = new
                N[nxt, 0] = new[-1] - geom.m[2]
        if not changed:
            return N
    raise RepairFailure("interlacement could not be restored in 3 sweeps")


def from_profile(
    psi0: Callable[[np.ndarray, np.ndarray], np.ndarray],
    geom: TorusGeometry,
    theta: float = 0.5,
) -> Tiling:
    """Round the macroscopic height ``L psi0(u / L)`` to a tiling.

    The cumulative particle count along column ``d`` is the floor of
    ``(d (L - m1) + j m3 - L^2 psi0) / L + theta``; floors of a common profile
    interlace automatically whenever all discrete slopes are admissible, and a
    clamping sweep handles the rest.
    """
    L, (m1, m2, m3) = geom.L, geom.m
    cols_d = np.arange(L)[:, None]
    cols_j = np.arange(L)[None, :]
    x = ((cols_d + cols_j) % L) / L
    y = np.broadcast_to(cols_j / L, (L, L))
    psi = np.asarray(psi0(x, y), dtype=float) * np.ones((L, L))
    g = (cols_j * m3 - L * L * psi) / L
    q, r = np.divmod(np.arange(L) * (L - m1), L)
    N = np.empty((L, L + 1), dtype=np.int64)
    N[:, 1:] = np.floor(g + (r / L)[:, None] + theta).astype(np.int64) + q[:, None]
    N[:, 0] = N[:, L] - m3
    steps = np.diff(N, axis=1)
    if np.any((steps != 0) & (steps != 1)):
        raise RepairFailure("profile slope along e3 leaves the admissible triangle")
    t = Tiling(geom, _columns_from_counts(N, m3))
    if not validate(t):
        N = _repair(N, geom)
        steps = np.diff(N, axis=1)
        if np.any((steps != 0) & (steps != 1)):
            raise RepairFailure("repair produced an invalid column")
        t = Tiling(geom, _columns_from_counts(N, m3))
        if not validate(t):
            raise RepairFailure("repaired tiling is still invalid")
    return t


def linear_tiling(geom: TorusGeometry) -> Tiling:
    """The canonical configuration of slope ``m / L`` (flat macroscopic profile)."""
    return from_profile(lambda x, y: np.zeros_like(x), geom)


__all__ = [
    "Tiling",
    "ValidationReport",
    "LocalObservables",
    "HeightInconsistency",
    "IntegrityError",
    "RepairFailure",
    "validate",
    "scaled_height",
    "scaled_height_columns",
    "occupations",
    "occupancy",
    "epsilon",
    "epsilon_field",
    "F_field",
    "k_field",
    "k_of",
    "observables",
    "observables_from_height",
    "laplacian_field",
    "laplacian_H",
    "mutual_volume",
    "from_profile",
    "linear_tiling",
    "column_of",
]
