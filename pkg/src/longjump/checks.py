"""Exact integer checks on tilings and on the move rules.

Each residual is an integer array or scalar that must vanish identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DOWN, UP, SimState
from .lattice import TorusGeometry, shift
from .tiling import (
    F_field,
    Tiling,
    epsilon_field,
    laplacian_field,
    linear_tiling,
    occupations,
    scaled_height,
    scaled_height_columns,
    validate,
)


def epsilon_identity_residual(S: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """``2 L eps - L (F(u + e3) - F(u)) - L Delta H`` at every vertex."""
    L = geom.L
    eta = occupations(S, geom)
    eps = epsilon_field(eta)
    F = F_field(eta)
    return 2 * L * eps - L * (shift(F, 3) - F) - laplacian_field(S)


def epsilon_sum(S: np.ndarray, geom: TorusGeometry) -> int:
    return int(epsilon_field(occupations(S, geom)).sum())


def gradient_identity_residual(S: np.ndarray, geom: TorusGeometry) -> int:
    """``sum eps H`` against the squared height gradient, scaled by ``L^2`` into integers.

    ``2 L sum eps S = m3 L sum F - sum [(S - S(u - e1))^2 + (S - S(u - e2))^2]``.
    """
    L, m3 = geom.L, geom.m[2]
    eta = occupations(S, geom)
    eps = epsilon_field(eta)
    F = F_field(eta)
    S = S.astype(object)  # exact big-integer arithmetic
    lhs = 2 * L * int((eps.astype(object) * S).sum())
    grad2 = (S - shift(S, 1, -1)) ** 2 + (S - shift(S, 2, -1)) ** 2
    return lhs - (m3 * L * int(F.sum()) - int(grad2.sum()))


def occupancy_roundtrip_ok(t: Tiling) -> bool:
    """Occupations recovered from the height give back the particle columns."""
    S = scaled_height(t)
    from .lattice import to_columns

    e3 = to_columns(occupations(S, t.geom)[2])
    return bool(np.array_equal(e3, t.eta3_columns()))


def brute_reach(t: Tiling, d: int, k: int, direction: int) -> int:
    """Largest ``n`` such that moving particle ``k`` of column ``d`` by ``1..n`` steps is legal.

    A move of length ``n`` is legal when the result is a valid tiling whose
    height differs from the old one by ``-L`` (``+e3``) or ``+L`` (``-e3``)
    exactly on the ``n`` swept faces of column ``d`` and nowhere else.
    """
    L = t.geom.L
    y = int(t.columns[d, k])
    ref = (d + 1) % L  # a column the move never touches
    S0 = scaled_height_columns(t)
    n = 0
    for step in range(1, L):
        cols = t.columns.copy()
        cols[d, k] = (y - step) % L if direction == UP else (y + step) % L
        if len(set(cols[d].tolist())) < cols.shape[1]:
            break
        cols[d] = np.sort(cols[d])
        new = Tiling(t.geom, cols)
        if not validate(new):
            break
        diff = scaled_height_columns(new) - S0
        diff -= diff[ref, 0]
        expect = np.zeros_like(diff)
        if direction == UP:
            expect[d, [(y - s) % L for s in range(1, step + 1)]] = -L
        else:
            expect[d, [(y + s) % L for s in range(step)]] = L
        if not np.array_equal(diff, expect):
            break
        n = step
    return n


def random_geometry(rng: np.random.Generator, L: int | None = None, lo: int = 12, hi: int = 48) -> TorusGeometry:
    if L is None:
        L = int(rng.integers(lo, hi + 1))
    m1 = int(rng.integers(1, L - 1))
    m2 = int(rng.integers(1, L - m1))
    return TorusGeometry(L, (m1, m2, L - m1 - m2))


def random_tiling(rng: np.random.Generator, geom: TorusGeometry, sweeps: float = 3.0) -> Tiling:
    """A tiling reached from the linear one by a random number of chain events."""
    n = int(rng.integers(0, int(sweeps * geom.n_particles) + 1))
    state = SimState(linear_tiling(geom), seed=int(rng.integers(2**63)))
    state.run_events(n)
    return state.tiling


@dataclass
class CaseResult:
    case: int
    L: int
    m: tuple[int, int, int]
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def check_tiling(t: Tiling, rng: np.random.Generator | None = None, reach_probes: int = 4) -> list[str]:
    failures = []
    rep = validate(t)
    if not rep:
        return [f"validate: {v}" for v in rep.violations[:5]]
    S = scaled_height(t)
    geom = t.geom
    if np.any(epsilon_identity_residual(S, geom)):
        failures.append("epsilon identity")
    if epsilon_sum(S, geom) != 0:
        failures.append("sum of epsilon")
    if gradient_identity_residual(S, geom) != 0:
        failures.append("gradient identity")
    if not occupancy_roundtrip_ok(t):
        failures.append("occupancy/height consistency")
    if not np.array_equal(scaled_height_columns(t, anchor=7) - 7, scaled_height_columns(t)):
        failures.append("height anchor shift")
    if rng is not None and reach_probes:
        state = SimState(t)
        m3 = geom.m[2]
        for _ in range(reach_probes):
            d = int(rng.integers(geom.L))
            k = int(rng.integers(m3))
            direction = UP if rng.random() < 0.5 else DOWN
            # SimState labels particles by sorted order at construction
            if state.reach((d, k), direction) != brute_reach(t, d, k, direction):
                failures.append(f"reach mismatch at column {d}, particle {k}, direction {direction}")
    return failures


def run_checks(cases: int, seed: int, L: int | None = None) -> list[CaseResult]:
    rng = np.random.default_rng(seed)
    out = []
    for c in range(cases):
        geom = random_geometry(rng, L)
        t = random_tiling(rng, geom)
        out.append(CaseResult(c, geom.L, geom.m, check_tiling(t, rng)))
    return out
