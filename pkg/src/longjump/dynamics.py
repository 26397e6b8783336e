"""Continuous-time long-jump dynamics.

A particle may jump ``n`` steps along ``+e3`` or ``-e3`` whenever the
interlacement with its two neighbouring columns survives; each such jump has
rate ``1 / (2 n)``.  Time is simulated in these unscaled units and reported
macroscopically as ``t_micro / L**2``.

The height field ``S = L H`` is carried along incrementally, so the origin is
anchored by the integrated current and never re-normalized: a jump along
``+e3`` lowers ``S`` by ``L`` on every face it sweeps, a jump along ``-e3``
raises it.
"""

from __future__ import annotations

import logging
import json
from dataclasses import dataclass

import numpy as np

from . import engine
from .lattice import TorusGeometry, to_vertices
from .tiling import Tiling, scaled_height_columns

logger = logging.getLogger(__name__)

UP, DOWN = 1, -1  # along +e3 / along -e3
_CHUNK = 3 * 65536


class StuckState(RuntimeError):
    """Every particle is blocked in both directions."""


class InvalidEvent(ValueError):
    """A move that would break interlacement."""


@dataclass(frozen=True)
class MoveEvent:
    particle: tuple[int, int]  # (column d, stable label within the column)
    direction: int  # UP (+e3) or DOWN (-e3)
    length: int


def particle_rate(i_plus: int, i_minus: int) -> float:
    """Total jump rate ``(H_{I+} + H_{I-}) / 2`` of a particle with reaches ``I+, I-``."""
    h = sum(1.0 / n for n in range(1, i_plus + 1)) + sum(1.0 / n for n in range(1, i_minus + 1))
    return 0.5 * h


class SimState:
    """Tiling, incremental height, clock, RNG and rate index of one chain."""

    def __init__(self, tiling: Tiling, seed: int = 0, t_micro: float = 0.0, anchor: int = 0):
        self.geom: TorusGeometry = tiling.geom
        L, m3 = self.geom.L, self.geom.m[2]
        self.L = L
        self.seed = int(seed)
        self.t_micro = float(t_micro)
        self.events_applied = 0
        P = L * m3
        self.col = np.repeat(np.arange(L, dtype=np.int64), m3)
        self.pos = tiling.columns.reshape(-1).astype(np.int64).copy()
        self.occ = np.full((L, L), -1, dtype=np.int64)
        self.occ[self.col, self.pos] = np.arange(P)
        self.C = scaled_height_columns(tiling, anchor)
        self.Ip = np.zeros(P, dtype=np.int64)
        self.Im = np.zeros(P, dtype=np.int64)
        self.size = 1 << max(1, (P - 1).bit_length())
        self.tree = np.zeros(2 * self.size)
        self.harm = engine.harmonic_numbers(L)
        engine.refresh_all(self.occ, self.pos, self.col, self.Ip, self.Im, self.tree, self.size, self.harm, L)
        self.rng = np.random.Generator(np.random.PCG64(self.seed))
        self._buf = np.empty(0)
        self._off = 0
        self._buf_state = None  # generator state just before the current buffer was drawn

    def _refill(self) -> None:
        self._buf_state = self.rng.bit_generator.state
        self._buf = self.rng.random(_CHUNK)
        self._off = 0

    # -- views ---------------------------------------------------------------

    @property
    def n_particles(self) -> int:
        return self.pos.shape[0]

    @property
    def t_macro(self) -> float:
        return self.t_micro / self.L**2

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    @property
    def height(self) -> np.ndarray:
        """Scaled height ``S(u, t) = L H(u, t)`` indexed ``[u1, u2]``."""
        return to_vertices(self.C)

    @property
    def tiling(self) -> Tiling:
        cols = np.sort(self.pos.reshape(self.L, -1), axis=1)
        return Tiling(self.geom, cols)

    def particle_id(self, particle: tuple[int, int]) -> int:
        d, k = particle
        return d * self.geom.m[2] + k

    def rates(self) -> np.ndarray:
        return self.tree[self.size : self.size + self.n_particles].copy()

    # -- single events ----------------------------------------------------------

    def reach(self, particle: tuple[int, int], direction: int) -> int:
        p = self.particle_id(particle)
        d, y = int(self.col[p]), int(self.pos[p])
        if direction == UP:
            return int(engine.reach_plus(self.occ, self.L, d, y))
        return int(engine.reach_minus(self.occ, self.L, d, y))

    def _uniforms(self, k: int) -> np.ndarray:
        if self._off + k > self._buf.shape[0]:
            self._refill()
            self._off = 0
        out = self._buf[self._off : self._off + k]
        self._off += k
        return out

    def sample_event(self) -> tuple[float, MoveEvent]:
        R = self.total_rate
        if R <= 0.0:
            raise StuckState("total jump rate is zero")
        w = self._uniforms(3)
        dt = -np.log1p(-w[0]) / R
        p, direction, n = engine.draw_event(self.tree, self.size, self.harm, self.Ip, self.Im, w[1], w[2])
        m3 = self.geom.m[2]
        return float(dt), MoveEvent((int(p) // m3, int(p) % m3), int(direction), int(n))

    def apply(self, event: MoveEvent, dt: float = 0.0) -> None:
        p = self.particle_id(event.particle)
        top = self.Ip[p] if event.direction == UP else self.Im[p]
        if event.direction not in (UP, DOWN) or not 1 <= event.length <= top:
            raise InvalidEvent(f"{event} exceeds reach {int(top)}")
        engine.move(
            self.occ, self.pos, self.col, self.C, self.Ip, self.Im, self.tree, self.size,
            self.harm, self.L, p, event.direction, event.length,
        )
        self.t_micro += dt
        self.events_applied += 1

    def step(self) -> MoveEvent:
        dt, ev = self.sample_event()
        self.apply(ev, dt)
        return ev

    # -- bulk evolution ------------------------------------------------------------

    def _run(self, t_stop: float, max_events: int) -> int:
        done = 0
        while True:
            if self._buf.shape[0] - self._off < 3:
                self._refill()
            t, off, n, status = engine.run(
                self.occ, self.pos, self.col, self.C, self.Ip, self.Im, self.tree, self.size,
                self.harm, self.L, self._buf, self._off, self.t_micro, t_stop, max_events - done,
            )
            self.t_micro, self._off = float(t), int(off)
            done += int(n)
            self.events_applied += int(n)
            if status == engine.STUCK:
                raise StuckState(f"no particle can move at t_micro={self.t_micro}")
            if status in (engine.OK, engine.MAX_EVENTS):
                return done

    def run_until(self, t_macro: float) -> "SimState":
        t_stop = t_macro * self.L**2
        if t_stop < self.t_micro:
            raise ValueError(f"cannot run backwards: t_macro={t_macro} < {self.t_macro}")
        if t_stop > self.t_micro:
            self._run(t_stop, np.iinfo(np.int64).max)
        return self

    def run_events(self, n: int) -> "SimState":
        """Apply exactly ``n`` events (the clock advances accordingly)."""
        self._run(np.inf, n)
        return self

    # -- diagnostics --------------------------------------------------------------

    def recomputed_rates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        Ip = np.array([engine.reach_plus(self.occ, self.L, int(d), int(y)) for d, y in zip(self.col, self.pos)])
        Im = np.array([engine.reach_minus(self.occ, self.L, int(d), int(y)) for d, y in zip(self.col, self.pos)])
        return Ip, Im, 0.5 * (self.harm[Ip] + self.harm[Im])

    def check_consistency(self) -> None:
        """Compare incremental height and rate index with from-scratch values."""
        t = self.tiling
        ref = scaled_height_columns(t, anchor=int(self.C[0, 0]))
        if not np.array_equal(ref, self.C):
            raise AssertionError("incremental height differs from the recomputed one")
        Ip, Im, r = self.recomputed_rates()
        if not (np.array_equal(Ip, self.Ip) and np.array_equal(Im, self.Im)):
            raise AssertionError("cached reaches are stale")
        total = r.sum()
        if abs(self.tree[1] - total) > 1e-9 * total:
            raise AssertionError(f"rate index total {self.tree[1]} vs recomputed {total}")

    # -- checkpoints ----------------------------------------------------------------

    def to_checkpoint(self) -> str:
        """Tiling text plus metadata lines; resuming continues the identical random stream."""
        rng = "none" if self._buf_state is None else f"{self._off} {json.dumps(self._buf_state, sort_keys=True)}"
        return (
            self.tiling.to_text()
            + f"t_micro {self.t_micro!r}\n"
            + f"seed {self.seed}\n"
            + f"events_applied {self.events_applied}\n"
            + f"anchor {int(self.C[0, 0])}\n"
            + f"labels {' '.join(map(str, self.pos.tolist()))}\n"
            + f"rng {rng}\n"
        )

    @classmethod
    def from_checkpoint(cls, text: str) -> "SimState":
        meta = {}
        body = []
        for ln in text.splitlines():
            key = ln.split(" ", 1)[0]
            if key in ("t_micro", "seed", "events_applied", "anchor", "labels", "rng"):
                meta[key] = ln.split(" ", 1)[1]
            else:
                body.append(ln)
        tiling = Tiling.from_text("\n".join(body))
        st = cls(tiling, seed=int(meta.get("seed", 0)), t_micro=float(meta.get("t_micro", 0.0)),
                 anchor=int(meta.get("anchor", 0)))
        st.events_applied = int(meta.get("events_applied", 0))
        if "labels" in meta:
            # particle order within a column rotates as particles wrap; restore it so the rate index lines up
            pos = np.array(meta["labels"].split(), dtype=np.int64)
            if sorted(zip(st.col.tolist(), pos.tolist())) != sorted(zip(st.col.tolist(), st.pos.tolist())):
                raise ValueError("checkpoint labels do not match the tiling")
            st.pos[:] = pos
            st.occ.fill(-1)
            st.occ[st.col, st.pos] = np.arange(st.n_particles)
            engine.refresh_all(st.occ, st.pos, st.col, st.Ip, st.Im, st.tree, st.size, st.harm, st.L)
        if meta.get("rng", "none") != "none":
            off, state = meta["rng"].split(" ", 1)
            st.rng.bit_generator.state = json.loads(state)
            st._refill()
            st._off = int(off)
        return st


def reach(state: SimState, particle: tuple[int, int], direction: int) -> int:
    return state.reach(particle, direction)


def sample_event(state: SimState) -> tuple[float, MoveEvent]:
    return state.sample_event()


def apply(state: SimState, event: MoveEvent, dt: float = 0.0) -> SimState:
    state.apply(event, dt)
    return state


def run_until(state: SimState, t_macro: float) -> SimState:
    return state.run_until(t_macro)
