"""Co-evolution of the particle system and the limiting equation.

For each system size the initial tiling is the rounding of ``L psi0(u / L)``;
the chain is then advanced to each observation time and compared with one
shared PDE trajectory through the mean squared height discrepancy
``D_L(t) = L^-2 sum_u (H(u, t) / L - psi(u / L, t))^2``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .dynamics import SimState
from .lattice import TorusGeometry
from .pde import Grid, Trajectory, in_triangle, solve
from .tiling import from_profile

logger = logging.getLogger(__name__)


class PlanError(ValueError):
    """An experiment plan that violates its own admissibility requirements."""


@dataclass(frozen=True)
class SineProfile:
    """``psi0(x, y) = a sum_(p, q) sin(2 pi p x) sin(2 pi q y)``."""

    amplitude: float = 0.025
    modes: tuple[tuple[int, int], ...] = ((1, 1),)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for p, q in self.modes:
            out = out + np.sin(2 * np.pi * p * x) * np.sin(2 * np.pi * q * y)
        return self.amplitude * out

    def gradient(self, x, y):
        gx = np.zeros(np.broadcast(x, y).shape)
        gy = np.zeros_like(gx)
        for p, q in self.modes:
            gx = gx + 2 * np.pi * p * np.cos(2 * np.pi * p * x) * np.sin(2 * np.pi * q * y)
            gy = gy + 2 * np.pi * q * np.sin(2 * np.pi * p * x) * np.cos(2 * np.pi * q * y)
        return self.amplitude * gx, self.amplitude * gy


def default_replicas(L: int) -> int:
    return 32 if L <= 64 else 8


@dataclass(frozen=True)
class ExperimentPlan:
    profile: SineProfile = SineProfile()
    rho_bar: tuple[float, float] = (1 / 3, 1 / 3)
    sizes: tuple[int, ...] = (32, 64, 128)
    replicas: tuple[int, ...] | None = None  # per size; None means default_replicas
    times: tuple[float, ...] = (0.0, 0.05, 0.1)
    grid: int = 256
    seed: int = 0
    margin: float = 0.02
    c_cfl: float = 0.2
    dt_policy: str = "fixed"

    def replica_count(self, L: int) -> int:
        if self.replicas is None:
            return default_replicas(L)
        return self.replicas[self.sizes.index(L)]

    def geometry(self, L: int) -> TorusGeometry:
        return TorusGeometry.from_density(L, self.rho_bar)

    def validate(self) -> None:
        if self.replicas is not None and len(self.replicas) != len(self.sizes):
            raise PlanError("replicas must list one count per size")
        if any(t < 0 for t in self.times) or list(self.times) != sorted(self.times):
            raise PlanError("times must be nonnegative and increasing")
        if float(self.profile(0.0, 0.0)) != 0.0:
            raise PlanError("profile must vanish at the origin")
        x = np.linspace(0, 1, 257)
        gx, gy = self.profile.gradient(*np.meshgrid(x, x, indexing="ij"))
        centres = [self.rho_bar] + [self.geometry(L).rho for L in self.sizes]
        for c in centres:
            if not np.all(in_triangle(gx + c[0], gy + c[1], self.margin)):
                raise PlanError(
                    f"profile slopes around {c} reach within {self.margin} of the triangle boundary; "
                    "lower the amplitude"
                )

    def seed_for(self, L: int, replica: int) -> int:
        ss = np.random.SeedSequence(self.seed, spawn_key=(L, replica))
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    def to_json(self) -> dict:
        d = asdict(self)
        d["replicas"] = [self.replica_count(L) for L in self.sizes]
        d["realized_densities"] = {str(L): list(self.geometry(L).m) for L in self.sizes}
        return d


@dataclass(frozen=True)
class ConvergenceRecord:
    L: int
    t: float
    replica: int
    seed: int
    D: float
    mean_height: float
    events: int
    wall_ms: float


RECORD_FIELDS = ("L", "t", "replica", "seed", "D", "mean_height", "events", "wall_ms")


def lattice_values(psi: Grid, L: int) -> np.ndarray:
    """``psi(u / L)`` at every vertex ``u``, indexed ``[u1, u2]``."""
    u = np.arange(L) / L
    X, Y = np.meshgrid(u, u, indexing="ij")
    return psi.interpolate(X, Y)


def distance(state: SimState, psi: Grid, psi_on_lattice: np.ndarray | None = None) -> float:
    """``L^-2 sum_u (H(u) / L - psi(u / L))^2`` with ``H = S / L``."""
    L = state.L
    target = lattice_values(psi, L) if psi_on_lattice is None else psi_on_lattice
    if target.shape != (L, L):
        raise ValueError(f"psi sampled on {target.shape}, state has L={L}")
    diff = state.height / L**2 - target
    return float(np.mean(diff * diff))


def mean_height(state: SimState) -> float:
    return float(state.height.mean()) / state.L**2


def solve_plan_pde(plan: ExperimentPlan) -> Trajectory:
    psi0 = Grid.from_function(plan.profile, plan.grid)
    return solve(psi0, plan.rho_bar, max(plan.times), times=plan.times, c_cfl=plan.c_cfl,
                 dt_policy=plan.dt_policy)


def run_replica(plan: ExperimentPlan, L: int, replica: int, traj: Trajectory,
                samples: dict[float, np.ndarray] | None = None) -> list[ConvergenceRecord]:
    geom = plan.geometry(L)
    seed = plan.seed_for(L, replica)
    start = time.perf_counter()
    state = SimState(from_profile(plan.profile, geom), seed=seed)
    out = []
    for t in plan.times:
        state.run_until(t)
        psi = traj.at(t)
        target = samples[t] if samples is not None else None
        out.append(ConvergenceRecord(
            L, t, replica, seed, distance(state, psi, target), mean_height(state),
            state.events_applied, round((time.perf_counter() - start) * 1e3, 3),
        ))
    return out


def run_plan(plan: ExperimentPlan, traj: Trajectory | None = None) -> Iterator[ConvergenceRecord]:
    """Yield records ordered by ``(L, replica, t)``."""
    plan.validate()
    if traj is None:
        traj = solve_plan_pde(plan)
    for L in plan.sizes:
        samples = {t: lattice_values(traj.at(t), L) for t in plan.times}
        for r in range(plan.replica_count(L)):
            recs = run_replica(plan, L, r, traj, samples)
            logger.info("L=%d replica %d: D(t_final)=%.3e", L, r, recs[-1].D)
            yield from recs


@dataclass
class SummaryRow:
    L: int
    t: float
    replicas: int
    D_mean: float
    D_stderr: float
    mean_height_mean: float
    mean_height_stderr: float


SUMMARY_FIELDS = tuple(SummaryRow.__dataclass_fields__)


def summarize(records: list[ConvergenceRecord]) -> list[SummaryRow]:
    keys = sorted({(r.L, r.t) for r in records})
    rows = []
    for L, t in keys:
        d = np.array([r.D for r in records if r.L == L and r.t == t])
        h = np.array([r.mean_height for r in records if r.L == L and r.t == t])
        n = len(d)
        se = (lambda a: float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan)
        rows.append(SummaryRow(L, t, n, float(d.mean()), se(d), float(h.mean()), se(h)))
    return rows


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def write_records(path, records, header_lines: tuple[str, ...] = (), timing: bool = True) -> None:
    fields = RECORD_FIELDS if timing else RECORD_FIELDS[:-1]
    with open(path, "w", newline="") as fh:
        for ln in header_lines:
            fh.write(f"# {ln}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in records:
            w.writerow([_fmt(getattr(r, f)) for f in fields])
            fh.flush()


def write_summary(path, rows: list[SummaryRow], header_lines: tuple[str, ...] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for ln in header_lines:
            fh.write(f"# {ln}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow([_fmt(getattr(r, f)) for f in SUMMARY_FIELDS])


def write_manifest(path, plan: ExperimentPlan, traj: Trajectory, extra: dict | None = None) -> None:
    doc = {"plan": plan.to_json(), "pde": traj.manifest()} | (extra or {})
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class TrendCheck:
    nonincreasing: bool
    small: bool
    detail: list[str] = field(default_factory=list)


def trend_check(rows: list[SummaryRow], t: float, sizes: tuple[int, ...]) -> TrendCheck:
    """``D(t)`` nonincreasing in ``L`` within one combined standard error, and small at the largest ``L``."""
    by = {(r.L, r.t): r for r in rows}
    ok = True
    detail = []
    for a, b in zip(sizes, sizes[1:]):
        ra, rb = by[(a, t)], by[(b, t)]
        tol = math.hypot(ra.D_stderr, rb.D_stderr)
        good = rb.D_mean <= ra.D_mean + tol
        ok &= good
        detail.append(f"D_{b}={rb.D_mean:.3e} vs D_{a}={ra.D_mean:.3e} (+{tol:.1e}): {'ok' if good else 'rises'}")
    big = sizes[-1]
    bound = max(2 * by[(big, 0.0)].D_mean, 0.01)
    small = by[(big, t)].D_mean <= bound
    detail.append(f"D_{big}({t})={by[(big, t)].D_mean:.3e} <= {bound:.3e}: {small}")
    return TrendCheck(ok, small, detail)
