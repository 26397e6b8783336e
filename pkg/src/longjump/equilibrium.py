"""Equilibrium statistics of the long-jump chain against closed-form Gibbs expectations.

The chain is started from the linear tiling, run for a burn-in, then sampled
at regular macroscopic intervals.  Every snapshot contributes the spatial
average of each local observable, and error bars come from batch means over
the snapshot sequence.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SimState
from .lattice import TorusGeometry, shift
from .tiling import epsilon_field, k_field, linear_tiling, occupations

logger = logging.getLogger(__name__)

OBSERVABLES = (
    "double_occupancy",  # b1(u) and b2(u) both occupied
    "reflected_double_occupancy",  # b1(u - e1) and b2(u - e2) both occupied
    "abs_eps",
    "half_abs_eps_k_minus_1",  # |eps| (k - 1) / 2
    "abs_eps_k",
)


def V(rho1: float, rho2: float) -> float:
    """``(1/pi) sin(pi rho1) sin(pi rho2) / sin(pi (1 - rho1 - rho2))`` on the open triangle."""
    if not (rho1 > 0 and rho2 > 0 and rho1 + rho2 < 1):
        raise ValueError(f"density ({rho1}, {rho2}) outside the open triangle")
    return math.sin(math.pi * rho1) * math.sin(math.pi * rho2) / (math.pi * math.sin(math.pi * (1 - rho1 - rho2)))


def double_occupancy_closed(rho1: float, rho2: float) -> float:
    return rho1 * rho2 + (1 - rho1 - rho2) * V(rho1, rho2)


def jump_excess_closed(rho1: float, rho2: float) -> float:
    """Expected ``|eps| (k - 1) / 2``."""
    return -rho1 * rho2 + (rho1 + rho2) * V(rho1, rho2)


def closed_forms(rho1: float, rho2: float) -> dict[str, float]:
    d = double_occupancy_closed(rho1, rho2)
    j = jump_excess_closed(rho1, rho2)
    return {
        "double_occupancy": d,
        "reflected_double_occupancy": d,
        "abs_eps": 2 * d,
        "half_abs_eps_k_minus_1": j,
        "abs_eps_k": 2 * (j + d),
    }


def snapshot_observables(S: np.ndarray, geom: TorusGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Spatial averages of :data:`OBSERVABLES` and the histogram of ``k`` over sites with ``eps != 0``."""
    eta = occupations(S, geom)
    e1, e2 = eta[0].astype(np.int64), eta[1].astype(np.int64)
    eps = epsilon_field(eta)
    k = k_field(eta, eps)
    a = np.abs(eps)
    vals = np.array([
        (e1 * e2).mean(),
        (shift(e1, 1, -1) * shift(e2, 2, -1)).mean(),
        a.mean(),
        (a * (k - 1)).mean() / 2,
        (a * k).mean(),
    ])
    hist = np.bincount(k[a > 0], minlength=geom.L + 1)
    return vals, hist


@dataclass
class EstimatorAccumulator:
    """Per-snapshot spatial averages plus a pooled ``k`` histogram.

    Rows are kept in sampling order so that batch means see the
    autocorrelation; merging concatenates (independent chains).
    """

    L: int
    rows: list[np.ndarray] = field(default_factory=list)
    k_hist: np.ndarray | None = None

    def __post_init__(self):
        if self.k_hist is None:
            self.k_hist = np.zeros(self.L + 1, dtype=np.int64)

    def add(self, values: np.ndarray, hist: np.ndarray) -> None:
        self.rows.append(np.asarray(values, dtype=float))
        self.k_hist += hist

    def merge(self, other: "EstimatorAccumulator") -> "EstimatorAccumulator":
        if other.L != self.L:
            raise ValueError("cannot merge accumulators of different L")
        return EstimatorAccumulator(self.L, self.rows + other.rows, self.k_hist + other.k_hist)

    @property
    def n_samples(self) -> int:
        return len(self.rows)

    @property
    def sums(self) -> np.ndarray:
        return np.sum(self.rows, axis=0)

    @property
    def sums_sq(self) -> np.ndarray:
        return np.sum(np.square(self.rows), axis=0)

    def mean(self) -> np.ndarray:
        return self.sums / self.n_samples

    def batch_means(self, n_batches: int = 20) -> tuple[np.ndarray, np.ndarray]:
        """``(estimate, stderr)`` from ``n_batches`` equal batches (leading remainder dropped)."""
        n = self.n_samples
        if n < 2 * n_batches:
            raise ValueError(f"need at least {2 * n_batches} snapshots for {n_batches} batches, have {n}")
        size = n // n_batches
        X = np.asarray(self.rows[n - size * n_batches :])
        B = X.reshape(n_batches, size, -1).mean(axis=1)
        return B.mean(axis=0), B.std(axis=0, ddof=1) / math.sqrt(n_batches)

    def survival(self) -> np.ndarray:
        """``P(k >= j)`` for ``j = 0..L`` from the pooled histogram."""
        h = self.k_hist.astype(float)
        return np.cumsum(h[::-1])[::-1] / h.sum()


@dataclass(frozen=True)
class TailFit:
    start: int
    stop: int
    rate: float  # fitted ratio P(k >= j+1) / P(k >= j)
    worst_ratio: float


def geometric_tail(acc: EstimatorAccumulator, min_count: int = 50) -> TailFit:
    """Fit ``log P(k >= j)`` linearly from the mode on, over ``j`` with at least ``min_count`` hits."""
    surv = acc.survival()
    counts = np.cumsum(acc.k_hist[::-1])[::-1]
    start = int(np.argmax(acc.k_hist))
    stop = int(np.flatnonzero(counts >= min_count).max())
    if stop - start < 2:
        raise ValueError("not enough tail data to fit")
    j = np.arange(start, stop + 1)
    slope = np.polyfit(j, np.log(surv[j]), 1)[0]
    ratios = surv[j[1:]] / surv[j[:-1]]
    return TailFit(start, stop, float(math.exp(slope)), float(ratios.max()))


def estimate_equilibrium(
    geom: TorusGeometry,
    burn_in_macro: float | None = None,
    n_samples: int = 200,
    gap_macro: float = 1.0,
    seed: int = 0,
    min_burn_in_factor: float = 10.0,
) -> EstimatorAccumulator:
    """Run one chain from the linear tiling and collect ``n_samples`` snapshots.

    The burn-in defaults to ``10 ln L`` macroscopic units and must not be
    shorter than ``min_burn_in_factor * ln L``.
    """
    floor = min_burn_in_factor * math.log(geom.L)
    if burn_in_macro is None:
        burn_in_macro = 10.0 * math.log(geom.L)
    if burn_in_macro < floor:
        raise ValueError(f"burn-in {burn_in_macro} below {min_burn_in_factor} ln L = {floor:.3f}")
    state = SimState(linear_tiling(geom), seed=seed)
    state.run_until(burn_in_macro)
    acc = EstimatorAccumulator(geom.L)
    t = burn_in_macro
    for s in range(n_samples):
        t += gap_macro
        state.run_until(t)
        acc.add(*snapshot_observables(state.height, geom))
        if (s + 1) % 50 == 0:
            logger.info("L=%d: %d/%d snapshots", geom.L, s + 1, n_samples)
    return acc


def comparison_rows(acc: EstimatorAccumulator, geom: TorusGeometry, n_batches: int = 20) -> list[dict]:
    """One row per observable; closed forms are evaluated at the realized density ``m / L``."""
    est, err = acc.batch_means(n_batches)
    r1, r2 = geom.rho
    targets = closed_forms(r1, r2)
    rows = []
    for name, e, s in zip(OBSERVABLES, est, err):
        c = targets[name]
        rows.append({
            "L": geom.L,
            "rho1": r1,
            "rho2": r2,
            "observable": name,
            "estimate": float(e),
            "stderr": float(s),
            "closed_form": c,
            "z_score": float((e - c) / s) if s > 0 else (0.0 if e == c else math.inf),
        })
    return rows


CSV_FIELDS = ("L", "rho1", "rho2", "observable", "estimate", "stderr", "closed_form", "z_score")


def write_csv(path, rows: list[dict], header_lines: tuple[str, ...] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for ln in header_lines:
            fh.write(f"# {ln}\n")
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
