"""Conservative finite differences for ``d/dt psi = div W(grad psi + rho_bar)`` on the unit torus.

Nodes sit at ``(i h, j h)`` with ``h = 1 / N``; ``values[i, j]`` is the value at
``x1 = i h, x2 = j h``.  Fluxes live on cell faces: the normal slope is a
forward difference, the transverse one the average of the two adjacent central
differences.  The update is a flux difference, so the grid sum of the
right-hand side telescopes to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .coefficients import PI, in_triangle, max_eigenvalue, mu_eval, sigma_hess

SLOPE_MARGIN = 1e-6
BLOWUP = 1e6
MEAN_TOL = 1e-8


class SlopeEscape(ArithmeticError):
    """A face slope left the admissible triangle (with margin)."""


class CFLViolation(ArithmeticError):
    """The explicit scheme blew up."""


@dataclass
class Grid:
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError(f"grid must be square, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid holds non-finite values")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @classmethod
    def from_function(cls, f, N: int, t: float = 0.0) -> "Grid":
        x = np.arange(N) / N
        X, Y = np.meshgrid(x, x, indexing="ij")
        return cls(f(X, Y), t)

    def interpolate(self, x, y) -> np.ndarray:
        """Periodic bilinear interpolation at points of the unit torus."""
        N = self.N
        gx = np.mod(np.asarray(x, dtype=float), 1.0) * N
        gy = np.mod(np.asarray(y, dtype=float), 1.0) * N
        i0 = np.floor(gx).astype(np.int64)
        j0 = np.floor(gy).astype(np.int64)
        fx, fy = gx - i0, gy - j0
        i0 %= N
        j0 %= N
        i1, j1 = (i0 + 1) % N, (j0 + 1) % N
        v = self.values
        return (
            (1 - fx) * (1 - fy) * v[i0, j0]
            + fx * (1 - fy) * v[i1, j0]
            + (1 - fx) * fy * v[i0, j1]
            + fx * fy * v[i1, j1]
        )

    # -- CSV snapshot ---------------------------------------------------------

    def to_csv(self, path, header_lines: tuple[str, ...] = ()) -> None:
        with open(path, "w") as fh:
            for ln in header_lines:
                fh.write(f"# {ln}\n")
            fh.write(f"{self.N} {self.t!r}\n")
            for row in self.values:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Grid":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
        n_str, t_str = lines[0].split()
        N = int(n_str)
        vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        if vals.shape != (N, N):
            raise ValueError(f"expected {N}x{N} values, got {vals.shape}")
        return cls(vals, float(t_str))


# -- compiled kernel ------------------------------------------------------------


@njit(cache=True, nogil=True)
def _face(a, b, margin, dirs, support):
    """Flux ``W1(a, b)`` and trace of the symmetrized Jacobian; updates the support values."""
    for k in range(dirs.shape[0]):
        v = dirs[k, 0] * a + dirs[k, 1] * b
        if v > support[k]:
            support[k] = v
    sa = math.sin(PI * a)
    ca = math.cos(PI * a)
    sb = math.sin(PI * b)
    cb = math.cos(PI * b)
    ss = sa * cb + ca * sb
    cs = ca * cb - sa * sb
    flux = -cs / ss * sb * sb / (2 * PI) - b / 4 + sb * cb / (2 * PI)
    return flux, 0.5 * (sa * sa + sb * sb) / (ss * ss)


@njit(cache=True, nogil=True)
def _divergence(psi, r1, r2, margin, out, dirs, support):
    """Fill ``out`` with the flux divergence.

    Returns ``(code, i, j, max_trace)``: code 0 on success, 1 or 2 if the first
    bad face is an x- or y-face at ``(i, j)``.  ``max_trace`` bounds the
    largest eigenvalue of the symmetrized Jacobian over all faces, and
    ``support[k]`` is raised to ``max dirs[k] . slope``.
    """
    N = psi.shape[0]
    inv_h = float(N)
    F1 = np.empty((N, N))
    F2 = np.empty((N, N))
    max_tr = 0.0
    for i in range(N):
        ip = i + 1 if i < N - 1 else 0
        im = i - 1 if i > 0 else N - 1
        for j in range(N):
            jp = j + 1 if j < N - 1 else 0
            jm = j - 1 if j > 0 else N - 1
            # x-face between (i, j) and (i+1, j)
            a = (psi[ip, j] - psi[i, j]) * inv_h + r1
            b = (psi[i, jp] - psi[i, jm] + psi[ip, jp] - psi[ip, jm]) * 0.25 * inv_h + r2
            if not (a > margin and b > margin and a + b < 1.0 - margin):
                return 1, i, j, max_tr
            F1[i, j], tr = _face(a, b, margin, dirs, support)
            max_tr = max(max_tr, tr)
            # y-face between (i, j) and (i, j+1); W2(a, b) = W1(b, a)
            b = (psi[i, jp] - psi[i, j]) * inv_h + r2
            a = (psi[ip, j] - psi[im, j] + psi[ip, jp] - psi[im, jp]) * 0.25 * inv_h + r1
            if not (a > margin and b > margin and a + b < 1.0 - margin):
                return 2, i, j, max_tr
            F2[i, j], tr = _face(b, a, margin, dirs, support)
            max_tr = max(max_tr, tr)
    for i in range(N):
        im = i - 1 if i > 0 else N - 1
        for j in range(N):
            jm = j - 1 if j > 0 else N - 1
            out[i, j] = (F1[i, j] - F1[im, j] + F2[i, j] - F2[i, jm]) * inv_h
    return 0, 0, 0, max_tr


_NO_DIRS = np.zeros((0, 2))
_NO_SUPPORT = np.zeros(0)


def _raise_escape(code, i, j, N):
    face = f"x-face ({i + 0.5}, {j})" if code == 1 else f"y-face ({i}, {j + 0.5})"
    raise SlopeEscape(f"slope left the admissible triangle at {face} on the {N}x{N} grid")


def rhs_divergence(g: Grid, rho_bar, margin: float = SLOPE_MARGIN) -> Grid:
    out = np.empty_like(g.values)
    code, i, j, _ = _divergence(g.values, float(rho_bar[0]), float(rho_bar[1]), margin, out, _NO_DIRS, _NO_SUPPORT)
    if code:
        _raise_escape(code, i, j, g.N)
    return Grid(out, g.t)


def rhs_quasilinear(g: Grid, rho_bar, margin: float = SLOPE_MARGIN) -> Grid:
    """``mu(p) sum_ij sigma_ij(p) d_ij psi`` with ``p = grad psi + rho_bar``, central differences."""
    v = g.values
    N = g.N

    def sh(a, b):
        return np.roll(v, (-a, -b), axis=(0, 1))

    px = (sh(1, 0) - sh(-1, 0)) * (N / 2)
    py = (sh(0, 1) - sh(0, -1)) * (N / 2)
    pxx = (sh(1, 0) - 2 * v + sh(-1, 0)) * N**2
    pyy = (sh(0, 1) - 2 * v + sh(0, -1)) * N**2
    pxy = (sh(1, 1) - sh(1, -1) - sh(-1, 1) + sh(-1, -1)) * (N**2 / 4)
    a = px + rho_bar[0]
    b = py + rho_bar[1]
    bad = ~((a > margin) & (b > margin) & (a + b < 1 - margin))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise SlopeEscape(f"slope left the admissible triangle at node ({i}, {j}) on the {N}x{N} grid")
    S = sigma_hess(a, b)
    out = mu_eval(a, b) * (S[..., 0, 0] * pxx + 2 * S[..., 0, 1] * pxy + S[..., 1, 1] * pyy)
    return Grid(out, g.t)


# -- time stepping ----------------------------------------------------------------


def face_slopes(g: Grid, rho_bar) -> tuple[np.ndarray, np.ndarray]:
    """All staggered slopes ``grad psi + rho_bar`` (x-faces then y-faces), flattened."""
    v, N = g.values, g.N

    def sh(a, b):
        return np.roll(v, (-a, -b), axis=(0, 1))

    gx1 = (sh(1, 0) - v) * N
    gy1 = (sh(0, 1) - sh(0, -1) + sh(1, 1) - sh(1, -1)) * (N / 4)
    gy2 = (sh(0, 1) - v) * N
    gx2 = (sh(1, 0) - sh(-1, 0) + sh(1, 1) - sh(-1, 1)) * (N / 4)
    x = np.concatenate([gx1.ravel(), gx2.ravel()]) + rho_bar[0]
    y = np.concatenate([gy1.ravel(), gy2.ravel()]) + rho_bar[1]
    return x, y


@dataclass(frozen=True)
class AdmissibleSet:
    """Convex polygon ``{p : dirs[k] . p <= support[k]}`` enclosing a set of slopes."""

    dirs: np.ndarray
    support: np.ndarray

    @classmethod
    def around(cls, x, y, n_dirs: int = 32) -> "AdmissibleSet":
        ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        pts = np.stack([np.ravel(x), np.ravel(y)], axis=1)
        return cls(dirs, (pts @ dirs.T).max(axis=0))

    @classmethod
    def of_grid(cls, g: Grid, rho_bar, n_dirs: int = 32) -> "AdmissibleSet":
        return cls.around(*face_slopes(g, rho_bar), n_dirs=n_dirs)

    def excess(self, x, y) -> float:
        """Largest violation of a defining half-plane (<= 0 when every point is inside)."""
        pts = np.stack([np.ravel(x), np.ravel(y)], axis=1)
        return float(((pts @ self.dirs.T) - self.support).max())

    def inside_triangle(self, margin: float = 0.0) -> bool:
        """Whether the polygon itself lies in the open triangle (vertex check)."""
        n = len(self.support)
        xs, ys = [], []
        for k in range(n):
            A = np.array([self.dirs[k], self.dirs[(k + 1) % n]])
            px, py = np.linalg.solve(A, [self.support[k], self.support[(k + 1) % n]])
            xs.append(px)
            ys.append(py)
        return bool(np.all((np.array(xs) > margin) & (np.array(ys) > margin) & (np.array(xs) + np.array(ys) < 1 - margin)))


@dataclass
class Trajectory:
    snapshots: list[Grid]
    rho_bar: tuple[float, float]
    policy: str
    steps: int
    min_dt: float
    lambda_max: float
    mean_drift: float
    admissible: AdmissibleSet
    max_excess: float | None = None  # worst half-plane violation over all steps, if tracked

    @property
    def times(self) -> list[float]:
        return [g.t for g in self.snapshots]

    def at(self, t: float) -> Grid:
        for g in self.snapshots:
            if abs(g.t - t) <= 1e-12 * max(1.0, abs(t)):
                return g
        raise KeyError(f"no snapshot at t={t}; have {self.times}")

    def manifest(self) -> dict:
        return {
            "N": self.snapshots[0].N,
            "rho_bar": list(self.rho_bar),
            "times": self.times,
            "dt_policy": self.policy,
            "steps": self.steps,
            "min_dt": self.min_dt,
            "lambda_max_initial": self.lambda_max,
            "mean_drift": self.mean_drift,
            "max_admissible_excess": self.max_excess,
        }


def solve(
    psi0: Grid,
    rho_bar,
    t_final: float,
    times=None,
    c_cfl: float = 0.2,
    dt_policy: str = "adaptive",
    track_admissible: bool = False,
    n_dirs: int = 32,
) -> Trajectory:
    """Explicit Euler on the divergence form, landing exactly on each output time.

    ``dt_policy="fixed"`` uses ``c_cfl h^2 / lambda_max`` with ``lambda_max`` the
    largest eigenvalue of the symmetrized Jacobian over the initial slopes.
    ``"adaptive"`` recomputes the bound every step from the current faces,
    using the trace as an upper bound for the largest eigenvalue; since slopes
    never leave their initial hull this step is never smaller than the fixed one
    by more than the trace/eigenvalue ratio, and it grows as steep regions relax.
    """
    if dt_policy not in ("fixed", "adaptive"):
        raise ValueError(f"unknown dt_policy {dt_policy!r}")
    rho_bar = (float(rho_bar[0]), float(rho_bar[1]))
    times = sorted({float(t) for t in (times if times is not None else [])} | {psi0.t, float(t_final)})
    if times[0] < psi0.t:
        raise ValueError("output times precede the initial time")
    x0, y0 = face_slopes(psi0, rho_bar)
    outside = np.flatnonzero(~in_triangle(x0, y0, SLOPE_MARGIN))
    if outside.size:
        k, n = int(outside[0]), psi0.N
        _raise_escape(1 if k < n * n else 2, *divmod(k % (n * n), n), n)
    adm = AdmissibleSet.around(x0, y0, n_dirs)
    lam = max_eigenvalue(x0, y0)
    h2 = psi0.h**2
    dt_fixed = c_cfl * h2 / lam

    psi = psi0.values.copy()
    mean0 = float(psi.mean())
    rhs = np.empty_like(psi)
    if track_admissible:
        dirs = np.ascontiguousarray(adm.dirs)
        support = np.empty(n_dirs)
        worst = -np.inf
    else:
        dirs, support = _NO_DIRS, _NO_SUPPORT
    snaps: list[Grid] = []
    t, steps, min_dt = psi0.t, 0, np.inf
    for target in times:
        if dt_policy == "fixed" and target > t:
            n = int(math.ceil((target - t) / dt_fixed - 1e-9))
            fixed_step = (target - t) / n
        while t < target:
            if track_admissible:
                support.fill(-np.inf)
            code, i, j, max_tr = _divergence(psi, rho_bar[0], rho_bar[1], SLOPE_MARGIN, rhs, dirs, support)
            if code:
                _raise_escape(code, i, j, psi0.N)
            if track_admissible:
                worst = max(worst, float((support - adm.support).max()))
            if dt_policy == "fixed":
                step = fixed_step
                last = target - t <= 1.5 * step
            else:
                step = c_cfl * h2 / max_tr
                last = target - t <= step * (1 + 1e-12)
            if last:
                step = target - t
            psi += step * rhs
            t = target if last else t + step
            steps += 1
            min_dt = min(min_dt, step)
            if not np.abs(psi).max() <= BLOWUP:
                raise CFLViolation(f"|psi| exceeded {BLOWUP:g} after {steps} steps (dt={step:g}, h={psi0.h:g})")
        snaps.append(Grid(psi.copy(), target))
    if track_admissible:
        # final state has not been through the kernel yet
        x, y = face_slopes(snaps[-1], rho_bar)
        worst = max(worst, adm.excess(x, y))
    drift = abs(float(psi.mean()) - mean0)
    return Trajectory(snaps, rho_bar, dt_policy, steps, float(min_dt), lam, drift, adm,
                      worst if track_admissible else None)


def write_trajectory(traj: Trajectory, outdir, header_lines: tuple[str, ...] = ()) -> list[Path]:
    import json

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, g in enumerate(traj.snapshots):
        p = outdir / f"snapshot_{k:03d}.csv"
        g.to_csv(p, header_lines)
        paths.append(p)
    man = traj.manifest() | {"files": [p.name for p in paths]}
    (outdir / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return paths
