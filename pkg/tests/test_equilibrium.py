import csv
import itertools
import math

import mpmath as mp
import numpy as np
import pytest
from scipy import stats

from longjump.dynamics import SimState
from longjump.equilibrium import (
    CSV_FIELDS,
    OBSERVABLES,
    EstimatorAccumulator,
    V,
    closed_forms,
    comparison_rows,
    double_occupancy_closed,
    estimate_equilibrium,
    geometric_tail,
    jump_excess_closed,
    snapshot_observables,
    write_csv,
)
from longjump.lattice import TorusGeometry
from longjump.tiling import Tiling, linear_tiling, validate

mp.mp.dps = 30


def v_mp(r1, r2):
    r1, r2 = mp.mpf(r1), mp.mpf(r2)
    return mp.sin(mp.pi * r1) * mp.sin(mp.pi * r2) / (mp.pi * mp.sin(mp.pi * (1 - r1 - r2)))


@pytest.mark.parametrize("rho", [(1 / 3, 1 / 3), (0.2, 0.5), (0.05, 0.9), (0.6, 0.1)])
def test_closed_forms_against_extended_precision(rho):
    r1, r2 = rho
    v = v_mp(*rho)
    assert V(r1, r2) == pytest.approx(float(v), rel=1e-14)
    assert double_occupancy_closed(r1, r2) == pytest.approx(float(r1 * r2 + (1 - r1 - r2) * v), rel=1e-14)
    assert jump_excess_closed(r1, r2) == pytest.approx(float(-r1 * r2 + (r1 + r2) * v), rel=1e-14)


def test_symmetric_point_targets():
    assert double_occupancy_closed(1 / 3, 1 / 3) == pytest.approx(0.20300, abs=5e-6)
    assert jump_excess_closed(1 / 3, 1 / 3) == pytest.approx(0.07267, abs=5e-6)
    assert V(1 / 3, 1 / 3) == pytest.approx(math.sqrt(3) / (2 * math.pi), rel=1e-15)


def test_V_domain():
    for p in [(0, 0.5), (0.5, 0.5), (0.4, -0.1)]:
        with pytest.raises(ValueError):
            V(*p)


def test_snapshot_row_identities(rng):
    from longjump.checks import random_geometry, random_tiling
    from longjump.tiling import scaled_height

    for _ in range(10):
        geom = random_geometry(rng, lo=8, hi=30)
        S = scaled_height(random_tiling(rng, geom))
        vals, hist = snapshot_observables(S, geom)
        d = dict(zip(OBSERVABLES, vals))
        # exact per configuration, not only in expectation
        assert d["reflected_double_occupancy"] == pytest.approx(d["double_occupancy"], abs=1e-15)
        assert d["abs_eps_k"] == pytest.approx(2 * d["half_abs_eps_k_minus_1"] + d["abs_eps"], abs=1e-14)
        assert hist.sum() == round(d["abs_eps"] * geom.L**2)
        assert hist[0] == 0


def test_chain_samples_the_uniform_measure():
    """On a tiny torus every tiling is enumerable; visit frequencies must be flat."""
    geom = TorusGeometry(4, (1, 1, 2))
    states = {
        Tiling.from_lists(geom, c).columns.tobytes()
        for c in itertools.product(itertools.combinations(range(4), 2), repeat=4)
        if validate(Tiling.from_lists(geom, c))
    }
    assert len(states) == 124
    index = {k: i for i, k in enumerate(sorted(states))}
    s = SimState(linear_tiling(geom), seed=7)
    counts = np.zeros(len(index))
    n, gap, t = 12_000, 1.0, 5.0
    s.run_until(t)
    for _ in range(n):
        t += gap
        s.run_until(t)
        counts[index[s.tiling.columns.tobytes()]] += 1
    assert (counts > 0).all()
    chi2 = ((counts - n / len(index)) ** 2 / (n / len(index))).sum()
    assert chi2 < stats.chi2.ppf(0.999, len(index) - 1)


def test_accumulator_batch_means_and_merge():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(103, 5))
    a = EstimatorAccumulator(8)
    for row in data:
        a.add(row, np.zeros(9, dtype=np.int64))
    est, err = a.batch_means(10)
    tail = data[3:].reshape(10, 10, 5).mean(axis=1)
    assert np.allclose(est, tail.mean(axis=0))
    assert np.allclose(err, tail.std(axis=0, ddof=1) / math.sqrt(10))
    assert np.allclose(a.mean(), data.mean(axis=0))
    assert np.allclose(a.sums_sq, (data**2).sum(axis=0))
    b = EstimatorAccumulator(8)
    b.add(data[0], np.arange(9))
    m = a.merge(b)
    assert m.n_samples == 104 and m.k_hist[3] == 3
    with pytest.raises(ValueError):
        a.merge(EstimatorAccumulator(9))
    with pytest.raises(ValueError):
        EstimatorAccumulator(8).batch_means(10)


def test_geometric_tail_recovers_the_rate():
    acc = EstimatorAccumulator(60)
    hist = np.zeros(61, dtype=np.int64)
    # k ~ Geometric(p) on {1, 2, ...}: survival ratio 1 - p
    p = 0.3
    j = np.arange(1, 61)
    hist[1:] = np.round(1e7 * p * (1 - p) ** (j - 1)).astype(np.int64)
    acc.add(np.zeros(5), hist)
    fit = geometric_tail(acc)
    assert fit.rate == pytest.approx(1 - p, rel=1e-3)
    surv = acc.survival()
    assert surv[0] == surv[1] == 1.0
    assert (np.diff(surv) <= 0).all()


def test_burn_in_floor():
    geom = TorusGeometry.from_density(16, (1 / 3, 1 / 3))
    with pytest.raises(ValueError):
        estimate_equilibrium(geom, burn_in_macro=1.0, n_samples=10)


def test_short_run_matches_closed_forms(tmp_path):
    geom = TorusGeometry.from_density(24, (1 / 3, 1 / 3))
    acc = estimate_equilibrium(geom, burn_in_macro=15.0, n_samples=120, gap_macro=1.0, seed=3,
                               min_burn_in_factor=1.0)
    assert acc.n_samples == 120
    rows = comparison_rows(acc, geom, n_batches=12)
    assert [r["observable"] for r in rows] == list(OBSERVABLES)
    for r in rows:
        assert abs(r["z_score"]) < 4.5, r
        # the closed forms are taken at the realized density m / L
        assert r["closed_form"] == closed_forms(*geom.rho)[r["observable"]]
    # the tail of the jump length is geometric
    fit = geometric_tail(acc)
    assert 0 < fit.rate < 1 and fit.worst_ratio < 1
    path = tmp_path / "eq.csv"
    write_csv(path, rows, ("config: {}", "seed: 3"))
    lines = path.read_text().splitlines()
    assert lines[:2] == ["# config: {}", "# seed: 3"]
    back = list(csv.DictReader(lines[2:]))
    assert tuple(back[0]) == CSV_FIELDS
    assert float(back[0]["estimate"]) == rows[0]["estimate"]


def test_estimates_are_seed_deterministic():
    geom = TorusGeometry.from_density(12, (0.25, 0.5))
    kw = dict(burn_in_macro=3.0, n_samples=5, gap_macro=0.5, min_burn_in_factor=1.0)
    a = estimate_equilibrium(geom, seed=5, **kw)
    b = estimate_equilibrium(geom, seed=5, **kw)
    assert np.array_equal(np.array(a.rows), np.array(b.rows))
