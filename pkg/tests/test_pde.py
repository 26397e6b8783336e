import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from longjump.equilibrium import V
from longjump.pde import (
    AdmissibleSet,
    CFLViolation,
    DomainError,
    Grid,
    G_eval,
    HW_det_closed,
    HW_eval,
    HW_sym,
    HW_trace_closed,
    SlopeEscape,
    W_eval,
    face_slopes,
    lobachevsky_integral,
    max_eigenvalue,
    monotonicity_gap,
    mu_eval,
    rhs_divergence,
    rhs_quasilinear,
    sigma_eval,
    sigma_grad,
    sigma_hess,
    solve,
)

mp.mp.dps = 40
RB = (1 / 3, 1 / 3)


def sine(a=0.025, p=1, q=1):
    return lambda x, y: a * np.sin(2 * np.pi * p * x) * np.sin(2 * np.pi * q * y)


def interior_points(rng, n, margin=0.05):
    out = []
    while len(out) < n:
        x, y = rng.uniform(margin, 1 - margin, 2)
        if x + y < 1 - margin:
            out.append((x, y))
    return np.array(out)


# -- oracles in extended precision ------------------------------------------------


def w1_mp(x, y):
    x, y = mp.mpf(x), mp.mpf(y)
    return -mp.cot(mp.pi * (x + y)) * mp.sin(mp.pi * y) ** 2 / (2 * mp.pi) - y / 4 + mp.sin(2 * mp.pi * y) / (4 * mp.pi)


def lobachevsky_mp(theta):
    return mp.quad(lambda t: mp.log(2 * mp.sin(t)), [0, theta])


# -- W, mu ------------------------------------------------------------------------------


def test_W_at_symmetric_point():
    w1, w2 = W_eval(1 / 3, 1 / 3)
    expect = math.sqrt(3) / (4 * math.pi) - 1 / 12
    assert w1 == pytest.approx(expect, abs=1e-15)
    assert w1 == pytest.approx(0.054499, abs=1e-6)
    assert w2 == w1


def test_W_against_extended_precision():
    for x, y in [(0.2, 0.5), (0.5, 0.2), (0.05, 0.9), (0.7, 0.1)]:
        w1, w2 = W_eval(x, y)
        assert w1 == pytest.approx(float(w1_mp(x, y)), rel=1e-13, abs=1e-15)
        assert w2 == pytest.approx(float(w1_mp(y, x)), rel=1e-13, abs=1e-15)


@given(st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_W_swap_symmetry(x, y):
    if x + y >= 0.99:
        return
    a = W_eval(x, y)
    b = W_eval(y, x)
    assert a[1] == b[0] and a[0] == b[1]


def test_W_domain_error():
    for p in [(0.0, 0.5), (0.5, 0.5), (0.7, 0.4), (-0.1, 0.2)]:
        with pytest.raises(DomainError):
            W_eval(*p)


def test_mu_values(rng):
    assert mu_eval(1 / 3, 1 / 3) == pytest.approx(math.sqrt(3) / (4 * math.pi), rel=1e-15)
    assert mu_eval(1 / 3, 1 / 3) == pytest.approx(0.137832, abs=1e-6)
    for x, y in interior_points(rng, 200, margin=0.01):
        assert mu_eval(x, y) == pytest.approx(mu_eval(y, x), rel=1e-14)
        assert mu_eval(x, y) == pytest.approx(V(x, y) / 2, rel=1e-12)
        assert mu_eval(x, y) > 0


# -- sigma -------------------------------------------------------------------------------


@pytest.mark.parametrize("theta", [1e-6, 0.1, 1.0, math.pi / 3, math.pi / 2, 2.0, 3.0, math.pi - 1e-5])
def test_lobachevsky_against_mpmath(theta):
    assert lobachevsky_integral(theta) == pytest.approx(float(lobachevsky_mp(theta)), abs=1e-12)


def test_lobachevsky_endpoints():
    assert lobachevsky_integral(0.0) == 0.0
    assert abs(lobachevsky_integral(math.pi)) < 1e-14
    with pytest.raises(DomainError):
        lobachevsky_integral(4.0)


def test_sigma_symmetric_point():
    s = sigma_eval(1 / 3, 1 / 3)
    expect = 3 / mp.pi * lobachevsky_mp(mp.pi / 3)
    assert s == pytest.approx(float(expect), abs=1e-12)
    assert s < 0
    gx, gy = sigma_grad(1 / 3, 1 / 3)
    assert abs(gx) < 1e-14 and abs(gy) < 1e-14


def test_sigma_strictly_negative(rng):
    for x, y in interior_points(rng, 30, margin=0.01):
        assert sigma_eval(x, y) < 0


def test_sigma_grad_finite_differences(rng):
    h = 1e-5
    for x, y in interior_points(rng, 20):
        gx, gy = sigma_grad(x, y)
        fx = (sigma_eval(x + h, y) - sigma_eval(x - h, y)) / (2 * h)
        fy = (sigma_eval(x, y + h) - sigma_eval(x, y - h)) / (2 * h)
        assert gx == pytest.approx(fx, rel=1e-6, abs=1e-8)
        assert gy == pytest.approx(fy, rel=1e-6, abs=1e-8)


def test_sigma_hessian_finite_differences(rng):
    h = 1e-4
    for x, y in interior_points(rng, 20):
        H = sigma_hess(x, y)
        s = sigma_eval
        f0 = s(x, y)
        fxx = (s(x + h, y) - 2 * f0 + s(x - h, y)) / h**2
        fyy = (s(x, y + h) - 2 * f0 + s(x, y - h)) / h**2
        fxy = (s(x + h, y + h) - s(x + h, y - h) - s(x - h, y + h) + s(x - h, y - h)) / (4 * h**2)
        fd = np.array([[fxx, fxy], [fxy, fyy]])
        assert np.abs(H - fd).max() <= 1e-5 * np.abs(H).max()


# -- Jacobian ---------------------------------------------------------------------------


def test_HW_symmetric_point():
    H = HW_sym(1 / 3, 1 / 3)
    assert np.trace(H) == pytest.approx(1.0, rel=1e-14)
    assert np.linalg.det(H) == pytest.approx(3 / 16, rel=1e-13)
    assert HW_trace_closed(1 / 3, 1 / 3) == pytest.approx(1.0, rel=1e-14)
    assert HW_det_closed(1 / 3, 1 / 3) == pytest.approx(3 / 16, rel=1e-14)


def test_HW_trace_det_on_grid():
    g = np.linspace(0.005, 0.995, 50)
    X, Y = np.meshgrid(g, g, indexing="ij")
    inside = X + Y < 0.995
    x, y = X[inside], Y[inside]
    H = HW_sym(x, y)
    tr = H[:, 0, 0] + H[:, 1, 1]
    det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
    assert np.abs(tr / HW_trace_closed(x, y) - 1).max() <= 1e-10
    assert np.abs(det / HW_det_closed(x, y) - 1).max() <= 1e-10


def test_HW_positive_definite(rng):
    pts = interior_points(rng, 1000, margin=1e-3)
    ev = np.linalg.eigvalsh(HW_sym(pts[:, 0], pts[:, 1]))
    assert (ev > 0).all()


def test_HW_against_finite_differences_of_W(rng):
    h = 1e-6
    for x, y in interior_points(rng, 50):
        J = HW_eval(x, y)
        cx = (np.array(W_eval(x + h, y)) - np.array(W_eval(x - h, y))) / (2 * h)
        cy = (np.array(W_eval(x, y + h)) - np.array(W_eval(x, y - h))) / (2 * h)
        fd = np.stack([cx, cy], axis=1)
        assert np.abs(J - fd).max() <= 1e-5 * np.abs(J).max()


def test_HW_sym_equals_mobility_times_tension_hessian(rng):
    pts = interior_points(rng, 100, margin=0.01)
    x, y = pts[:, 0], pts[:, 1]
    lhs = HW_sym(x, y)
    rhs = mu_eval(x, y)[:, None, None] * sigma_hess(x, y)
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(lhs).max()


def test_max_eigenvalue():
    assert max_eigenvalue(1 / 3, 1 / 3) == pytest.approx(0.75, rel=1e-13)  # eigenvalues 3/4, 1/4


# -- monotonicity, G ----------------------------------------------------------------------


def test_monotonicity(rng):
    a = interior_points(rng, 10_000, margin=1e-3)
    b = interior_points(rng, 10_000, margin=1e-3)
    assert (monotonicity_gap(a, b) >= -1e-12).all()
    assert monotonicity_gap((0.3, 0.4), (0.3, 0.4)) == 0
    assert monotonicity_gap((0.05, 0.05), (0.45, 0.45)) > 1e-3


def test_G_interior(rng):
    for _ in range(500):
        rho = interior_points(rng, 1, margin=1e-3)[0]
        rb = interior_points(rng, 1, margin=0.1)[0]
        z = rng.uniform(-0.05, 0.05, 2)
        assert G_eval(rho, rb, z) <= 1e-12
    rb, z = (0.3, 0.3), (0.02, -0.01)
    assert G_eval((0.32, 0.29), rb, z) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("r", [0.1, 0.4, 0.8])
def test_G_boundary_branch_is_the_limit(r):
    rb, z = (0.3, 0.35), (0.01, 0.02)
    delta, normal = 1e-7, 1e-11
    # approach (r, 0) with the normal offset vanishing faster than the tangential one
    limit = G_eval((r - delta, normal), rb, z)
    assert G_eval((r, 0.0), rb, z) == pytest.approx(limit, abs=1e-6)
    assert G_eval((0.0, r), rb, z) == pytest.approx(G_eval((normal, r - delta), rb, z), abs=1e-6)
    assert G_eval((r, 0.0), rb, z) <= 1e-12


def test_G_domain():
    with pytest.raises(DomainError):
        G_eval((0.5, 0.6), (0.3, 0.3), (0, 0))
    with pytest.raises(DomainError):
        G_eval((0.3, 0.3), (0.3, 0.3), (0.5, 0.0))


# -- right-hand sides --------------------------------------------------------------------------


def test_rhs_constant_is_zero():
    g = Grid(np.full((32, 32), 0.7))
    assert np.abs(rhs_divergence(g, RB).values).max() < 1e-13
    assert np.abs(rhs_quasilinear(g, RB).values).max() < 1e-13


@pytest.mark.parametrize("N", [32, 64, 128])
def test_rhs_sums_to_zero(N):
    g = Grid.from_function(sine(0.05), N)
    r = rhs_divergence(g, RB).values
    assert abs(r.sum()) <= 1e-10 * N * N


def test_rhs_forms_agree_at_second_order():
    errs = []
    for N in (64, 128, 256):
        g = Grid.from_function(sine(0.05), N)
        d = rhs_divergence(g, RB).values
        q = rhs_quasilinear(g, RB).values
        errs.append(math.sqrt(np.mean((d - q) ** 2)))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.5 <= r <= 4.5 for r in ratios), ratios


def test_linearized_eigenvalue():
    """A tiny single mode decays at the discrete symbol of the Jacobian at rho_bar."""
    N, a = 64, 1e-7
    h = 1 / N
    for p, q in [(1, 0), (0, 2), (3, 0)]:
        g = Grid.from_function(lambda x, y: a * np.sin(2 * np.pi * (p * x + q * y)), N)
        H = HW_sym(*RB)
        symbol = -4 / h**2 * (H[0, 0] * math.sin(math.pi * p * h) ** 2 + H[1, 1] * math.sin(math.pi * q * h) ** 2)
        for rhs in (rhs_quasilinear, rhs_divergence):
            r = rhs(g, RB).values
            k = np.unravel_index(np.abs(g.values).argmax(), g.values.shape)
            assert r[k] / g.values[k] == pytest.approx(symbol, rel=1e-4)


def test_slope_escape_names_the_face():
    g = Grid.from_function(sine(0.3), 32)
    with pytest.raises(SlopeEscape, match="face"):
        rhs_divergence(g, RB)


# -- solver --------------------------------------------------------------------------------------


def test_zero_initial_datum_is_a_fixed_point():
    g = Grid(np.zeros((16, 16)))
    tr = solve(g, RB, 0.05, times=[0.0, 0.02, 0.05])
    for snap in tr.snapshots:
        assert not snap.values.any()
    assert tr.times == [0.0, 0.02, 0.05]


@pytest.mark.parametrize("policy", ["fixed", "adaptive"])
def test_mean_conserved_and_decay(policy):
    g = Grid.from_function(sine(0.025), 32)
    tr = solve(g, RB, 0.05, times=[0.0, 0.025, 0.05], dt_policy=policy)
    assert tr.mean_drift <= 1e-8
    amps = [np.abs(s.values).max() for s in tr.snapshots]
    assert amps[0] > amps[1] > amps[2]
    # sin(2 pi x) sin(2 pi y) splits into the modes x - y and x + y, which decay at
    # 4 pi^2 (H11 + H22 -+ 2 H12); both peak together at x - y = 0, x + y = 1/2
    H = HW_sym(*RB)
    slow, fast = (4 * math.pi**2 * (H[0, 0] + H[1, 1] + s * 2 * H[0, 1]) for s in (-1, 1))
    expect = 0.5 * (math.exp(-slow * 0.05) + math.exp(-fast * 0.05))
    assert amps[2] / amps[0] == pytest.approx(expect, rel=0.03)


def test_self_convergence():
    ts = [0.0, 0.02]
    sols = {N: solve(Grid.from_function(sine(0.05), N), RB, 0.02, times=ts, dt_policy="adaptive").at(0.02)
            for N in (16, 32, 64, 128)}
    diffs = []
    for N in (16, 32, 64):
        fine = sols[2 * N].values[::2, ::2]
        diffs.append(math.sqrt(np.mean((sols[N].values - fine) ** 2)))
    ratios = [diffs[0] / diffs[1], diffs[1] / diffs[2]]
    assert all(3.3 <= r <= 4.7 for r in ratios), ratios


def test_admissible_set_is_preserved():
    g = Grid.from_function(sine(0.025), 32)
    tr = solve(g, RB, 0.2, dt_policy="adaptive", track_admissible=True)
    assert tr.max_excess <= 1e-12
    assert tr.admissible.inside_triangle(margin=0.05)


def test_admissible_set_geometry():
    adm = AdmissibleSet.around([0.3, 0.4, 0.3], [0.3, 0.3, 0.4], n_dirs=64)
    assert adm.excess([0.32], [0.32]) <= 0
    assert adm.excess([0.5], [0.5]) > 0
    assert adm.inside_triangle()


def test_divergent_step_is_detected():
    g = Grid.from_function(sine(0.025), 32)
    with pytest.raises((SlopeEscape, CFLViolation)):
        solve(g, RB, 0.05, c_cfl=3.0, dt_policy="fixed")


def test_blowup_guard():
    g = Grid(np.full((8, 8), 2e6))
    with pytest.raises(CFLViolation):
        solve(g, RB, 1e-3)


def test_face_slopes_of_flat_grid():
    x, y = face_slopes(Grid(np.zeros((8, 8))), RB)
    assert np.allclose(x, 1 / 3) and np.allclose(y, 1 / 3)


def test_grid_csv_roundtrip(tmp_path):
    g = Grid.from_function(sine(0.05), 12, t=0.125)
    path = tmp_path / "g.csv"
    g.to_csv(path, ("note: x",))
    back = Grid.from_csv(path)
    assert back.t == g.t and np.array_equal(back.values, g.values)


def test_grid_interpolation_is_exact_on_nodes_and_periodic():
    g = Grid.from_function(sine(0.05), 16)
    u = np.arange(16) / 16
    X, Y = np.meshgrid(u, u, indexing="ij")
    assert np.allclose(g.interpolate(X, Y), g.values, atol=1e-15)
    assert np.allclose(g.interpolate(X + 1, Y - 2), g.values, atol=1e-15)


def test_steep_initial_datum_is_a_slope_escape():
    with pytest.raises(SlopeEscape, match="x-face"):
        solve(Grid.from_function(sine(0.3), 16), RB, 0.01)
