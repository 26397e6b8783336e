"""Slope-dependent coefficients of the hydrodynamic equation.

Slopes live in the open triangle ``x > 0, y > 0, x + y < 1``.  Every function
accepts scalars or broadcastable arrays unless noted otherwise.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

PI = math.pi
DOMAIN_MARGIN = 1e-12


class DomainError(ValueError):
    """Slope on or outside the boundary of the admissible triangle."""


def in_triangle(x, y, margin: float = 0.0):
    x = np.asarray(x)
    y = np.asarray(y)
    return (x > margin) & (y > margin) & (x + y < 1.0 - margin)


def _check(x, y, margin=DOMAIN_MARGIN):
    if not np.all(in_triangle(x, y, margin)):
        raise DomainError(f"slope outside the open triangle: x={x!r}, y={y!r}")


def _w1(x, y):
    s = PI * (x + y)
    sy = np.sin(PI * y)
    return -np.cos(s) / np.sin(s) * sy * sy / (2 * PI) - y / 4 + np.sin(2 * PI * y) / (4 * PI)


def W_eval(x, y, check: bool = True):
    """Current ``(W1, W2)``; ``W2(x, y) = W1(y, x)`` through the same kernel."""
    if check:
        _check(x, y)
    return _w1(x, y), _w1(y, x)


def mu_eval(x, y):
    """Mobility ``sin(pi x) sin(pi y) / (2 pi sin(pi (1 - x - y)))``."""
    _check(x, y)
    return np.sin(PI * x) * np.sin(PI * y) / (2 * PI * np.sin(PI * (1 - x - y)))


# -- surface tension -------------------------------------------------------------


def _log_sinc(t):
    return np.log(np.sinc(t / PI))


def lobachevsky_integral(theta: float, tol: float = 1e-13) -> float:
    """``int_0^theta ln(2 sin t) dt`` for ``0 <= theta <= pi``.

    The ``ln t`` singularity at 0 is integrated in closed form; values past
    ``pi/2`` use the antisymmetry about ``pi/2``, which keeps the quadrature
    away from the second singularity at ``pi``.
    """
    theta = float(theta)
    if not 0.0 <= theta <= PI:
        raise DomainError(f"theta={theta} outside [0, pi]")
    if theta > PI / 2:
        return -lobachevsky_integral(PI - theta, tol)
    if theta == 0.0:
        return 0.0
    val, err = integrate.quad(_log_sinc, 0.0, theta, epsabs=tol, epsrel=tol, limit=200)
    if not err <= 1e-10:
        raise ArithmeticError(f"quadrature did not converge at theta={theta}: err={err}")
    return theta * math.log(2 * theta) - theta + val


def sigma_eval(x: float, y: float) -> float:
    """Dimer surface tension ``(Lambda(pi x) + Lambda(pi y) + Lambda(pi (1-x-y))) / pi``."""
    _check(x, y)
    z = 1.0 - x - y
    return (lobachevsky_integral(PI * x) + lobachevsky_integral(PI * y) + lobachevsky_integral(PI * z)) / PI


def sigma_grad(x, y):
    _check(x, y)
    l3 = np.log(2 * np.sin(PI * (1 - x - y)))
    return np.log(2 * np.sin(PI * x)) - l3, np.log(2 * np.sin(PI * y)) - l3


def sigma_hess(x, y) -> np.ndarray:
    """``[[s11, s12], [s12, s22]]`` stacked on the leading axes: shape ``(..., 2, 2)``."""
    _check(x, y)
    c3 = PI / np.tan(PI * (1 - x - y))
    s11 = PI / np.tan(PI * x) + c3
    s22 = PI / np.tan(PI * y) + c3
    return np.stack([np.stack([s11, c3], -1), np.stack([c3, s22], -1)], -2)


# -- Jacobian of the current -----------------------------------------------------


def _dw1(x, y):
    """``(dW1/dx, dW1/dy)`` at ``(x, y)``."""
    s = PI * (x + y)
    ss2 = np.sin(s) ** 2
    sy = np.sin(PI * y)
    a = 0.5 * sy * sy / ss2
    b = a - np.cos(s) / np.sin(s) * sy * np.cos(PI * y) + 0.25 - sy * sy
    return a, b


def HW_eval(x, y) -> np.ndarray:
    """Jacobian ``[[dW1/dx, dW1/dy], [dW2/dx, dW2/dy]]``, shape ``(..., 2, 2)``."""
    _check(x, y)
    a1, b1 = _dw1(x, y)
    a2, b2 = _dw1(y, x)  # W2(x, y) = W1(y, x) swaps the roles of the partials
    return np.stack([np.stack([a1, b1], -1), np.stack([b2, a2], -1)], -2)


def HW_sym(x, y) -> np.ndarray:
    H = HW_eval(x, y)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def HW_trace_closed(x, y):
    return 0.5 * (np.sin(PI * x) ** 2 + np.sin(PI * y) ** 2) / np.sin(PI * (x + y)) ** 2


def HW_det_closed(x, y):
    return np.sin(PI * x) ** 2 * np.sin(PI * y) ** 2 / (4 * np.sin(PI * (x + y)) ** 2)


def max_eigenvalue(x, y) -> float:
    """Largest eigenvalue of the symmetrized Jacobian over the given slopes."""
    return float(np.linalg.eigvalsh(HW_sym(np.ravel(x), np.ravel(y)))[:, -1].max())


# -- monotonicity and the contraction function -----------------------------------


def monotonicity_gap(a, b):
    """``(W(a) - W(b)) . (a - b)``; nonnegative, zero only for ``a == b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    wa = W_eval(a[..., 0], a[..., 1])
    wb = W_eval(b[..., 0], b[..., 1])
    return (wa[0] - wb[0]) * (a[..., 0] - b[..., 0]) + (wa[1] - wb[1]) * (a[..., 1] - b[..., 1])


def G_eval(rho, rho_bar, z) -> float:
    """Contraction function ``G(rho, rho_bar, z) <= 0``.

    For ``rho`` in the open triangle this is ``-2 (W(z + rho_bar) - W(rho)) . (z + rho_bar - rho)``;
    on the edges ``rho_2 = 0`` (or symmetrically ``rho_1 = 0``) the boundary
    formula, which equals the limit of the interior one, is used.
    """
    r1, r2 = float(rho[0]), float(rho[1])
    a1, b2 = float(rho_bar[0]) + float(z[0]), float(rho_bar[1]) + float(z[1])
    _check(a1, b2)
    w1, w2 = W_eval(a1, b2)
    if r1 > 0 and r2 > 0 and r1 + r2 < 1:
        return float(-2 * monotonicity_gap((a1, b2), (r1, r2)))
    if r2 == 0.0 and 0.0 <= r1 <= 1.0:
        return float(-2 * (w1 * (a1 - r1) + w2 * b2) - 0.5 * b2 * r1)
    if r1 == 0.0 and 0.0 <= r2 <= 1.0:
        return float(-2 * (w1 * a1 + w2 * (b2 - r2)) - 0.5 * a1 * r2)
    raise DomainError(f"rho={rho} is neither interior nor on an edge min(rho)=0")
