"""Compiled kernels for the long-jump chain.

All arrays are in column layout: ``occ[d, j]`` is the id of the particle at
face ``j`` of column ``d`` (or -1), ``C[d, j]`` the scaled height there.
A step along ``+e3`` lowers ``j`` by one.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OK, NEED_RANDOMS, STUCK, MAX_EVENTS = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def reach_plus(occ, L, d, y):
    """Largest ``n`` such that the particle at ``(d, y)`` may move to ``y - n``."""
    left = d - 1 if d > 0 else L - 1
    right = d + 1 if d < L - 1 else 0
    a = y
    b = y - 1 if y > 0 else L - 1
    for s in range(L):
        if occ[left, a] >= 0 or occ[right, b] >= 0:
            return s
        a = a - 1 if a > 0 else L - 1
        b = b - 1 if b > 0 else L - 1
    return L


@njit(cache=True, nogil=True)
def reach_minus(occ, L, d, y):
    """Largest ``n`` such that the particle at ``(d, y)`` may move to ``y + n``."""
    left = d - 1 if d > 0 else L - 1
    right = d + 1 if d < L - 1 else 0
    a = y
    b = y + 1 if y < L - 1 else 0
    for s in range(L):
        if occ[right, a] >= 0 or occ[left, b] >= 0:
            return s
        a = a + 1 if a < L - 1 else 0
        b = b + 1 if b < L - 1 else 0
    return L


@njit(cache=True, nogil=True)
def tree_set(tree, size, i, v):
    k = size + i
    tree[k] = v
    k //= 2
    while k >= 1:
        tree[k] = tree[2 * k] + tree[2 * k + 1]
        k //= 2


@njit(cache=True, nogil=True)
def tree_find(tree, size, x):
    k = 1
    while k < size:
        left = 2 * k
        if x < tree[left]:
            k = left
        else:
            x -= tree[left]
            k = left + 1
    while tree[k] <= 0.0 and k > size:
        # x landed past the last positive leaf through rounding
        k -= 1
    return k - size


@njit(cache=True, nogil=True)
def refresh(occ, pos, col, Ip, Im, tree, size, harm, L, p):
    d = col[p]
    y = pos[p]
    a = reach_plus(occ, L, d, y)
    b = reach_minus(occ, L, d, y)
    Ip[p] = a
    Im[p] = b
    tree_set(tree, size, p, 0.5 * (harm[a] + harm[b]))


@njit(cache=True, nogil=True)
def refresh_all(occ, pos, col, Ip, Im, tree, size, harm, L):
    P = pos.shape[0]
    for p in range(P):
        d = col[p]
        y = pos[p]
        a = reach_plus(occ, L, d, y)
        b = reach_minus(occ, L, d, y)
        Ip[p] = a
        Im[p] = b
        tree[size + p] = 0.5 * (harm[a] + harm[b])
    for k in range(size - 1, 0, -1):
        tree[k] = tree[2 * k] + tree[2 * k + 1]


@njit(cache=True, nogil=True)
def draw_event(tree, size, harm, Ip, Im, w1, w2):
    """Pick ``(particle, direction, length)`` from two uniforms on ``[0, 1)``.

    The particle is chosen proportionally to its total rate, then the move
    ``(direction, n)`` proportionally to ``1 / (2 n)``.
    """
    p = tree_find(tree, size, w1 * tree[1])
    a = Ip[p]
    b = Im[p]
    v = w2 * (harm[a] + harm[b])
    if v < harm[a] or b == 0:
        direction = 1
        top = a
    else:
        v -= harm[a]
        direction = -1
        top = b
    n = 1
    while n < top and harm[n] <= v:
        n += 1
    return p, direction, n


@njit(cache=True, nogil=True)
def move(occ, pos, col, C, Ip, Im, tree, size, harm, L, p, direction, n):
    """Move particle ``p`` by ``n`` steps along ``direction * e3`` and refresh affected rates."""
    d = col[p]
    y = pos[p]
    occ[d, y] = -1
    if direction > 0:
        for s in range(1, n + 1):
            C[d, (y - s) % L] -= L
        y = (y - n) % L
    else:
        for s in range(n):
            C[d, (y + s) % L] += L
        y = (y + n) % L
    occ[d, y] = p
    pos[p] = y
    refresh(occ, pos, col, Ip, Im, tree, size, harm, L, p)
    # the two neighbours on each side that border the window of p
    right = d + 1 if d < L - 1 else 0
    left = d - 1 if d > 0 else L - 1
    _refresh_first(occ, pos, col, Ip, Im, tree, size, harm, L, right, y, 1)
    _refresh_first(occ, pos, col, Ip, Im, tree, size, harm, L, right, y - 1 if y > 0 else L - 1, -1)
    _refresh_first(occ, pos, col, Ip, Im, tree, size, harm, L, left, y, -1)
    _refresh_first(occ, pos, col, Ip, Im, tree, size, harm, L, left, y + 1 if y < L - 1 else 0, 1)


@njit(cache=True, nogil=True)
def _refresh_first(occ, pos, col, Ip, Im, tree, size, harm, L, c, j, step):
    """Refresh the first particle met in column ``c`` scanning from ``j`` by ``step``."""
    for _ in range(L):
        q = occ[c, j]
        if q >= 0:
            refresh(occ, pos, col, Ip, Im, tree, size, harm, L, q)
            return
        j += step
        if j < 0:
            j += L
        elif j >= L:
            j -= L


@njit(cache=True, nogil=True)
def run(occ, pos, col, C, Ip, Im, tree, size, harm, L, unif, off, t, t_stop, max_events):
    """Gillespie loop until ``t_stop``, ``max_events`` or the uniform buffer runs dry.

    Each event consumes three uniforms.  A waiting time that overshoots
    ``t_stop`` is discarded and the clock is set to ``t_stop``.
    Returns ``(t, off, events, status)``.
    """
    events = 0
    nu = unif.shape[0]
    while events < max_events:
        if off + 3 > nu:
            return t, off, events, NEED_RANDOMS
        R = tree[1]
        if R <= 0.0:
            return t, off, events, STUCK
        dt = -math.log(1.0 - unif[off]) / R
        if t + dt >= t_stop:
            return t_stop, off + 1, events, OK
        t += dt
        p, direction, n = draw_event(tree, size, harm, Ip, Im, unif[off + 1], unif[off + 2])
        off += 3
        move(occ, pos, col, C, Ip, Im, tree, size, harm, L, p, direction, n)
        events += 1
    return t, off, events, MAX_EVENTS


def harmonic_numbers(L: int) -> np.ndarray:
    h = np.zeros(L + 2)
    h[1:] = np.cumsum(1.0 / np.arange(1, L + 2))
    return h
