"""Compiled inner loops of the explicit march (numba).

A call advances a chunk of time levels [n0, n1). For each level n it
(a) accumulates contact/mass statistics of level n when n >= 1, (b) stores the
level if it is the next requested snapshot, (c) steps to level n + 1 unless
n == n_total. Coefficient and source data come as deduplicated rows plus a
per-level row index.

Operator codes: 0 pucci_plus, 1 pucci_minus, 2 linear_trace, 3 tabulated
(piecewise linear, nondecreasing, 1-D only).
Return value: -1 on success, the failing step for a non-finite value, or
-(2 + step) when a tabulated operator is evaluated outside its table.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _phi(code, lam, Lam, e):
    if code == 0:
        return Lam * e if e > 0.0 else lam * e
    if code == 1:
        return lam * e if e > 0.0 else Lam * e
    return e


@njit(cache=True, nogil=True)
def _interp(xs, ys, e):
    n = xs.size
    if e < xs[0] or e > xs[n - 1]:
        return np.nan
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= e:
            lo = mid
        else:
            hi = mid
    w = (e - xs[lo]) / (xs[hi] - xs[lo])
    return ys[lo] + w * (ys[hi] - ys[lo])


@njit(cache=True, nogil=True)
def march_1d(u, n0, n1, n_total, dt, h, code, lam, Lam, sdir,
             coef_rows, coef_idx, src_rows, src_idx, bvals, clip,
             tab_x, tab_y, save_levels, saves, save_pos,
             track, tol, wx, ell, f0h, side_sign, power, acc):
    N = u.size - 1
    inv_h2 = 1.0 / (h * h)
    new = np.empty_like(u)
    s0 = sdir[0]
    for n in range(n0, n1):
        k = n - n0
        a = coef_rows[coef_idx[k]]
        f = src_rows[src_idx[k]]
        if track and n >= 1:
            meas = 0.0
            mass = 0.0
            for i in range(N + 1):
                if abs(u[i]) <= tol:
                    meas += wx[i]
                    g = side_sign * (ell + a[i] * f0h)
                    if g > 0.0:
                        mass += wx[i] * g ** power
            acc[0] += meas * dt
            acc[1] += mass * dt
        p = save_pos[0]
        if p < save_levels.size and save_levels[p] == n:
            saves[p, :] = u
            save_pos[0] = p + 1
        if n == n_total:
            continue
        for i in range(1, N):
            D = (u[i + 1] + u[i - 1] - 2.0 * u[i]) * inv_h2 + s0
            if code == 3:
                F = _interp(tab_x, tab_y, D)
                if F != F:
                    return -(2 + n)
            else:
                F = a[i] * _phi(code, lam, Lam, D)
            v = u[i] + dt * (F + f[i])
            if clip == 1 and v < 0.0:
                v = 0.0
            elif clip == -1 and v > 0.0:
                v = 0.0
            if v != v or abs(v) == np.inf:
                return n
            new[i] = v
        new[0] = bvals[k + 1, 0]
        new[N] = bvals[k + 1, 1]
        u[:] = new
    return -1


@njit(cache=True, nogil=True)
def march_2d(u, fixed, li, lj, n0, n1, n_total, dt, h, code, lam, Lam, sdir,
             coef_rows, coef_idx, src_rows, src_idx, bvals, clip,
             save_levels, saves, save_pos,
             track, tol, wx, ell, f0h, side_sign, power, acc):
    N = u.shape[0] - 1
    inv_h2 = 1.0 / (h * h)
    inv_2h2 = 0.5 * inv_h2
    new = u.copy()
    for n in range(n0, n1):
        k = n - n0
        a = coef_rows[coef_idx[k]]
        f = src_rows[src_idx[k]]
        if track and n >= 1:
            meas = 0.0
            mass = 0.0
            for i in range(N + 1):
                for j in range(N + 1):
                    w = wx[i, j]
                    if w > 0.0 and abs(u[i, j]) <= tol:
                        meas += w
                        g = side_sign * (ell + a[i, j] * f0h)
                        if g > 0.0:
                            mass += w * g ** power
            acc[0] += meas * dt
            acc[1] += mass * dt
        p = save_pos[0]
        if p < save_levels.size and save_levels[p] == n:
            saves[p, :, :] = u
            save_pos[0] = p + 1
        if n == n_total:
            continue
        for i in range(1, N):
            for j in range(1, N):
                if fixed[i, j]:
                    continue
                c2 = 2.0 * u[i, j]
                d1 = (u[i + 1, j] + u[i - 1, j] - c2) * inv_h2 + sdir[0]
                d2 = (u[i, j + 1] + u[i, j - 1] - c2) * inv_h2 + sdir[1]
                if code == 2:
                    F = a[i, j] * (d1 + d2)
                else:
                    d3 = (u[i + 1, j + 1] + u[i - 1, j - 1] - c2) * inv_2h2 + sdir[2]
                    d4 = (u[i + 1, j - 1] + u[i - 1, j + 1] - c2) * inv_2h2 + sdir[3]
                    hi = max(max(d1, d2), max(d3, d4))
                    lo = min(min(d1, d2), min(d3, d4))
                    F = a[i, j] * (_phi(code, lam, Lam, hi) + _phi(code, lam, Lam, lo))
                v = u[i, j] + dt * (F + f[i, j])
                if clip == 1 and v < 0.0:
                    v = 0.0
                elif clip == -1 and v > 0.0:
                    v = 0.0
                if v != v or abs(v) == np.inf:
                    return n
                new[i, j] = v
        for q in range(li.size):
            new[li[q], lj[q]] = bvals[k + 1, q]
        u[:, :] = new
    return -1
