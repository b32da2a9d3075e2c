"""Pure NumPy versions of the finite-volume kernels.

These are the reference implementations; the compiled module ``_ckernels``
mirrors every function here with the same signature and operation order.
Face arrays carry ``n + 1`` entries along their own axis; the two boundary
entries are ignored (no-flux walls).
"""

import numpy as np


def phi(u, m, eps):
    if m == 2.0:
        out = u * u
    elif m == 1.0:
        out = u.copy()
    else:
        out = np.power(u, m)
    if eps != 0.0:
        out = out + eps * u
    return out


def _interior(axis, ndim, lo, hi):
    idx = [slice(None)] * ndim
    idx[axis] = slice(lo, hi)
    return tuple(idx)


def lap_phi(u, m, eps, h):
    """Conservative 2d+1 point Laplacian of ``phi(u)`` with zero-flux walls."""
    p = phi(u, m, eps)
    out = np.zeros_like(u)
    nd = u.ndim
    for ax in range(nd):
        flux = np.diff(p, axis=ax) / h
        out[_interior(ax, nd, 1, None)] -= flux
        out[_interior(ax, nd, 0, -1)] += flux
    return out / h


def div_upwind(u, faces, h):
    """Upwind ``div(u V)`` for the equation ``u_t = div(u V)``.

    The transport velocity is ``-V``, so a positive face value draws from the
    cell on the high side of the face.
    """
    out = np.zeros_like(u)
    nd = u.ndim
    for ax in range(nd):
        vf = faces[ax][_interior(ax, nd, 1, -1)]
        lo = u[_interior(ax, nd, 0, -1)]
        hi = u[_interior(ax, nd, 1, None)]
        flux = vf * np.where(vf > 0.0, hi, lo)
        out[_interior(ax, nd, 1, None)] -= flux
        out[_interior(ax, nd, 0, -1)] += flux
    return out / h


def lap_phi_radial(u, m, eps, h, area, vol):
    p = phi(u, m, eps)
    flux = area[1:-1] * (np.diff(p) / h)
    out = np.zeros_like(u)
    out[1:] -= flux
    out[:-1] += flux
    return out / vol


def div_upwind_radial(u, vf, area, vol):
    v = vf[1:-1]
    flux = area[1:-1] * (v * np.where(v > 0.0, u[1:], u[:-1]))
    out = np.zeros_like(u)
    out[1:] -= flux
    out[:-1] += flux
    return out / vol


def end_tolerance(t_end):
    """Slack for landing on ``t_end`` (zero when running open-ended)."""
    return 1e-14 * max(1.0, abs(t_end)) if np.isfinite(t_end) else 0.0


def _rates_dt(umax, m, eps, diff_rate, adv_rate, cfl_d, cfl_a, dt_max):
    if umax > 0:
        diffusivity = m * umax ** (m - 1.0) + eps
    elif m > 1:
        diffusivity = eps
    else:
        diffusivity = 1.0 + eps
    dt = dt_max
    if diffusivity > 0 and diff_rate > 0:
        dt = min(dt, cfl_d / (diffusivity * diff_rate))
    if adv_rate > 0:
        dt = min(dt, cfl_a / adv_rate)
    return dt


def advance(u, m, eps, h, faces, area, vol, diff_rate, adv_rate, cfl_d, cfl_a, dt_max, neg_tol, t, t_end, max_steps):
    """Forward Euler steps until ``t_end`` or ``max_steps``.

    Returns ``(u, t, steps, status, flat_index, value)``; status 0 is success,
    1 a negative cell beyond ``neg_tol * max u``, 2 a non-finite cell.
    """
    x = np.array(u, dtype=np.float64, order="C")
    tol = end_tolerance(t_end)
    k = 0
    while k < max_steps and t_end - t > tol:
        bad = np.flatnonzero(~np.isfinite(x))
        if bad.size:
            return x, t, k, 2, int(bad[0]), float(x.flat[bad[0]])
        umax = float(np.max(x))
        dt = min(_rates_dt(umax, m, eps, diff_rate, adv_rate, cfl_d, cfl_a, dt_max), t_end - t)
        if area is not None:
            rhs_l = lap_phi_radial(x, m, eps, h, area, vol)
            rhs_d = div_upwind_radial(x, faces[0], area, vol)
        else:
            rhs_l = lap_phi(x, m, eps, h)
            rhs_d = div_upwind(x, faces, h)
        x = x + dt * (rhs_l + rhs_d)
        t = t + dt
        k += 1
        umin = float(np.min(x))
        if umin < 0.0:
            if umin < -neg_tol * max(float(np.max(x)), 0.0):
                i = int(np.argmin(x))
                return x, t, k, 1, i, umin
            np.maximum(x, 0.0, out=x)
    return x, t, k, 0, 0, 0.0
