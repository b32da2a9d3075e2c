# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled finite-volume kernels; same contracts as ``_kernels_py``."""

import numpy as np
from libc.math cimport pow, isfinite


cdef inline double _phi(double x, double m, double eps) noexcept nogil:
    cdef double p
    if m == 2.0:
        p = x * x
    elif m == 1.0:
        p = x
    else:
        p = pow(x, m)
    if eps != 0.0:
        p = p + eps * x
    return p


def phi(u, double m, double eps):
    a = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] src = a.reshape(-1)
    out = np.empty(a.size, dtype=np.float64)
    cdef double[::1] dst = out
    cdef Py_ssize_t i
    for i in range(src.shape[0]):
        dst[i] = _phi(src[i], m, eps)
    return out.reshape(a.shape)


cdef void _lap1(double[::1] p, double h, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = p.shape[0], i
    cdef double f
    for i in range(n):
        out[i] = 0.0
    for i in range(n - 1):
        f = (p[i + 1] - p[i]) / h
        out[i] += f
        out[i + 1] -= f
    for i in range(n):
        out[i] = out[i] / h


cdef void _lap2(double[:, ::1] p, double h, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t nx = p.shape[0], ny = p.shape[1], i, j
    cdef double f
    for i in range(nx):
        for j in range(ny):
            out[i, j] = 0.0
    for i in range(nx - 1):
        for j in range(ny):
            f = (p[i + 1, j] - p[i, j]) / h
            out[i, j] += f
            out[i + 1, j] -= f
    for i in range(nx):
        for j in range(ny - 1):
            f = (p[i, j + 1] - p[i, j]) / h
            out[i, j] += f
            out[i, j + 1] -= f
    for i in range(nx):
        for j in range(ny):
            out[i, j] = out[i, j] / h


cdef void _lap3(double[:, :, ::1] p, double h, double[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t nx = p.shape[0], ny = p.shape[1], nz = p.shape[2], i, j, k
    cdef double f
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                out[i, j, k] = 0.0
    for i in range(nx - 1):
        for j in range(ny):
            for k in range(nz):
                f = (p[i + 1, j, k] - p[i, j, k]) / h
                out[i, j, k] += f
                out[i + 1, j, k] -= f
    for i in range(nx):
        for j in range(ny - 1):
            for k in range(nz):
                f = (p[i, j + 1, k] - p[i, j, k]) / h
                out[i, j, k] += f
                out[i, j + 1, k] -= f
    for i in range(nx):
        for j in range(ny):
            for k in range(nz - 1):
                f = (p[i, j, k + 1] - p[i, j, k]) / h
                out[i, j, k] += f
                out[i, j, k + 1] -= f
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                out[i, j, k] = out[i, j, k] / h


def lap_phi(u, double m, double eps, double h):
    p = phi(u, m, eps)
    out = np.empty_like(p)
    if p.ndim == 1:
        _lap1(p, h, out)
    elif p.ndim == 2:
        _lap2(p, h, out)
    else:
        _lap3(p, h, out)
    return out


cdef inline double _up(double v, double lo, double hi) noexcept nogil:
    # branch-free select; equals v*hi for v > 0 and v*lo otherwise
    cdef double vp = v if v > 0.0 else 0.0
    return vp * hi + (v - vp) * lo


cdef void _div1(double[::1] u, double[::1] vx, double h, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = u.shape[0], i
    cdef double f
    for i in range(n):
        out[i] = 0.0
    for i in range(n - 1):
        f = _up(vx[i + 1], u[i], u[i + 1])
        out[i] += f
        out[i + 1] -= f
    for i in range(n):
        out[i] = out[i] / h


cdef void _div2(double[:, ::1] u, double[:, ::1] vx, double[:, ::1] vy,
                double h, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j
    cdef double f
    for i in range(nx):
        for j in range(ny):
            out[i, j] = 0.0
    for i in range(nx - 1):
        for j in range(ny):
            f = _up(vx[i + 1, j], u[i, j], u[i + 1, j])
            out[i, j] += f
            out[i + 1, j] -= f
    for i in range(nx):
        for j in range(ny - 1):
            f = _up(vy[i, j + 1], u[i, j], u[i, j + 1])
            out[i, j] += f
            out[i, j + 1] -= f
    for i in range(nx):
        for j in range(ny):
            out[i, j] = out[i, j] / h


cdef void _div3(double[:, :, ::1] u, double[:, :, ::1] vx, double[:, :, ::1] vy,
                double[:, :, ::1] vz, double h, double[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], nz = u.shape[2], i, j, k
    cdef double f
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                out[i, j, k] = 0.0
    for i in range(nx - 1):
        for j in range(ny):
            for k in range(nz):
                f = _up(vx[i + 1, j, k], u[i, j, k], u[i + 1, j, k])
                out[i, j, k] += f
                out[i + 1, j, k] -= f
    for i in range(nx):
        for j in range(ny - 1):
            for k in range(nz):
                f = _up(vy[i, j + 1, k], u[i, j, k], u[i, j + 1, k])
                out[i, j, k] += f
                out[i, j + 1, k] -= f
    for i in range(nx):
        for j in range(ny):
            for k in range(nz - 1):
                f = _up(vz[i, j, k + 1], u[i, j, k], u[i, j, k + 1])
                out[i, j, k] += f
                out[i, j, k + 1] -= f
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                out[i, j, k] = out[i, j, k] / h


def div_upwind(u, faces, double h):
    a = np.ascontiguousarray(u, dtype=np.float64)
    fs = [np.ascontiguousarray(f, dtype=np.float64) for f in faces]
    out = np.empty_like(a)
    if a.ndim == 1:
        _div1(a, fs[0], h, out)
    elif a.ndim == 2:
        _div2(a, fs[0], fs[1], h, out)
    else:
        _div3(a, fs[0], fs[1], fs[2], h, out)
    return out


cdef void _lap_r(double[::1] p, double h, double[::1] A, double[::1] W, double[::1] o) noexcept nogil:
    cdef Py_ssize_t n = p.shape[0], i
    cdef double f
    for i in range(n):
        o[i] = 0.0
    for i in range(n - 1):
        f = A[i + 1] * ((p[i + 1] - p[i]) / h)
        o[i] += f
        o[i + 1] -= f
    for i in range(n):
        o[i] = o[i] / W[i]


cdef void _div_r(double[::1] a, double[::1] v, double[::1] A, double[::1] W, double[::1] o) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], i
    cdef double f
    for i in range(n):
        o[i] = 0.0
    for i in range(n - 1):
        f = A[i + 1] * _up(v[i + 1], a[i], a[i + 1])
        o[i] += f
        o[i + 1] -= f
    for i in range(n):
        o[i] = o[i] / W[i]


def lap_phi_radial(u, double m, double eps, double h, area, vol):
    cdef double[::1] p = phi(u, m, eps)
    out = np.empty(p.shape[0], dtype=np.float64)
    _lap_r(p, h, np.ascontiguousarray(area, dtype=np.float64), np.ascontiguousarray(vol, dtype=np.float64), out)
    return out


def div_upwind_radial(u, vf, area, vol):
    a = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty(a.shape[0], dtype=np.float64)
    _div_r(a, np.ascontiguousarray(vf, dtype=np.float64), np.ascontiguousarray(area, dtype=np.float64),
           np.ascontiguousarray(vol, dtype=np.float64), out)
    return out


def advance(u, double m, double eps, double h, faces, area, vol, double diff_rate, double adv_rate,
            double cfl_d, double cfl_a, double dt_max, double neg_tol, double t, double t_end,
            long max_steps):
    """Forward Euler steps until ``t_end`` or ``max_steps``; see ``_kernels_py.advance``."""
    a = np.array(u, dtype=np.float64, order="C")
    cdef double[::1] x = a.reshape(-1)
    cdef Py_ssize_t n = x.shape[0], i
    fs = [np.ascontiguousarray(f, dtype=np.float64) for f in faces]
    lapb = np.empty_like(a)
    divb = np.empty_like(a)
    pb = np.empty_like(a)
    cdef double[::1] L = lapb.reshape(-1)
    cdef double[::1] D = divb.reshape(-1)
    cdef double[::1] P = pb.reshape(-1)
    cdef double[::1] A, W, F1
    cdef double[:, ::1] a2, p2, l2, d2, fx2, fy2
    cdef double[:, :, ::1] a3, p3, l3, d3, fx3, fy3, fz3
    cdef int mode
    if area is not None:
        mode = 0
        A = np.ascontiguousarray(area, dtype=np.float64)
        W = np.ascontiguousarray(vol, dtype=np.float64)
        F1 = fs[0]
    elif a.ndim == 1:
        mode = 1
        F1 = fs[0]
    elif a.ndim == 2:
        mode = 2
        a2, p2, l2, d2 = a, pb, lapb, divb
        fx2, fy2 = fs[0], fs[1]
    else:
        mode = 3
        a3, p3, l3, d3 = a, pb, lapb, divb
        fx3, fy3, fz3 = fs[0], fs[1], fs[2]
    cdef long k = 0
    cdef double umax, umin, diffusivity, dt, v
    cdef Py_ssize_t imin
    cdef double tol = 1e-14 * max(1.0, abs(t_end)) if isfinite(t_end) else 0.0
    with nogil:
        while k < max_steps and t_end - t > tol:
            umax = x[0]
            for i in range(n):
                if not (x[i] - x[i] == 0.0):
                    with gil:
                        return a, t, k, 2, i, x[i]
                if x[i] > umax:
                    umax = x[i]
            if umax > 0:
                diffusivity = m * pow(umax, m - 1.0) + eps
            elif m > 1:
                diffusivity = eps
            else:
                diffusivity = 1.0 + eps
            dt = dt_max
            if diffusivity > 0 and diff_rate > 0:
                dt = min(dt, cfl_d / (diffusivity * diff_rate))
            if adv_rate > 0:
                dt = min(dt, cfl_a / adv_rate)
            dt = min(dt, t_end - t)
            for i in range(n):
                P[i] = _phi(x[i], m, eps)
            if mode == 0:
                _lap_r(P, h, A, W, L)
                _div_r(x, F1, A, W, D)
            elif mode == 1:
                _lap1(P, h, L)
                _div1(x, F1, h, D)
            elif mode == 2:
                _lap2(p2, h, l2)
                _div2(a2, fx2, fy2, h, d2)
            else:
                _lap3(p3, h, l3)
                _div3(a3, fx3, fy3, fz3, h, d3)
            umin = 0.0
            imin = 0
            umax = 0.0
            for i in range(n):
                v = x[i] + dt * (L[i] + D[i])
                x[i] = v
                if v < umin:
                    umin = v
                    imin = i
                if v > umax:
                    umax = v
            t = t + dt
            k += 1
            if umin < 0.0:
                if umin < -neg_tol * umax:
                    with gil:
                        return a, t, k, 1, imin, umin
                for i in range(n):
                    if x[i] < 0.0:
                        x[i] = 0.0
    return a, t, k, 0, 0, 0.0
