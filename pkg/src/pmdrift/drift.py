"""Drift fields: radial potentials, divergence-free cone fields, rescaling.

All analytic fields take coordinate arrays and return component arrays of
the same shape.  Face sampling of the divergence-free families goes through
their stream function (2D) or vector potential (3D): the flux through a face
is the exact face average of the normal component, so the sampled field is
discretely divergence free up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as sint

from .grid import Grid, VectorField, lp_norm, sphere_area

ZERO = "zero"
LOGLOG = "loglog"
QUADRATIC = "quadratic"
POWER = "power"
DIVFREE2D = "divfree2d"
DIVFREE3D = "divfree3d"
CUSTOM = "custom"
TAGS = (ZERO, LOGLOG, QUADRATIC, POWER, DIVFREE2D, DIVFREE3D, CUSTOM)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


# -- cutoffs ----------------------------------------------------------------

_RAMP_A = 0.25  # plateau of the slope starts here; max slope 1/(1 - a) = 4/3


def ramp(t):
    """C^2 monotone step, 0 for t <= 0 and 1 for t >= 1, slope at most 4/3."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    a = _RAMP_A

    def left(s):
        tau = s / a
        return a * (tau**3 - 0.5 * tau**4) / (1.0 - a)

    mid = (0.5 * a + (t - a)) / (1.0 - a)
    out = np.where(t < a, left(t), mid)
    return np.where(t > 1.0 - a, 1.0 - left(1.0 - t), out)


def ramp_slope(t):
    t = np.asarray(t, dtype=np.float64)
    a = _RAMP_A
    inside = (t > 0.0) & (t < 1.0)
    tl = np.clip(t / a, 0.0, 1.0)
    tr = np.clip((1.0 - t) / a, 0.0, 1.0)
    p = np.minimum(3 * tl**2 - 2 * tl**3, 3 * tr**2 - 2 * tr**3)
    return np.where(inside, p / (1.0 - a), 0.0)


def kappa(tau):
    """Even cutoff: 1 on [-1/3, 1/3], 0 outside [-1/2, 1/2]."""
    return 1.0 - ramp((np.abs(tau) - 1.0 / 3.0) * 6.0)


def kappa_prime(tau):
    tau = np.asarray(tau, dtype=np.float64)
    return -6.0 * ramp_slope((np.abs(tau) - 1.0 / 3.0) * 6.0) * np.sign(tau)


def mu(rho, eps):
    """Radial cutoff: 0 below eps, 1 on [2 eps, 10], 0 beyond 20.

    The transitions are ramps in log2(rho), which keeps |mu'| <= 1.93 / rho.
    """
    rho = np.asarray(rho, dtype=np.float64)
    with np.errstate(divide="ignore"):
        lo = ramp(np.log2(np.maximum(rho, 1e-300) / eps))
        hi = 1.0 - ramp(np.log2(np.maximum(rho, 1e-300) / 10.0))
    return lo * hi


def mu_prime(rho, eps):
    rho = np.asarray(rho, dtype=np.float64)
    r = np.maximum(rho, 1e-300)
    lo = ramp(np.log2(r / eps))
    hi = 1.0 - ramp(np.log2(r / 10.0))
    dlo = ramp_slope(np.log2(r / eps)) / (r * math.log(2.0))
    dhi = -ramp_slope(np.log2(r / 10.0)) / (r * math.log(2.0))
    return dlo * hi + lo * dhi


# -- radial potentials ------------------------------------------------------


def _gauss(fn, a, b):
    """20-point Gauss-Legendre integral of ``fn`` over [a, b] (arrays allowed)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[..., None] + half[..., None] * _GL_X
    return half * np.sum(_GL_W * fn(nodes), axis=-1)


class RadialPotential:
    """Radial, nondecreasing potential with ``Phi(0) = 0``."""

    dim: int

    def slope(self, r):  # pragma: no cover - interface
        raise NotImplementedError

    def __call__(self, r):  # pragma: no cover - interface
        raise NotImplementedError

    @property
    def sup(self) -> float:
        """``lim Phi(r)`` as ``r -> inf``."""
        return math.inf

    def gradient(self, *coords):
        r = np.sqrt(sum(c * c for c in coords))
        g = self.slope(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(r > 0, g / np.where(r > 0, r, 1.0), 0.0)
        return tuple(scale * c for c in coords)


class LogLogPotential(RadialPotential):
    """Potential whose slope is ``1/(r ln(1/r))`` on ``[1/A, 1/ln ln A]``.

    Below ``1/(2A)`` the slope is zero; on ``[1/(2A), 1/A]`` it ramps up as
    ``g(r) * S``; on ``[b, 2b]`` (``b = 1/ln ln A``) it blends from the
    tangent line of ``g`` at ``b`` to the outer cap ``(1 + r)^{-d-1}``.
    """

    def __init__(self, A: float, dim: int):
        if not A > math.exp(math.e):
            raise ValueError("LogLogPotential needs A > e^e")
        self.A = float(A)
        self.dim = int(dim)
        self.r1 = 0.5 / self.A
        self.r2 = 1.0 / self.A
        self.b = 1.0 / math.log(math.log(self.A))
        self.b2 = 2.0 * self.b
        if not self.r2 < self.b:
            raise ValueError("band [1/A, 1/ln ln A] is empty")
        L = math.log(1.0 / self.b)
        self._gb = 1.0 / (self.b * L)
        self._dgb = -(L - 1.0) / (self.b * L) ** 2
        self._phi_r2 = float(_gauss(self._slope_inner, self.r1, self.r2))
        self._phi_b = self._phi_r2 + self._band_increment(self.b)
        self._phi_b2 = self._phi_b + float(_gauss(self._slope_outer, self.b, self.b2))

    @property
    def sup(self) -> float:
        return self._phi_b2 + (1.0 + self.b2) ** (-self.dim) / self.dim

    @staticmethod
    def band_slope(r):
        r = np.asarray(r, dtype=np.float64)
        return 1.0 / (r * np.log(1.0 / r))

    def cap(self, r):
        return (1.0 + np.asarray(r, dtype=np.float64)) ** (-self.dim - 1)

    def _slope_inner(self, r):
        t = (r - self.r1) / (self.r2 - self.r1)
        return self.band_slope(np.clip(r, self.r1, self.r2)) * _smoothstep(t)

    def _slope_outer(self, r):
        t = (r - self.b) / (self.b2 - self.b)
        tangent = self._gb + self._dgb * (r - self.b)
        w = _smoothstep(t)
        return tangent * (1.0 - w) + self.cap(r) * w

    def _band_increment(self, r):
        # -f(r) + f(1/A) with f(r) = ln ln(1/r)
        return math.log(math.log(self.A)) - np.log(np.log(1.0 / r))

    def slope(self, r):
        r = np.asarray(r, dtype=np.float64)
        out = np.zeros_like(r)
        m1 = (r > self.r1) & (r < self.r2)
        m2 = (r >= self.r2) & (r <= self.b)
        m3 = (r > self.b) & (r < self.b2)
        m4 = r >= self.b2
        out[m1] = self._slope_inner(r[m1])
        out[m2] = self.band_slope(r[m2])
        out[m3] = self._slope_outer(r[m3])
        out[m4] = self.cap(r[m4])
        return out

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        out = np.zeros_like(r)
        m1 = (r > self.r1) & (r < self.r2)
        m2 = (r >= self.r2) & (r <= self.b)
        m3 = (r > self.b) & (r < self.b2)
        m4 = r >= self.b2
        out[m1] = _gauss(self._slope_inner, np.full(m1.sum(), self.r1), r[m1])
        out[m2] = self._phi_r2 + self._band_increment(r[m2])
        out[m3] = self._phi_b + _gauss(self._slope_outer, np.full(m3.sum(), self.b), r[m3])
        d = self.dim
        out[m4] = self._phi_b2 + ((1.0 + self.b2) ** (-d) - (1.0 + r[m4]) ** (-d)) / d
        return out


class QuadraticRescaledPotential(RadialPotential):
    """``A^2 r^2`` on ``r <= 1/A``, slope capped by ``1/(1 + r)`` beyond ``2/A``."""

    def __init__(self, A: float, dim: int):
        if not A > 0:
            raise ValueError("A must be positive")
        self.A = float(A)
        self.dim = int(dim)
        self.r1 = 1.0 / self.A
        self.r2 = 2.0 / self.A
        self._phi_r2 = 1.0 + float(_gauss(self._slope_mid, self.r1, self.r2))

    def _slope_mid(self, r):
        w = _smoothstep((r - self.r1) / (self.r2 - self.r1))
        return 2.0 * self.A**2 * r * (1.0 - w) + w / (1.0 + r)

    def slope(self, r):
        r = np.asarray(r, dtype=np.float64)
        out = np.where(r <= self.r1, 2.0 * self.A**2 * r, 0.0)
        mid = (r > self.r1) & (r < self.r2)
        out[mid] = self._slope_mid(r[mid])
        hi = r >= self.r2
        out[hi] = 1.0 / (1.0 + r[hi])
        return out

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        out = np.where(r <= self.r1, (self.A * r) ** 2, 0.0)
        mid = (r > self.r1) & (r < self.r2)
        out[mid] = 1.0 + _gauss(self._slope_mid, np.full(mid.sum(), self.r1), r[mid])
        hi = r >= self.r2
        out[hi] = self._phi_r2 + np.log((1.0 + r[hi]) / (1.0 + self.r2))
        return out


class PowerPotential(RadialPotential):
    """``Phi(r) = c r^k`` (the smooth quadratic confinement uses k = 2)."""

    def __init__(self, dim: int, coeff: float = 1.0, power: float = 2.0):
        self.dim = int(dim)
        self.coeff = float(coeff)
        self.power = float(power)

    def slope(self, r):
        r = np.asarray(r, dtype=np.float64)
        return self.coeff * self.power * r ** (self.power - 1.0)

    def __call__(self, r):
        return self.coeff * np.asarray(r, dtype=np.float64) ** self.power


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def loglog_potential_gradient(A: float, x) -> np.ndarray:
    """Gradient of the log-log potential at a single point ``x``."""
    x = np.asarray(x, dtype=np.float64)
    pot = LogLogPotential(A, x.size)
    return np.array([float(c) for c in pot.gradient(*[np.array(v) for v in x])])


def radial_logq_norm(pot: RadialPotential, p: float, q: float, r_max: float = 1e6) -> float:
    """``(int |grad Phi|^p max(log^q |grad Phi|, 1) dx)^{1/p}`` by quadrature in ``log r``.

    The grid version of this norm cannot see the band below one cell; this
    one resolves every breakpoint of the potential down to ``1/(2A)``.
    """
    d = pot.dim

    def integrand(t):
        r = math.exp(t)
        v = float(pot.slope(np.array([r]))[0])
        if v <= 0.0:
            return 0.0
        return v**p * max(max(math.log(v), 0.0) ** q, 1.0) * r**d

    brk = sorted(x for x in (getattr(pot, a, None) for a in ("r1", "r2", "b", "b2")) if x)
    lo = math.log(brk[0]) if brk else -40.0
    nodes = sorted({lo, *(math.log(x) for x in brk), *np.linspace(0.0, math.log(r_max), 8)})
    total = sum(
        sint.quad(integrand, a, b, limit=400, epsabs=0.0, epsrel=1e-11)[0] for a, b in zip(nodes, nodes[1:])
    )
    return (sphere_area(d) * total) ** (1.0 / p)


# -- divergence-free cone fields -------------------------------------------


def _pw(w, s):
    """(|w|^s, s |w|^{s-1} sign(w)) for w != 0."""
    aw = np.abs(w)
    return aw**s, s * aw ** (s - 1.0) * np.sign(w)


def stream2d(s: float, eps: float, x, y):
    """Stream function ``psi(x, y) kappa(x/y) mu_eps(|(x, y)|)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros(np.broadcast(x, y).shape)
    x, y = np.broadcast_arrays(x, y)
    rho = np.hypot(x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        live = (np.abs(x) < 0.5 * np.abs(y)) & (rho > eps) & (rho < 20.0)
    xs, ys, rs = x[live], y[live], rho[live]
    psi = 0.5 * math.sqrt(s) * (np.abs(xs - ys) ** s - np.abs(xs + ys) ** s)
    out[live] = psi * kappa(xs / ys) * mu(rs, eps)
    return out


def divfree2d_field(s: float, eps: float, x, y):
    """``V = (-dF/dy, dF/dx)`` with ``F`` the cone stream function."""
    if not (0 < s < 1 and 0 < eps < 1):
        raise ValueError("need s, eps in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x, y = np.broadcast_arrays(x, y)
    vx = np.zeros(x.shape)
    vy = np.zeros(x.shape)
    rho = np.hypot(x, y)
    live = (np.abs(x) < 0.5 * np.abs(y)) & (rho > eps) & (rho < 20.0)
    xs, ys, rs = x[live], y[live], rho[live]
    c = 0.5 * math.sqrt(s)
    pa, da = _pw(xs - ys, s)
    pb, db = _pw(xs + ys, s)
    psi = c * (pa - pb)
    psi_x = c * (da - db)
    psi_y = c * (-da - db)
    tau = xs / ys
    k, dk = kappa(tau), kappa_prime(tau)
    m, dm = mu(rs, eps), mu_prime(rs, eps)
    k_x = dk / ys
    k_y = -dk * xs / ys**2
    F_x = psi_x * k * m + psi * k_x * m + psi * k * dm * xs / rs
    F_y = psi_y * k * m + psi * k_y * m + psi * k * dm * ys / rs
    vx[live] = -F_y
    vy[live] = F_x
    return vx, vy


def potential3d(s: float, eps: float, x1, x2, y):
    """Vector potential ``F`` (third component zero) of the 3D cone field."""
    x1, x2, y = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (x1, x2, y)))
    F1 = np.zeros(x1.shape)
    F2 = np.zeros(x1.shape)
    live, parts = _cone3d_parts(s, eps, x1, x2, y, derivs=False)
    if parts is not None:
        F1[live], F2[live] = parts
    return F1, F2, np.zeros(x1.shape)


def _cone3d_parts(s, eps, x1, x2, y, derivs):
    rho = np.sqrt(x1 * x1 + x2 * x2 + y * y)
    ay = np.abs(y)
    live = (np.abs(x1 - x2) < 0.5 * ay) & (np.abs(x1 + x2) < 0.5 * ay) & (rho > eps) & (rho < 20.0)
    if not np.any(live):
        return live, None
    a1, a2, yy, rr = x1[live], x2[live], y[live], rho[live]
    A = 0.25 * s ** (1.0 / 3.0)
    pa, da = _pw(yy + a1 - a2, s)
    pb, db = _pw(yy - a1 + a2, s)
    pc, dc = _pw(yy + a1 + a2, s)
    psi1 = -pa + pc
    psi2 = pb - pc
    t1 = (a1 - a2) / yy
    t2 = (a1 + a2) / yy
    k1, k2 = kappa(t1), kappa(t2)
    m = mu(rr, eps)
    K = k1 * k2 * m
    if not derivs:
        return live, (A * psi1 * K, A * psi2 * K)
    dk1, dk2 = kappa_prime(t1), kappa_prime(t2)
    dm = mu_prime(rr, eps)
    # gradients (d/dx1, d/dx2, d/dy)
    g_psi1 = (-da + dc, da + dc, -da + dc)
    g_psi2 = (-db - dc, db - dc, db - dc)
    g_t1 = (1.0 / yy, -1.0 / yy, -(a1 - a2) / yy**2)
    g_t2 = (1.0 / yy, 1.0 / yy, -(a1 + a2) / yy**2)
    g_r = (a1 / rr, a2 / rr, yy / rr)
    g_K = tuple(dk1 * g_t1[i] * k2 * m + k1 * dk2 * g_t2[i] * m + k1 * k2 * dm * g_r[i] for i in range(3))
    g_F1 = tuple(A * (g_psi1[i] * K + psi1 * g_K[i]) for i in range(3))
    g_F2 = tuple(A * (g_psi2[i] * K + psi2 * g_K[i]) for i in range(3))
    return live, (g_F1, g_F2)


def divfree3d_field(s: float, eps: float, x1, x2, y):
    """``V = curl F`` for the 3D cone potential; coordinates ``(x1, x2, y)``."""
    if not (0 < s < 1 and 0 < eps < 1):
        raise ValueError("need s, eps in (0, 1)")
    x1, x2, y = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (x1, x2, y)))
    v = [np.zeros(x1.shape) for _ in range(3)]
    live, parts = _cone3d_parts(s, eps, x1, x2, y, derivs=True)
    if parts is not None:
        g1, g2 = parts
        v[0][live] = -g2[2]
        v[1][live] = g1[2]
        v[2][live] = g2[0] - g1[1]
    return tuple(v)


def in_cutoff_zone(eps: float, coords) -> np.ndarray:
    """True where some cutoff of the cone field is below 1.

    ``coords`` holds 2 or 3 coordinate arrays; outside this set the field
    equals its pure power-law form.
    """
    if len(coords) == 2:
        x, y = coords
        rho = np.hypot(x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = kappa(np.where(y != 0, x / np.where(y != 0, y, 1.0), np.inf))
        return (k < 1.0) | (mu(rho, eps) < 1.0)
    x1, x2, y = coords
    rho = np.sqrt(x1 * x1 + x2 * x2 + y * y)
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(y != 0, y, 1.0)
        k1 = kappa(np.where(y != 0, (x1 - x2) / safe, np.inf))
        k2 = kappa(np.where(y != 0, (x1 + x2) / safe, np.inf))
    return (k1 < 1.0) | (k2 < 1.0) | (mu(rho, eps) < 1.0)


# -- DriftSpec --------------------------------------------------------------


@dataclass
class DriftSpec:
    """Tagged drift family.

    ``A`` is the family parameter of the potential drifts; for ``power`` it
    is the coefficient of ``Phi = A |x|^2``.  ``scale`` multiplies the whole field (``-1`` reverses the flow, which is
    how the pressure-form cone experiments are driven).
    """

    tag: str = ZERO
    A: float | None = None
    s: float | None = None
    epsilon: float | None = None
    scale: float = 1.0
    dim: int | None = None
    fn: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown drift tag {self.tag!r}")
        if self.tag == LOGLOG and not (self.A and self.A > math.exp(math.e)):
            raise ValueError("loglog drift needs A > e^e")
        if self.tag == QUADRATIC and not (self.A and self.A > 0):
            raise ValueError("quadratic drift needs A > 0")
        if self.tag == POWER and not (self.A and self.A > 0):
            raise ValueError("power drift needs a coefficient A > 0")
        if self.tag in (DIVFREE2D, DIVFREE3D):
            if self.s is None or not 0 < self.s < 1:
                raise ValueError("cone drift needs s in (0, 1)")
            if self.epsilon is None or not 0 < self.epsilon < 1:
                raise ValueError("cone drift needs epsilon in (0, 1)")
        if self.tag == CUSTOM and self.fn is None:
            raise ValueError("custom drift needs a callable")

    @property
    def is_potential(self) -> bool:
        return self.tag in (LOGLOG, QUADRATIC, POWER)

    def potential(self, dim: int) -> RadialPotential:
        if self.tag == LOGLOG:
            return LogLogPotential(self.A, dim)
        if self.tag == QUADRATIC:
            return QuadraticRescaledPotential(self.A, dim)
        if self.tag == POWER:
            return PowerPotential(dim, coeff=self.A)
        raise ValueError(f"drift {self.tag!r} is not a potential field")

    def evaluate(self, *coords):
        """Field components at the given coordinate arrays."""
        d = len(coords)
        coords = tuple(np.asarray(c, dtype=np.float64) for c in coords)
        if self.tag == ZERO:
            out = tuple(np.zeros(np.broadcast(*coords).shape) for _ in coords)
        elif self.is_potential:
            out = self.potential(d).gradient(*coords)
        elif self.tag == DIVFREE2D:
            if d != 2:
                raise ValueError("divfree2d lives in two dimensions")
            out = divfree2d_field(self.s, self.epsilon, *coords)
        elif self.tag == DIVFREE3D:
            if d != 3:
                raise ValueError("divfree3d lives in three dimensions")
            out = divfree3d_field(self.s, self.epsilon, *coords)
        else:
            out = tuple(np.asarray(c, dtype=np.float64) for c in self.fn(*coords))
        if self.scale != 1.0:
            out = tuple(self.scale * c for c in out)
        return out

    def radial_slope(self, r, dim: int):
        if self.tag == ZERO:
            return np.zeros_like(np.asarray(r, dtype=np.float64))
        if self.is_potential:
            return self.scale * self.potential(dim).slope(r)
        if self.tag == CUSTOM:
            return self.scale * np.asarray(self.fn(np.asarray(r, dtype=np.float64)), dtype=np.float64)
        raise ValueError(f"drift {self.tag!r} has no radial form")

    def sample_faces(self, grid: Grid) -> VectorField:
        """Face-normal samples for the flux operator."""
        if grid.radial:
            vf = self.radial_slope(grid.axis_faces(), grid.dim)
            return VectorField(grid, (vf,), True, {"drift": self.tag})
        if self.tag == DIVFREE2D and grid.dim == 2:
            comps = _faces_from_stream(self, grid)
        elif self.tag == DIVFREE3D and grid.dim == 3:
            comps = _faces_from_potential(self, grid)
        else:
            comps = tuple(self.evaluate(*grid.face_mesh(ax))[ax] for ax in range(grid.dim))
        return VectorField(grid, comps, True, {"drift": self.tag})

    def sample_cells(self, grid: Grid) -> VectorField:
        if grid.radial:
            return VectorField(grid, (self.radial_slope(grid.axis_centers(), grid.dim),), False)
        return VectorField(grid, self.evaluate(*grid.mesh()), False, {"drift": self.tag})

    def config_items(self) -> dict:
        items = {"drift": self.tag}
        if self.A is not None:
            items["drift.A"] = repr(float(self.A))
        if self.s is not None:
            items["drift.s"] = repr(float(self.s))
        if self.epsilon is not None:
            items["drift.epsilon"] = repr(float(self.epsilon))
        if self.scale != 1.0:
            items["drift.scale"] = repr(float(self.scale))
        return items


def _faces_from_stream(spec: DriftSpec, grid: Grid):
    nodes = grid.axis_faces()
    X, Y = np.meshgrid(nodes, nodes, indexing="ij")
    F = spec.scale * stream2d(spec.s, spec.epsilon, X, Y)
    h = grid.h
    vx = -(F[:, 1:] - F[:, :-1]) / h  # x-faces: shape (n+1, n)
    vy = (F[1:, :] - F[:-1, :]) / h  # y-faces: shape (n, n+1)
    return vx, vy


def _faces_from_potential(spec: DriftSpec, grid: Grid):
    """Face fluxes of ``curl F`` from edge integrals of ``F`` (Stokes)."""
    nodes = grid.axis_faces()
    h = grid.h
    mids = grid.axis_centers()
    xg, wg = np.polynomial.legendre.leggauss(4)
    offs = 0.5 * h * xg

    def edge(axis):
        # integral of F_axis along edges parallel to ``axis`` between nodes
        axes = [nodes, nodes, nodes]
        axes[axis] = mids
        P = np.meshgrid(*axes, indexing="ij")
        total = 0.0
        for o, w in zip(offs, wg):
            Q = list(P)
            Q[axis] = P[axis] + o
            comp = potential3d(spec.s, spec.epsilon, *Q)[axis]
            total = total + w * comp
        return spec.scale * 0.5 * h * total

    Ex, Ey, Ez = edge(0), edge(1), edge(2)
    # Ex: (n, n+1, n+1); Ey: (n+1, n, n+1); Ez: (n+1, n+1, n)
    fx = (Ey[:, :, :-1] + Ez[:, 1:, :] - Ey[:, :, 1:] - Ez[:, :-1, :]) / h**2
    fy = (Ez[:-1, :, :] + Ex[:, :, 1:] - Ez[1:, :, :] - Ex[:, :, :-1]) / h**2
    fz = (Ex[:, :-1, :] + Ey[1:, :, :] - Ex[:, 1:, :] - Ey[:-1, :, :]) / h**2
    return fx, fy, fz


# -- rescaling --------------------------------------------------------------


@dataclass
class RescaleResult:
    field: VectorField
    measured_ratio: float
    expected_ratio: float


def rescale_drift(spec: DriftSpec, a: float, r: float, m: float, grid: Grid, p: float) -> RescaleResult:
    """Sample ``a^{m-1} r V(r x)`` and compare ``L^p`` norms with ``V`` on ``grid``."""
    if not (a > 0 and r > 0):
        raise ValueError("need a, r > 0")
    coords = grid.mesh()
    base = spec.evaluate(*coords)
    c = a ** (m - 1.0) * r
    resc = tuple(c * comp for comp in spec.evaluate(*(r * x for x in coords)))
    Vb = VectorField(grid, base, on_faces=False)
    Vr = VectorField(grid, resc, on_faces=False)
    nb = lp_norm(Vb, p)
    ratio = lp_norm(Vr, p) / nb if nb > 0 else float("nan")
    expected = a ** (m - 1.0) * r ** (1.0 - grid.dim / p)
    return RescaleResult(Vr, ratio, expected)
