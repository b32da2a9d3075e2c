"""Moving-bump sub- and supersolutions of the pressure equation near a cone drift.

The pressure form is ``v_t - (m-1) v Δv - |∇v|^2 + V·∇v = 0``.  A bump
centred at ``(0, z(t))`` rides the drift into the origin from above and is a
subsolution; an inverted bump centred at ``(0, -z(t))`` with growing height
``k(t)`` is a supersolution.  Certification is by sampling: residual signs at
quasi-random points, plus the local-minimum structure of the transport margin
``f`` around the critical point.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import expit
from scipy.stats import qmc

from .drift import DIVFREE2D, DIVFREE3D, DriftSpec, in_cutoff_zone

SAFETY = 1.01
SIGN_TOL = 1e-8
FD_REL_STEP = 1e-3
NEGLIGIBLE = 1e-250  # bump values below this are treated as outside the support
R_MAX = {2: 1.0 / 8.0, 3: 1.0 / 9.0}


# -- radial profiles ---------------------------------------------------------


def sub_profile(R):
    """``e·exp(-1/(1-R²))`` on ``R < 1``, zero outside; returns value, φ', φ''."""
    R = np.abs(np.asarray(R, dtype=np.float64))
    inside = R < 1.0
    q = np.where(inside, 1.0 - R * R, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        val = np.where(inside, math.e * np.exp(-1.0 / q), 0.0)
    d1 = val * (-2.0 * R / q**2)
    d2 = val * (4.0 * R * R / q**4 - 2.0 / q**2 - 8.0 * R * R / q**3)
    return val, d1, d2


def _blend_step(u):
    """C-infinity step ``σ(u)`` from 0 at ``u <= 0`` to 1 at ``u >= 1``; returns σ, σ', σ''."""
    u = np.asarray(u, dtype=np.float64)
    mid = (u > 0.0) & (u < 1.0)
    uu = np.where(mid, u, 0.5)
    g = 1.0 / uu - 1.0 / (1.0 - uu)
    g1 = -1.0 / uu**2 - 1.0 / (1.0 - uu) ** 2
    g2 = 2.0 / uu**3 - 2.0 / (1.0 - uu) ** 3
    sig = expit(-g)
    sp = sig * expit(g)
    val = np.where(mid, sig, (u >= 1.0).astype(np.float64))
    d1 = np.where(mid, -sp * g1, 0.0)
    d2 = np.where(mid, -sp * (2.0 * sig - 1.0) * g1 * g1 - sp * g2, 0.0)
    return val, d1, d2


def super_profile(R):
    """``R²`` up to ½, blended to 1 on [½, 1] by a C-infinity step, then 1.

    ``φ = R² + S(R)(1 - R²)`` with ``S`` the step rescaled to [½, 1]; returns
    value, φ', φ''.
    """
    R = np.abs(np.asarray(R, dtype=np.float64))
    s0, s1, s2 = _blend_step(2.0 * R - 1.0)
    s1, s2 = 2.0 * s1, 4.0 * s2
    one_minus = 1.0 - R * R
    val = np.where(R >= 1.0, 1.0, R * R + s0 * one_minus)
    d1 = np.where(R >= 1.0, 0.0, 2.0 * R + s1 * one_minus - 2.0 * R * s0)
    d2 = np.where(R >= 1.0, 0.0, 2.0 + s2 * one_minus - 4.0 * R * s1 - 2.0 * s0)
    return val, d1, d2


def _local_scale(which: str, R):
    """Relative length scale of the profile at ``R``.

    The bump varies on the scale ``(1 - R²)²`` near its edge; the blended
    super profile is flat at both joints, so it keeps the unit scale.
    """
    if which == "sub":
        q = np.clip(1.0 - R * R, 0.0, 1.0)
        return np.clip(q * q, 1e-6, 1.0)
    return np.ones_like(R)


def radial_laplacian(d1, d2, R, dim: int):
    """``φ'' + (d-1)φ'/R`` with the ``R -> 0`` limit ``d·φ''``."""
    R = np.asarray(R, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = d2 + (dim - 1) * np.where(R > 0, d1 / np.where(R > 0, R, 1.0), d2)
    return lap


@lru_cache(maxsize=None)
def laplacian_cap(dim: int, n: int = 100_001, safety: float = SAFETY) -> float:
    """Measured ``max |Δφ_sub|`` over ``n`` radii, inflated by ``safety``."""
    R = np.linspace(0.0, 1.0, n)
    _, d1, d2 = sub_profile(R)
    return safety * float(np.max(np.abs(radial_laplacian(d1, d2, R, dim))))


def profile_inequality_lhs(m: float, dim: int, R):
    """``(m-1)φ(φ'' + (d-1)φ'/R) + φ'^2`` and ``φ`` for the super profile."""
    val, d1, d2 = super_profile(R)
    return (m - 1.0) * val * radial_laplacian(d1, d2, R, dim) + d1 * d1, val


@lru_cache(maxsize=None)
def profile_constant(m: float, dim: int, n: int = 100_001, safety: float = SAFETY) -> float:
    """Measured smallest ``C*`` with ``lhs <= C*·φ``, inflated by ``safety``."""
    R = np.linspace(0.0, 1.0, n)[1:]
    lhs, val = profile_inequality_lhs(m, dim, R)
    return safety * float(np.max(lhs / val))


# -- parameters --------------------------------------------------------------


@dataclass
class BarrierParams:
    """Constants and time profiles of the cone barriers.

    ``c_s`` defaults to half of ``min(s r²/(C_Δ (m-1) M), k(0))``: below the
    amplitude cap the bump is a subsolution, and below ``k(0)`` it stays
    under the supersolution plateau for all ``t`` (``c_s z^s`` decreases while
    ``k`` increases), so admissible initial data exist between the two.
    """

    s: float
    eps: float
    r: float
    m: float = 2.0
    dim: int = 2
    c_s: float | None = None
    safety: float = SAFETY
    M: float = field(init=False)
    T: float = field(init=False)
    C_delta: float = field(init=False)
    C_star: float = field(init=False)
    C0: float = field(init=False)
    cs_cap: float = field(init=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("barriers live in two or three dimensions")
        if not 0 < self.s <= 1:
            raise ValueError("need s in (0, 1]")
        if not 0 < self.eps < 0.25:
            raise ValueError("need eps in (0, 1/4) so that z reaches 4 eps")
        if self.dim == 2 and not 0 < self.r <= R_MAX[2]:
            raise ValueError("need r in (0, 1/8] in two dimensions")
        if self.dim == 3 and not 0 < self.r < R_MAX[3]:
            raise ValueError("need r in (0, 1/9) in three dimensions")
        if self.m <= 1:
            raise ValueError("need m > 1")
        s, r = self.s, self.r
        self.M = s ** (-1.5) if self.dim == 2 else s ** (-4.0 / 3.0)
        self.T = self.M * (1.0 - (4.0 * self.eps) ** (2.0 - s)) / (2.0 - s)
        self.C_delta = laplacian_cap(self.dim, safety=self.safety)
        self.C_star = profile_constant(float(self.m), self.dim, safety=self.safety)
        self.C0 = 2.0 * self.C_star * self.M / (r * r * s) * (4.0 * self.eps) ** (-s)
        self.cs_cap = s * r * r / (self.C_delta * (self.m - 1.0) * self.M)
        if self.c_s is None:
            self.c_s = 0.5 * min(self.cs_cap, 1.0 / self.k_denominator(0.0))
        if self.c_s <= 0:
            raise ValueError("need c_s > 0")

    # Unchecked profiles: the finite-difference stencils step slightly past [0, T].
    def z(self, t):
        base = 1.0 - (2.0 - self.s) * np.asarray(t, dtype=np.float64) / self.M
        return base ** (1.0 / (2.0 - self.s))

    def dz(self, t):
        return -self.z(t) ** (self.s - 1.0) / self.M

    def k_denominator(self, t):
        return self.C0 - self.C_star * self.M / (self.r**2 * self.s) * self.z(t) ** (-self.s)

    def k(self, t):
        return 1.0 / self.k_denominator(t)

    def dk(self, t):
        k = self.k(t)
        return self.C_star * k * k / (self.r * self.z(t)) ** 2

    def drift(self) -> DriftSpec:
        return DriftSpec(DIVFREE2D if self.dim == 2 else DIVFREE3D, s=self.s, epsilon=self.eps)

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items()}


def _check_time(p: BarrierParams, t):
    t = np.asarray(t, dtype=np.float64)
    slack = 1e-12 * max(1.0, p.T)
    if np.any(t < -slack) or np.any(t > p.T + slack):
        raise ValueError(f"t must lie in [0, T] = [0, {p.T!r}]")
    return np.clip(t, 0.0, p.T)


def z_profile(p: BarrierParams, t):
    """``z(t) = (1 - (2-s) t / M)^{1/(2-s)}`` on ``[0, T]``."""
    return p.z(_check_time(p, t))


def k_profile(p: BarrierParams, t):
    """``k(t) = (C0 - C* M r^{-2} s^{-1} z^{-s})^{-1}`` on ``[0, T]``."""
    t = _check_time(p, t)
    den = p.k_denominator(t)
    if np.any(den <= 0):
        raise ValueError("k denominator is not positive; parameters are inconsistent")
    return 1.0 / den


def _scaled_radius(p: BarrierParams, coords, t, sign: float):
    """``|x - sign·z e_y| / (r z)`` for coordinate arrays ``coords``."""
    z = p.z(t)
    sq = sum(np.asarray(c, dtype=np.float64) ** 2 for c in coords[:-1])
    sq = sq + (np.asarray(coords[-1], dtype=np.float64) - sign * z) ** 2
    return np.sqrt(sq) / (p.r * z)


def _sub_value(p, coords, t):
    return p.c_s * p.z(t) ** p.s * sub_profile(_scaled_radius(p, coords, t, 1.0))[0]


def _super_value(p, coords, t, k_scale=1.0):
    return k_scale * p.k(t) * super_profile(_scaled_radius(p, coords, t, -1.0))[0]


def subsolution_eval(p: BarrierParams, coords, t):
    """``c_s z^s φ_sub(|x - z e_y| / (r z))``; ``coords`` is one array per axis."""
    if len(coords) != p.dim:
        raise ValueError(f"expected {p.dim} coordinate arrays")
    return _sub_value(p, coords, _check_time(p, t))


def supersolution_eval(p: BarrierParams, coords, t):
    """``k(t) φ_super(|x + z e_y| / (r z))``."""
    if len(coords) != p.dim:
        raise ValueError(f"expected {p.dim} coordinate arrays")
    return _super_value(p, coords, _check_time(p, t))


# -- transport margin and critical point ------------------------------------


def transport_margin(s: float, *coords):
    """The margin ``f`` whose sign decides the transport inequality.

    2D: ``x² + y(y+1) + ½|x-y|^{s-1}(x+y+1) + ½|x+y|^{s-1}(-x+y+1)``, minimal
    at ``(0, -1)``.  3D: the analogous quartic-weighted form, minimal at
    ``(0, 0, 1)``.
    """
    if len(coords) == 2:
        x, y = (np.asarray(c, dtype=np.float64) for c in coords)
        a = np.abs(x - y) ** (s - 1.0)
        b = np.abs(x + y) ** (s - 1.0)
        return x * x + y * (y + 1.0) + 0.5 * a * (x + y + 1.0) + 0.5 * b * (-x + y + 1.0)
    x1, x2, y = (np.asarray(c, dtype=np.float64) for c in coords)
    a = np.abs(y - x1 + x2) ** (s - 1.0)
    b = np.abs(y + x1 - x2) ** (s - 1.0)
    c = np.abs(y + x1 + x2) ** (s - 1.0)
    return (
        -0.25 * a * (x1 + y - 1.0)
        - 0.25 * b * (x2 + y - 1.0)
        - 0.25 * c * (-x1 - x2 + 2.0 * (y - 1.0))
        + x1 * x1
        + x2 * x2
        + y * (y - 1.0)
    )


def critical_point(dim: int) -> np.ndarray:
    return np.array([0.0, -1.0]) if dim == 2 else np.array([0.0, 0.0, 1.0])


def expected_hessian(s: float, dim: int) -> np.ndarray:
    if dim == 2:
        return np.array([[2.0 * s, 0.0], [0.0, 2.0 * (2.0 - s)]])
    c = 0.5 * (1.0 - s)
    return np.array([[1.0 + s, 0.0, c], [0.0, 1.0 + s, c], [c, c, 4.0 - 2.0 * s]])


_D1 = (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0)
_D2 = (np.array([-2.0, -1.0, 0.0, 1.0, 2.0]), np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0)


def _fd_derivatives(fn, x0: np.ndarray, h: float):
    """Fourth-order central value, gradient and Hessian of ``fn`` at ``x0``."""
    d = x0.size
    eye = np.eye(d)

    def at(shift):
        return float(fn(*(x0 + shift)))

    grad = np.array([sum(w * at(o * h * eye[i]) for o, w in zip(*_D1)) / h for i in range(d)])
    hess = np.zeros((d, d))
    for i in range(d):
        hess[i, i] = sum(w * at(o * h * eye[i]) for o, w in zip(*_D2)) / h**2
        for j in range(i + 1, d):
            acc = 0.0
            for oi, wi in zip(*_D1):
                for oj, wj in zip(*_D1):
                    acc += wi * wj * at(oi * h * eye[i] + oj * h * eye[j])
            hess[i, j] = hess[j, i] = acc / h**2
    return at(np.zeros(d)), grad, hess


def _ball_points(dim: int, n_log2: int, seed: int, surface: bool = False) -> np.ndarray:
    """Sobol points in (or on) the unit ball, shape ``(N, dim)``."""
    u = qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(n_log2)
    rad = np.ones(len(u)) if surface else u[:, 0] ** (1.0 / dim)
    if dim == 2:
        th = 2.0 * np.pi * u[:, 1]
        return rad[:, None] * np.column_stack([np.cos(th), np.sin(th)])
    ct = 2.0 * u[:, 1] - 1.0
    st = np.sqrt(1.0 - ct * ct)
    ph = 2.0 * np.pi * u[:, 2]
    return rad[:, None] * np.column_stack([st * np.cos(ph), st * np.sin(ph), ct])


@dataclass
class CriticalPointCertificate:
    """Finite-difference value, gradient and Hessian of ``f`` at its critical point, plus ``r_s``."""

    s: float
    dim: int
    point: list
    value: float
    gradient: list
    hessian: list
    expected: list
    max_hessian_rel_error: float
    r_s: float
    samples_per_radius: int

    @property
    def hessian_entries(self) -> dict:
        names = ["x", "y"] if self.dim == 2 else ["x1", "x2", "y"]
        return {
            names[i] + names[j]: self.hessian[i][j]
            for i in range(self.dim)
            for j in range(i, self.dim)
        }


def _nonnegative_on_ball(s, dim, center, radius, pts) -> bool:
    vals = transport_margin(s, *(center[:, None] + radius * pts.T))
    return bool(np.all(vals >= -1e-12))


def critical_point_certificate(
    s: float,
    dim: int,
    n_samples: int = 10_000,
    rel_tol: float = 1e-3,
    search_max: float = 0.5,
    seed: int = 0,
) -> CriticalPointCertificate:
    """Check the critical point of ``f`` and find the radius ``r_s`` where ``f >= 0``.

    Value and gradient must vanish to 1e-8 and the Hessian must match the
    closed form to 1e-5 relative, otherwise ``ValueError``.  ``r_s`` is found
    by bisection to ``rel_tol`` relative, testing each candidate ball with
    at least ``n_samples`` Sobol points split between interior and sphere.
    """
    if not 0 < s < 1:
        raise ValueError("need s in (0, 1)")
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    x0 = critical_point(dim)
    value, grad, hess = _fd_derivatives(lambda *c: transport_margin(s, *c), x0, 1e-3)
    want = expected_hessian(s, dim)
    scale = float(np.max(np.abs(want)))
    rel = float(np.max(np.abs(hess - want) / np.maximum(np.abs(want), scale)))
    if abs(value) > 1e-8 or np.max(np.abs(grad)) > 1e-8:
        raise ValueError(f"f is not critical at {x0.tolist()}: value {value!r}, gradient {grad.tolist()}")
    if rel > 1e-5:
        raise ValueError(f"Hessian {hess.tolist()} differs from {want.tolist()} (rel {rel:.3g})")

    n_log2 = max(1, math.ceil(math.log2(max(n_samples, 2) / 2)))
    pts = np.vstack([_ball_points(dim, n_log2, seed), _ball_points(dim, n_log2, seed + 1, surface=True)])

    def ok(radius):
        return _nonnegative_on_ball(s, dim, x0, radius, pts)

    hi = search_max
    if ok(hi):
        r_s = hi
    else:
        lo = hi
        for _ in range(60):
            lo *= 0.5
            if ok(lo):
                break
        else:
            raise ValueError("f is negative on every tested ball; no r_s found")
        while hi - lo > rel_tol * lo:
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if ok(mid) else (lo, mid)
        r_s = lo
    return CriticalPointCertificate(
        s=s,
        dim=dim,
        point=x0.tolist(),
        value=value,
        gradient=grad.tolist(),
        hessian=hess.tolist(),
        expected=want.tolist(),
        max_hessian_rel_error=rel,
        r_s=r_s,
        samples_per_radius=len(pts),
    )


def certified_params(s: float, eps: float, m: float = 2.0, dim: int = 2, fraction: float = 0.5, cert=None):
    """Barrier parameters with ``r = fraction·min(r_s, r_max)`` and the default ``c_s``."""
    cert = cert or critical_point_certificate(s, dim)
    r = fraction * min(cert.r_s, R_MAX[dim])
    return BarrierParams(s=s, eps=eps, r=r, m=m, dim=dim), cert


# -- residual sign check -----------------------------------------------------


@dataclass
class ConditionResult:
    max_violation: float
    witness: list | None

    @property
    def passed(self) -> bool:
        return self.max_violation <= SIGN_TOL


@dataclass
class SignReport:
    """Outcome of a sampled residual sign check.

    Violations are normalized pointwise by the largest single term, so the
    verdict compares dimensionless numbers against ``tolerance``.
    """

    which: str
    params: dict
    n_samples: int
    n_skipped: int
    n_negligible: int
    tolerance: float
    residual: ConditionResult
    conditions: dict

    @property
    def passed(self) -> bool:
        return self.residual.passed and all(c.passed for c in self.conditions.values())

    @property
    def max_violation(self) -> float:
        return max([self.residual.max_violation] + [c.max_violation for c in self.conditions.values()])

    @property
    def witness_point(self):
        if not self.residual.passed:
            return self.residual.witness
        for c in self.conditions.values():
            if not c.passed:
                return c.witness
        return self.residual.witness

    def failing(self) -> list:
        out = [] if self.residual.passed else ["residual"]
        return out + [k for k, c in self.conditions.items() if not c.passed]


def _ratio(num, *terms):
    """``max(num, 0) / max |terms|`` with 0 where every term vanishes."""
    scale = np.max(np.abs(np.stack(terms)), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0, np.maximum(num, 0.0) / np.where(scale > 0, scale, 1.0), 0.0)


def _sample_chunk(p: BarrierParams, which, drift: DriftSpec, k_scale, unit, t):
    """Pointwise normalized violations for one chunk of samples."""
    d = p.dim
    sign = 1.0 if which == "sub" else -1.0
    z = p.z(t)
    ey = np.eye(d)[-1]
    X = sign * z[None, :] * ey[:, None] + p.r * z[None, :] * unit.T
    R = np.sqrt(np.sum(unit * unit, axis=1))

    if which == "sub":
        def value(coords, tt):
            return _sub_value(p, coords, tt)
    else:
        def value(coords, tt):
            return _super_value(p, coords, tt, k_scale)

    lam = _local_scale(which, R)
    hx = FD_REL_STEP * lam * p.r * z
    motion = p.r * z / np.abs(p.dz(t))
    ht = FD_REL_STEP * lam * (motion if which == "sub" else np.minimum(motion, p.k(t) / p.dk(t)))

    v0 = value(tuple(X), t)
    vt = sum(w * value(tuple(X), t + o * ht) for o, w in zip(*_D1)) / ht
    grad = []
    lap = np.zeros_like(v0)
    for i in range(d):
        step = np.eye(d)[i][:, None] * hx[None, :]
        shifted = [value(tuple(X + o * step), t) for o in _D2[0]]
        lap += sum(w * f for w, f in zip(_D2[1], shifted)) / hx**2
        grad.append(sum(w * shifted[j] for j, w in zip((0, 1, 3, 4), _D1[1])) / hx)
    V = drift.evaluate(*X)
    adv = sum(V[i] * grad[i] for i in range(d))
    diff = (p.m - 1.0) * v0 * lap
    grad2 = sum(g * g for g in grad)
    residual = vt - diff - grad2 + adv

    # Transport part: rate of change of the profile along the drift, height factor removed.
    if which == "sub":
        height_rate = p.s * p.dz(t) / z
    else:
        height_rate = p.dk(t) / p.k(t)
    transport = vt + adv - v0 * height_rate

    out = {}
    if which == "sub":
        out["residual"] = _ratio(residual, vt, diff, grad2, adv)
        out["transport"] = _ratio(transport, vt, adv, v0 * height_rate)
        # (z^s)' + C_Δ (m-1) c_s z^{2s-2} / r^2 <= 0
        amp = p.C_delta * (p.m - 1.0) * p.c_s * z ** (2.0 * p.s - 2.0) / p.r**2
        zs_rate = p.s * z ** (p.s - 1.0) * p.dz(t)
        out["amplitude"] = _ratio(zs_rate + amp, zs_rate, amp)
    else:
        out["residual"] = _ratio(-residual, vt, diff, grad2, adv)
        out["transport"] = _ratio(-transport, vt, adv, v0 * height_rate)
        kk = k_scale * p.k(t)
        dk_fd = k_scale * sum(w * p.k(t + o * ht) for o, w in zip(*_D1)) / ht
        need = p.C_star * kk * kk / (p.r * z) ** 2
        out["k_growth"] = _ratio(need - dk_fd, need, dk_fd)
        lhs, val = profile_inequality_lhs(p.m, d, R)
        out["profile"] = _ratio(lhs - p.C_star * val, lhs, p.C_star * val)
    skip = in_cutoff_zone(p.eps, tuple(X)) if drift.tag in (DIVFREE2D, DIVFREE3D) else np.zeros(t.size, bool)
    negligible = (sub_profile(R)[0] < NEGLIGIBLE) if which == "sub" else np.zeros(t.size, bool)
    return out, X, skip, negligible


def residual_sign_check(
    p: BarrierParams,
    which: str,
    n_samples: int = 1 << 17,
    seed: int = 0,
    drift: DriftSpec | None = None,
    k_scale: float = 1.0,
    jobs: int = 1,
    chunk: int = 1 << 14,
) -> SignReport:
    """Sample the pressure-equation residual of a barrier and check its sign.

    ``which="sub"`` needs residual <= 0 on the support ball, ``"super"``
    needs >= 0 on the ball where the profile is not constant (outside it the
    residual is ``k' > 0``).  Derivatives are fourth-order central
    differences.  Alongside the full residual, the sufficient conditions are
    checked separately: transport sign and amplitude cap for ``sub``;
    transport sign, ``k' >= C* k²/(rz)²`` and the profile inequality for
    ``super``.  ``k_scale`` multiplies ``k`` (a deliberate perturbation).
    Samples whose drift sits in a cutoff transition zone are skipped and
    counted; so are bump samples whose value is below ``NEGLIGIBLE``, where
    every term is lost to underflow.
    """
    if which not in ("sub", "super"):
        raise ValueError("which must be 'sub' or 'super'")
    drift = drift if drift is not None else p.drift()
    d = p.dim
    n_log2 = max(1, math.ceil(math.log2(n_samples)))
    u = qmc.Sobol(d=d + 1, scramble=True, seed=seed).random_base2(n_log2)
    rad = u[:, 0] ** (1.0 / d)
    if d == 2:
        th = 2.0 * np.pi * u[:, 1]
        unit = rad[:, None] * np.column_stack([np.cos(th), np.sin(th)])
    else:
        ct = 2.0 * u[:, 1] - 1.0
        st = np.sqrt(1.0 - ct * ct)
        ph = 2.0 * np.pi * u[:, 2]
        unit = rad[:, None] * np.column_stack([st * np.cos(ph), st * np.sin(ph), ct])
    times = u[:, -1] * p.T

    bounds = [(a, min(a + chunk, len(times))) for a in range(0, len(times), chunk)]

    def work(ab):
        a, b = ab
        return _sample_chunk(p, which, drift, k_scale, unit[a:b], times[a:b])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(ab) for ab in bounds]

    names = list(parts[0][0].keys())
    best = {k: (0.0, None) for k in names}
    skipped = negligible = 0
    for (a, _), (viol, X, skip, tiny) in zip(bounds, parts):
        skipped += int(np.count_nonzero(skip))
        negligible += int(np.count_nonzero(tiny & ~skip))
        for k in names:
            vals = np.where(skip | tiny, 0.0, viol[k])
            i = int(np.argmax(vals))
            if vals[i] > best[k][0]:
                best[k] = (float(vals[i]), [float(c) for c in X[:, i]] + [float(times[a + i])])
    res = {k: ConditionResult(*best[k]) for k in names}
    return SignReport(
        which=which,
        params=p.as_dict(),
        n_samples=len(times) - skipped - negligible,
        n_skipped=skipped,
        n_negligible=negligible,
        tolerance=SIGN_TOL,
        residual=res.pop("residual"),
        conditions=res,
    )


def certificate_report(cert: CriticalPointCertificate, reports=()) -> str:
    """JSON text with params, max violation, witness, ``r_s`` and Hessian entries."""
    worst = max(reports, key=lambda r: r.max_violation, default=None)
    doc = {
        "params": [r.params for r in reports],
        "checks": [
            {"which": r.which, "passed": r.passed, "max_violation": r.max_violation, "n_samples": r.n_samples, "n_skipped": r.n_skipped}
            for r in reports
        ],
        "max_violation": worst.max_violation if worst else 0.0,
        "witness_point": worst.witness_point if worst else None,
        "r_s": cert.r_s,
        "hessian_entries": cert.hessian_entries,
        "hessian_max_rel_error": cert.max_hessian_rel_error,
    }
    return json.dumps(doc, indent=2, sort_keys=True)
