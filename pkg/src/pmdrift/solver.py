"""Explicit finite-volume solver for ``u_t = Lap(u^m + eps u) + div(u V)``.

Forward Euler with the grid-core operators.  The time step is the largest
one for which the update is a monotone map of the cell values, which gives
positivity, comparison and L1 contraction at the discrete level.  The module
also carries the exact-solution oracles (Barenblatt profile, stationary
profile under a radial potential) and the weak-form residual.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import integrate as sint
from scipy import optimize as sopt

from . import _backend, _kernels_py
from .diagnostics import SpaceTimeField
from .drift import DriftSpec, RadialPotential
from .grid import (
    Grid,
    ParabolicCylinder,
    ScalarField,
    VectorField,
    check_finite,
    psum,
    sphere_area,
    write_snapshot,
)

NEG_TOL = 1e-14


class SolverError(RuntimeError):
    """Raised when a step cannot be taken safely; the message names the cause."""


@dataclass
class StepControl:
    cfl_diffusion: float = 0.45
    cfl_advection: float = 0.45
    dt_max: float = math.inf
    positivity_clip_threshold: float = 0.0

    def __post_init__(self):
        for name in ("cfl_diffusion", "cfl_advection"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        if self.positivity_clip_threshold < 0:
            raise ValueError("positivity_clip_threshold must be >= 0")


class _Operator:
    """Per-run constants: face drift, geometry and the worst-case rates."""

    def __init__(self, grid: Grid, V: VectorField, backend=None):
        self.grid = grid
        self.V = V
        self.kern = _backend.get(backend)
        self.faces = tuple(np.ascontiguousarray(c) for c in V.components)
        h = grid.h
        if grid.radial:
            self.area = grid.face_area()
            self.vol = grid.cell_volumes()
            a = self.area
            self.diff_rate = float(np.max((a[:-1] + a[1:]) / (h * self.vol)))
            vf = self.faces[0].copy()
            vf[0] = vf[-1] = 0.0
            # outflow of cell i: through its upper face when vf < 0, lower face when vf > 0
            out = (a[1:] * np.maximum(-vf[1:], 0) + a[:-1] * np.maximum(vf[:-1], 0)) / self.vol
            self.adv_rate = float(np.max(out))
        else:
            self.area = self.vol = None
            self.diff_rate = 2.0 * grid.dim / h**2
            out = np.zeros(grid.shape)
            for ax, c in enumerate(self.faces):
                inner = c.copy()
                lo = [slice(None)] * c.ndim
                hi = [slice(None)] * c.ndim
                lo[ax], hi[ax] = 0, -1
                inner[tuple(lo)] = 0.0
                inner[tuple(hi)] = 0.0
                up = [slice(None)] * c.ndim
                dn = [slice(None)] * c.ndim
                up[ax], dn[ax] = slice(1, None), slice(0, -1)
                out += np.maximum(-inner[tuple(up)], 0) + np.maximum(inner[tuple(dn)], 0)
            self.adv_rate = float(np.max(out)) / h

    def rhs(self, u: np.ndarray, m: float, eps: float) -> np.ndarray:
        g, k = self.grid, self.kern
        if g.radial:
            return k.lap_phi_radial(u, m, eps, g.h, self.area, self.vol) + k.div_upwind_radial(
                u, self.faces[0], self.area, self.vol
            )
        return k.lap_phi(u, m, eps, g.h) + k.div_upwind(u, self.faces, g.h)

    def dt(self, umax: float, m: float, eps: float, ctl: StepControl) -> float:
        if not math.isfinite(umax):
            raise SolverError(f"max u is not finite ({umax!r})")
        if not math.isfinite(self.adv_rate):
            raise SolverError(f"drift outflow rate is not finite ({self.adv_rate!r})")
        dt = _kernels_py._rates_dt(
            umax, m, eps, self.diff_rate, self.adv_rate, ctl.cfl_diffusion, ctl.cfl_advection, ctl.dt_max
        )
        if not (dt > 0 and math.isfinite(dt)):
            raise SolverError(f"no admissible time step (max u = {umax!r}, outflow rate = {self.adv_rate!r})")
        return dt

    def advance(self, u, m, eps, ctl: StepControl, t: float, t_end: float, max_steps: int, cap: bool = True):
        """Run the fused stepping loop; returns ``(u, t, steps)``.

        ``cap=False`` switches the stability limits off, so ``dt_max`` is the step.
        """
        self.dt(float(np.max(u)), m, eps, ctl)  # validates rates before entering the loop
        neg = max(NEG_TOL, ctl.positivity_clip_threshold)
        diff_rate, adv_rate = (self.diff_rate, self.adv_rate) if cap else (0.0, 0.0)
        out, t, k, status, idx, val = self.kern.advance(
            u, float(m), float(eps), self.grid.h, self.faces, self.area, self.vol, diff_rate,
            adv_rate, ctl.cfl_diffusion, ctl.cfl_advection, ctl.dt_max, neg, float(t), float(t_end),
            int(max_steps),
        )
        if status:
            cell = tuple(int(i) for i in np.unravel_index(idx, self.grid.shape))
            what = "negative density" if status == 1 else "non-finite density"
            raise SolverError(f"{what} {val!r} at cell {cell} (t = {t!r}, step {k})")
        return out, t, k


@dataclass
class SolverState:
    u: ScalarField
    t: float
    m: float
    eps_reg: float = 0.0
    drift: DriftSpec = field(default_factory=DriftSpec)
    V: VectorField | None = None
    initial_mass: float | None = None
    backend: str | None = None
    steps: int = 0
    _op: _Operator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.eps_reg < 0:
            raise ValueError("eps_reg must be >= 0")
        if np.any(self.u.values < 0):
            raise ValueError("initial density has negative cells")
        if self.V is None:
            self.V = self.drift.sample_faces(self.u.grid)
        if not self.V.on_faces:
            raise ValueError("drift must be sampled on faces")
        if self.initial_mass is None:
            self.initial_mass = self.mass()
        if self._op is None:
            self._op = _Operator(self.u.grid, self.V, self.backend)

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def mass(self) -> float:
        return psum(self.u.values * self.u.grid.cell_volumes())

    def stable_dt(self, ctl: StepControl) -> float:
        return self._op.dt(float(np.max(self.u.values)), self.m, self.eps_reg, ctl)

    def config_items(self) -> dict:
        g = self.grid
        items = {
            "dimension": str(g.dim),
            "grid.n": str(g.n),
            "grid.extent": repr(g.half_extent),
            "grid.mode": g.mode,
            "m": repr(float(self.m)),
            "eps_reg": repr(float(self.eps_reg)),
            "t": repr(float(self.t)),
        }
        items.update(self.drift.config_items())
        return items


def step(state: SolverState, ctl: StepControl, dt: float | None = None) -> SolverState:
    """One forward Euler step; ``dt`` defaults to the stable step for ``state``.

    An explicit ``dt`` is taken as given (no stability cap); the positivity
    check still applies to the result.
    """
    if dt is not None:
        if not dt > 0:
            raise ValueError("dt must be positive")
        ctl = replace(ctl, dt_max=dt)
    new, t, _ = state._op.advance(state.u.values, state.m, state.eps_reg, ctl, state.t, math.inf, 1, cap=dt is None)
    return replace(state, u=ScalarField(state.grid, new), t=t, steps=state.steps + 1)


def advance(state: SolverState, ctl: StepControl, t_end: float, max_steps: int) -> SolverState:
    """Up to ``max_steps`` stable steps, the last one shortened to land on ``t_end``."""
    new, t, k = state._op.advance(state.u.values, state.m, state.eps_reg, ctl, state.t, t_end, max_steps)
    if t_end - t <= _kernels_py.end_tolerance(t_end):
        t = t_end
    return replace(state, u=ScalarField(state.grid, new), t=t, steps=state.steps + k)


# -- observers and time series -------------------------------------------


@dataclass
class Observers:
    """What ``run_until`` records every ``stride`` steps."""

    probes: list = field(default_factory=list)
    cylinder: ParabolicCylinder | None = None
    stride: int = 1

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def probe_index(self, grid: Grid):
        out = []
        centers = grid.axis_centers()
        for p in self.probes:
            p = np.atleast_1d(np.asarray(p, dtype=np.float64))
            if p.size != grid.ndim_array:
                raise ValueError(f"probe {tuple(p)} has the wrong dimension")
            out.append(tuple(int(np.argmin(np.abs(centers - c))) for c in p))
        return out


@dataclass
class TimeSeries:
    columns: list
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=np.float64)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([repr(float(v)) for v in r])


class _Recorder:
    def __init__(self, state: SolverState, obs: Observers):
        self.obs = obs
        self.idx = obs.probe_index(state.grid)
        self.ball = obs.cylinder.spatial_mask(state.grid) if obs.cylinder is not None else None
        names = ["t", "mass", "sup", "inf", "osc_Q"] + [f"probe_{i + 1}" for i in range(len(self.idx))]
        self.series = TimeSeries(names)
        self.qmax = -math.inf
        self.qmin = math.inf

    def record(self, st: SolverState) -> None:
        u = st.u.values
        osc = math.nan
        if self.ball is not None and np.any(self.ball):
            if self.obs.cylinder.time_mask([st.t])[0]:
                vals = u[self.ball]
                self.qmax = max(self.qmax, float(np.max(vals)))
                self.qmin = min(self.qmin, float(np.min(vals)))
            if self.qmax >= self.qmin:
                osc = self.qmax - self.qmin
        row = [st.t, st.mass(), float(np.max(u)), float(np.min(u)), osc]
        row += [float(u[i]) for i in self.idx]
        self.series.rows.append(row)


def run_until(
    state: SolverState,
    t_end: float,
    ctl: StepControl,
    observers: Observers | None = None,
    series_path=None,
    max_steps: int | None = None,
    snapshots: list | None = None,
) -> tuple[SolverState, TimeSeries]:
    """Step to ``t_end`` (the last step is shortened to land on it).

    ``snapshots``, when given, collects ``(t, values)`` on the observer stride.
    """
    if t_end < state.t:
        raise ValueError("t_end precedes the current time")
    obs = observers or Observers()
    rec = _Recorder(state, obs)
    rec.record(state)
    if snapshots is not None:
        snapshots.append((state.t, state.u.values.copy()))
    tol = _kernels_py.end_tolerance(t_end)
    budget = math.inf if max_steps is None else max_steps
    taken = 0
    while t_end - state.t > tol and taken < budget:
        chunk = int(min(obs.stride - state.steps % obs.stride, budget - taken))
        before = state.steps
        state = advance(state, ctl, t_end, chunk)
        taken += state.steps - before
        if state.steps % obs.stride == 0 or state.t == t_end:
            rec.record(state)
            if snapshots is not None:
                snapshots.append((state.t, state.u.values.copy()))
    if rec.series.rows[-1][0] != state.t:
        rec.record(state)
        if snapshots is not None:
            snapshots.append((state.t, state.u.values.copy()))
    if series_path is not None:
        rec.series.write_csv(series_path)
    return state, rec.series


def run_coupled(
    states: list,
    t_end: float | None,
    ctl: StepControl,
    n_steps: int | None = None,
    stride: int = 1,
) -> tuple[list, list]:
    """Advance several states in lockstep with a shared step.

    The shared step is the minimum of the individual stable steps, so the
    update is one monotone map applied to every state.  Returns the final
    states and one ``SpaceTimeField`` history per state.
    """
    if not states:
        raise ValueError("need at least one state")
    g = states[0].grid
    if any(s.grid != g for s in states):
        raise ValueError("coupled runs need a common grid")
    if t_end is None and n_steps is None:
        raise ValueError("give t_end or n_steps")
    times = [states[0].t]
    frames = [[s.u.values.copy()] for s in states]
    count = 0
    while True:
        if n_steps is not None and count >= n_steps:
            break
        if t_end is not None and t_end - states[0].t <= _kernels_py.end_tolerance(t_end):
            break
        dt = min(s.stable_dt(ctl) for s in states)
        if t_end is not None:
            dt = min(dt, t_end - states[0].t)
        states = [step(s, ctl, dt) for s in states]
        count += 1
        if count % stride == 0:
            times.append(states[0].t)
            for f, s in zip(frames, states):
                f.append(s.u.values.copy())
    if times[-1] != states[0].t:
        times.append(states[0].t)
        for f, s in zip(frames, states):
            f.append(s.u.values.copy())
    return states, [SpaceTimeField(g, np.array(times), np.stack(f)) for f in frames]


# -- checkpoints ----------------------------------------------------------


def write_checkpoint(state: SolverState, path) -> tuple[Path, Path]:
    """Snapshot CSV plus a ``.cfg`` sidecar holding every state key."""
    path = Path(path)
    write_snapshot(path, state.u)
    side = path.with_suffix(".cfg")
    with open(side, "w") as fh:
        for k, v in state.config_items().items():
            fh.write(f"{k}={v}\n")
    return path, side


# -- oracles --------------------------------------------------------------


@dataclass(frozen=True)
class BarenblattConstants:
    alpha: float
    k: float
    C: float
    gamma: float


def barenblatt_constants(m: float, d: int, mass: float) -> BarenblattConstants:
    if not m > 1:
        raise ValueError("Barenblatt profile needs m > 1")
    if not mass > 0:
        raise ValueError("mass must be positive")
    alpha = d / (d * (m - 1.0) + 2.0)
    k = (m - 1.0) * alpha / (2.0 * m * d)
    gamma = 1.0 / (m - 1.0)
    unit = k ** (-d / 2) * math.pi ** (d / 2) * math.exp(math.lgamma(gamma + 1) - math.lgamma(gamma + 1 + d / 2))
    C = (mass / unit) ** (1.0 / (gamma + d / 2))
    return BarenblattConstants(alpha, k, C, gamma)


def barenblatt_oracle(m: float, d: int, mass: float, x, t: float):
    """Source-type solution of the drift-free equation; ``x`` has last axis ``d``
    (a plain array of coordinates when ``d = 1``)."""
    if not t > 0:
        raise ValueError("t must be positive")
    c = barenblatt_constants(m, d, mass)
    x = np.asarray(x, dtype=np.float64)
    r2 = x * x if d == 1 and (x.ndim == 0 or x.shape[-1] != 1) else np.sum(x * x, axis=-1)
    base = c.C - c.k * r2 * t ** (-2.0 * c.alpha / d)
    return t ** (-c.alpha) * np.maximum(base, 0.0) ** c.gamma


def barenblatt_radius(m: float, d: int, mass: float, t: float) -> float:
    c = barenblatt_constants(m, d, mass)
    return math.sqrt(c.C / c.k) * t ** (c.alpha / d)


def barenblatt_field(grid: Grid, m: float, mass: float, t: float) -> ScalarField:
    """Cell averages would be better near the front; midpoint samples suffice here."""
    if grid.radial:
        return ScalarField(grid, barenblatt_oracle(m, grid.dim, mass, grid.axis_centers(), t))
    pts = np.stack(grid.mesh(), axis=-1)
    vals = barenblatt_oracle(m, grid.dim, mass, pts if grid.dim > 1 else pts[..., 0], t)
    return ScalarField(grid, vals)


def _as_potential(Phi, dim: int):
    if isinstance(Phi, RadialPotential):
        return Phi
    if isinstance(Phi, DriftSpec):
        return Phi.potential(dim)
    raise TypeError("Phi must be a RadialPotential or a potential DriftSpec")


def _breakpoints(pot) -> list:
    return [float(getattr(pot, a)) for a in ("r1", "r2", "b", "b2") if hasattr(pot, a)]


def _support_radius(pot, level: float) -> float:
    """Largest r with ``Phi(r) <= level`` (``Phi`` is nondecreasing)."""
    f = lambda r: float(pot(np.array([r]))[0]) - level  # noqa: E731
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("potential does not reach the support level")
    lo = 0.0
    if f(lo) >= 0:
        return 0.0
    return sopt.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def stationary_mass(pot, m: float, C: float, dim: int) -> float:
    if C <= 0:
        return 0.0
    gamma = 1.0 / (m - 1.0)
    R = _support_radius(pot, m * C / (m - 1.0))
    pts = [p for p in _breakpoints(pot) if 0 < p < R]
    start = max(pts, default=1.0)
    if R > 10.0 * start:
        # long tails of bounded potentials: split geometrically
        pts += list(np.geomspace(start, R, int(math.log10(R / start)) * 4 + 2)[1:-1])
    integrand = lambda r: max(C - (m - 1.0) / m * float(pot(np.array([r]))[0]), 0.0) ** gamma * r ** (dim - 1)  # noqa: E731
    val, _ = sint.quad(integrand, 0.0, R, points=pts or None, epsabs=1e-15, epsrel=1e-13, limit=400)
    return sphere_area(dim) * val


def stationary_constant(Phi, m: float, mass: float, dim: int) -> float:
    """``C(M)`` by bisection on the increasing mass map."""
    if not mass > 0:
        raise ValueError("mass must be positive")
    if not m > 1:
        raise ValueError("m must be > 1")
    pot = _as_potential(Phi, dim)
    # for a bounded potential the mass map blows up as C approaches this level
    top = (m - 1.0) / m * pot.sup
    lo, hi = 0.0, min(1.0, 0.5 * top)
    while stationary_mass(pot, m, hi, dim) < mass:
        lo, hi = hi, min(2.0 * hi, 0.5 * (hi + top))
        if not top - hi > 1e-14 * top:
            raise ValueError("mass is out of reach below the potential's supremum")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        mm = stationary_mass(pot, m, mid, dim)
        if abs(mm - mass) <= 1e-12 * mass or mid in (lo, hi):
            return mid
        if mm < mass:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def stationary_profile(Phi, m: float, mass: float, grid: Grid) -> tuple[ScalarField, float]:
    """``rho_M = (C(M) - (m-1) Phi / m)_+^{1/(m-1)}`` sampled at cell centres."""
    pot = _as_potential(Phi, grid.dim)
    C = stationary_constant(pot, m, mass, grid.dim)
    r = grid.radius()
    vals = np.maximum(C - (m - 1.0) / m * pot(r), 0.0) ** (1.0 / (m - 1.0))
    return ScalarField(grid, vals), C


# -- comparison / contraction --------------------------------------------


@dataclass
class ContractionReport:
    times: np.ndarray
    series: np.ndarray
    nonincreasing: bool
    max_increase: float


def l1_contraction_probe(h1: SpaceTimeField, h2: SpaceTimeField, slack: float = 1e-8) -> ContractionReport:
    """``int (u1 - u2)_+`` along two histories on a common grid and clock."""
    if h1.grid != h2.grid:
        raise ValueError("histories live on different grids")
    if h1.times.shape != h2.times.shape or np.any(h1.times != h2.times):
        raise ValueError("histories are sampled at different times")
    vol = h1.grid.cell_volumes()
    diff = np.maximum(h1.frames - h2.frames, 0.0)
    series = np.array([psum(f * vol) for f in diff])
    inc = float(np.max(np.diff(series))) if series.size > 1 else 0.0
    return ContractionReport(h1.times.copy(), series, inc <= slack, max(inc, 0.0))


def ordering_violation(lo: SpaceTimeField, hi: SpaceTimeField) -> float:
    """Largest ``lo - hi`` over all cells and times, relative to ``max hi``."""
    top = float(np.max(hi.frames))
    gap = float(np.max(lo.frames - hi.frames))
    return max(gap, 0.0) / top if top > 0 else max(gap, 0.0)


# -- weak residual --------------------------------------------------------


@dataclass(frozen=True)
class BumpTest:
    """``phi(x, t) = (1 - |x - c|^2 / R^2)_+^4 * ((t1 - t) / (t1 - t0))^3`` on ``[t0, t1]``."""

    center: tuple
    radius: float
    t0: float
    t1: float

    def __post_init__(self):
        if not (self.radius > 0 and self.t1 > self.t0):
            raise ValueError("need radius > 0 and t1 > t0")

    def _space(self, coords):
        r2 = sum((x - c) ** 2 for x, c in zip(coords, self.center)) / self.radius**2
        w = np.maximum(1.0 - r2, 0.0)
        grads = tuple(-8.0 * (x - c) / self.radius**2 * w**3 for x, c in zip(coords, self.center))
        return w**4, grads

    def _time(self, t):
        s = np.clip((self.t1 - t) / (self.t1 - self.t0), 0.0, 1.0)
        return s**3, -3.0 * s**2 / (self.t1 - self.t0)

    def check_support(self, grid: Grid) -> None:
        lo = 0.0 if grid.radial else -grid.half_extent
        for c in self.center:
            if c - self.radius < lo - 1e-12 and not grid.radial:
                raise ValueError("test function support touches the boundary")
            if c + self.radius >= grid.half_extent:
                raise ValueError("test function support touches the boundary")


def weak_residual(hist: SpaceTimeField, V: VectorField, m: float, test: BumpTest, eps: float = 0.0) -> float:
    """Normalized defect of ``int int u phi_t + int u0 phi(0) = int int (grad u^m + uV) . grad phi``.

    Space: the flux is taken on faces (central gradient of ``u^m``, face
    average of ``u``), paired with the analytic face-normal derivative of
    ``phi``.  Time: Simpson rule over the snapshots; the history must
    start at ``test.t0``.
    """
    g = hist.grid
    test.check_support(g)
    if g.radial:
        raise ValueError("weak residual is implemented for box grids")
    if abs(hist.times[0] - test.t0) > 1e-12 * max(1.0, abs(test.t0)):
        raise ValueError("history must start at the test function's t0")
    h = g.h
    vol = g.cell_volumes()
    spatial, _ = test._space(g.mesh())
    face_grads = []
    for ax in range(g.dim):
        fm = g.face_mesh(ax)
        face_grads.append(test._space(fm)[1][ax])
    times = hist.times
    ts, dts = test._time(times)
    lhs_t = np.array([psum(f * spatial * vol) for f in hist.frames]) * dts
    flux_terms = np.empty(times.size)
    for i, u in enumerate(hist.frames):
        p = u**m + eps * u
        total = 0.0
        for ax in range(g.dim):
            sl_lo = [slice(None)] * g.dim
            sl_hi = [slice(None)] * g.dim
            sl_lo[ax], sl_hi[ax] = slice(0, -1), slice(1, None)
            grad = (p[tuple(sl_hi)] - p[tuple(sl_lo)]) / h
            uf = 0.5 * (u[tuple(sl_hi)] + u[tuple(sl_lo)])
            inner = [slice(None)] * g.dim
            inner[ax] = slice(1, -1)
            vf = V.components[ax][tuple(inner)]
            dphi = face_grads[ax][tuple(inner)]
            total += psum((grad + uf * vf) * dphi) * h**g.dim
        flux_terms[i] = total * ts[i]
    I1 = float(sint.simpson(lhs_t, x=times))
    I0 = psum(hist.frames[0] * spatial * vol) * float(ts[0])
    I2 = float(sint.simpson(flux_terms, x=times))
    scale = abs(I1) + abs(I0) + abs(I2)
    if scale == 0.0:
        return 0.0
    return (I1 + I0 - I2) / scale
