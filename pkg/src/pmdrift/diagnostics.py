"""Regularity diagnostics on solver output.

Pressure transforms, oscillation over parabolic cylinders, rescaling of a
cylinder onto ``Q_1``, Hölder seminorms under the parabolic max-metric and
the time-integrated level-set measures ``A_{k;q}`` / ``B_{k;q}``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import Grid, ParabolicCylinder, ScalarField, psum


@dataclass
class SpaceTimeField:
    """Snapshots ``frames[i]`` of a field on ``grid`` at ``times[i]``."""

    grid: Grid
    times: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("need a non-empty 1D array of times")
        if self.frames.shape != (self.times.size,) + self.grid.shape:
            raise ValueError(f"frames shape {self.frames.shape} does not match {self.times.size} x {self.grid.shape}")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("snapshot values must be finite")

    @classmethod
    def from_fields(cls, times, fields) -> SpaceTimeField:
        fields = list(fields)
        grid = fields[0].grid
        if any(f.grid != grid for f in fields):
            raise ValueError("snapshots live on different grids")
        return cls(grid, np.asarray(times), np.stack([f.values for f in fields]))

    @classmethod
    def constant_in_time(cls, f: ScalarField, times) -> SpaceTimeField:
        times = np.asarray(times, dtype=np.float64)
        return cls(f.grid, times, np.broadcast_to(f.values, (times.size,) + f.grid.shape).copy())

    def __len__(self):
        return self.times.size

    def frame(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.frames[i])

    def map(self, fn) -> SpaceTimeField:
        return SpaceTimeField(self.grid, self.times.copy(), fn(self.frames))


# -- pointwise transforms ----------------------------------------------------


def _apply(field, fn):
    if isinstance(field, SpaceTimeField):
        return field.map(fn)
    if isinstance(field, ScalarField):
        return ScalarField(field.grid, fn(field.values))
    return fn(np.asarray(field, dtype=np.float64))


def _nonneg(a):
    if np.any(a < 0):
        raise ValueError("transform input must be nonnegative")
    return a


def _check_m(m):
    if not m > 1:
        raise ValueError("need m > 1")


def pressure_transform(u, m: float):
    """``v = m/(m-1) u^{m-1}``; accepts a ScalarField, SpaceTimeField or array."""
    _check_m(m)
    return _apply(u, lambda a: m / (m - 1.0) * _nonneg(a) ** (m - 1.0))


def inverse_pressure_transform(v, m: float):
    """``u = ((m-1) v / m)^{1/(m-1)}``."""
    _check_m(m)
    return _apply(v, lambda a: ((m - 1.0) / m * _nonneg(a)) ** (1.0 / (m - 1.0)))


def nu_transform(u, m: float):
    """``ν = u^{1/m}``."""
    _check_m(m)
    return _apply(u, lambda a: _nonneg(a) ** (1.0 / m))


def inverse_nu_transform(nu, m: float):
    """``u = ν^m``."""
    _check_m(m)
    return _apply(nu, lambda a: _nonneg(a) ** m)


# -- cylinders ---------------------------------------------------------------


def _require_box(grid: Grid):
    if grid.radial:
        raise ValueError("this diagnostic needs a box grid")


def cylinder_mask(w: SpaceTimeField, Q: ParabolicCylinder) -> np.ndarray:
    """Boolean mask over ``w.frames`` selecting samples inside ``Q``."""
    if len(Q.center) != w.grid.ndim_array:
        raise ValueError("cylinder centre does not match the grid dimension")
    space = Q.spatial_mask(w.grid)
    time = Q.time_mask(w.times)
    mask = time.reshape((-1,) + (1,) * space.ndim) & space[None]
    if not mask.any():
        raise ValueError("cylinder contains no samples")
    return mask


def oscillation(w: SpaceTimeField, Q: ParabolicCylinder) -> float:
    """``max - min`` over the samples inside ``Q``.

    The cylinder must lie in the data range: its time window inside the
    snapshot span and its ball inside the grid box.
    """
    lo = w.times[0] - 1e-12 * max(1.0, abs(w.times[0]))
    if Q.t_start < lo or Q.t0 > w.times[-1] + 1e-12 * max(1.0, abs(w.times[-1])):
        raise ValueError("cylinder time window exceeds the snapshot span")
    L = w.grid.half_extent
    if any(abs(c) + Q.r > L * (1 + 1e-12) for c in Q.center) and not w.grid.radial:
        raise ValueError("cylinder ball exceeds the grid box")
    vals = w.frames[cylinder_mask(w, Q)]
    return float(vals.max() - vals.min())


def rescale_cylinder(
    w: SpaceTimeField,
    r: float,
    w_osc: float,
    m: float,
    center=None,
    t0: float | None = None,
    n_out: int | None = None,
    n_times: int | None = None,
) -> SpaceTimeField:
    """Resample ``ν`` on ``Q(r, w_osc^{-α})`` onto ``Q_1``, ``α = (m-1)/m``.

    ``v(x, t) = ν(x0 + r x, t0 + r² w_osc^{-α} t)`` for ``x`` on a box grid of
    half-width 1 and ``t`` in ``[-1, 0]``, by multilinear interpolation in
    ``(t, x)``.  ``t0`` defaults to the last snapshot time.
    """
    _require_box(w.grid)
    _check_m(m)
    if not (r > 0 and w_osc > 0):
        raise ValueError("need r > 0 and w_osc > 0")
    g = w.grid
    center = np.zeros(g.dim) if center is None else np.asarray(center, dtype=np.float64)
    t0 = float(w.times[-1]) if t0 is None else float(t0)
    depth = r * r * w_osc ** (-(m - 1.0) / m)
    n_out = g.n if n_out is None else n_out
    n_times = len(w) if n_times is None else n_times
    out_grid = Grid(g.dim, n_out, 1.0)

    axis = g.axis_centers()
    span = (axis[0], axis[-1])
    tol = 1e-12 * max(1.0, g.half_extent)
    reach = r * out_grid.axis_centers()[-1]
    for c in center:
        if c - reach < span[0] - tol or c + reach > span[1] + tol:
            raise ValueError("rescaled cylinder exceeds the data range in space")
    ttol = 1e-12 * max(1.0, abs(t0))
    if t0 - depth < w.times[0] - ttol or t0 > w.times[-1] + ttol:
        raise ValueError("rescaled cylinder exceeds the data range in time")

    out_times = np.linspace(-1.0, 0.0, n_times)
    src_t = np.clip(t0 + depth * out_times, w.times[0], w.times[-1])
    src_x = [np.clip(c + r * m_, span[0], span[1]) for c, m_ in zip(center, out_grid.mesh())]
    if len(w) == 1:
        interp = RegularGridInterpolator((axis,) * g.dim, w.frames[0])
        vals = np.stack([interp(np.stack([x.ravel() for x in src_x], -1)).reshape(out_grid.shape)] * n_times)
        return SpaceTimeField(out_grid, out_times, vals)
    interp = RegularGridInterpolator((w.times,) + (axis,) * g.dim, w.frames)
    frames = []
    for ts in src_t:
        pts = np.stack([np.full(src_x[0].size, ts)] + [x.ravel() for x in src_x], axis=-1)
        frames.append(interp(pts).reshape(out_grid.shape))
    return SpaceTimeField(out_grid, out_times, np.stack(frames))


# -- Hölder seminorm ---------------------------------------------------------


@dataclass
class HolderReport:
    """Largest sampled quotient ``|w(p) - w(q)| / dist(p, q)^δ`` and its pair.

    Points are ``(x..., t)`` tuples; the distance is ``max(|x - y|, |s - t|^½)``.
    """

    delta: float
    value: float
    p_point: tuple
    q_point: tuple
    n_points: int
    stride: int

    def row(self) -> dict:
        return {
            "delta": repr(self.delta),
            "value": repr(self.value),
            "p_point": ";".join(repr(float(c)) for c in self.p_point),
            "q_point": ";".join(repr(float(c)) for c in self.q_point),
        }


def parabolic_distance(xp, tp, xq, tq):
    """``max(|xp - xq|, |tp - tq|^{1/2})`` with broadcasting over leading axes."""
    dx = np.sqrt(np.sum((np.asarray(xp) - np.asarray(xq)) ** 2, axis=-1))
    return np.maximum(dx, np.sqrt(np.abs(np.asarray(tp) - np.asarray(tq))))


def _region_samples(w: SpaceTimeField, region: ParabolicCylinder | None, stride: int):
    """Coordinates, times and values of lattice samples inside ``region``."""
    grid = w.grid
    nt = len(w)
    keep_t = np.arange(nt) % stride == 0
    idx = np.indices(grid.shape)
    keep_x = np.all(idx % stride == 0, axis=0)
    mask = keep_t.reshape((-1,) + (1,) * keep_x.ndim) & keep_x[None]
    if region is not None:
        mask &= cylinder_mask(w, region)
    ti, *xi = np.nonzero(mask)
    axis = grid.axis_centers()
    coords = np.stack([axis[i] for i in xi], axis=-1)
    return coords, w.times[ti], w.frames[mask]


def _lattice_stride(w, region, max_points):
    stride = 1
    while True:
        coords, _, _ = _region_samples(w, region, stride)
        if len(coords) <= max_points:
            return stride
        stride += 1


def _pair_scan(coords, times, vals, delta, jobs, block=256):
    n = len(vals)

    def scan(a):
        b = min(a + block, n)
        d = parabolic_distance(coords[a:b, None, :], times[a:b, None], coords[None, :, :], times[None, :])
        dv = np.abs(vals[a:b, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(d > 0, dv / d**delta, 0.0)
        flat = int(np.argmax(q))
        i, j = divmod(flat, n)
        return float(q.flat[flat]), a + i, j

    starts = range(0, n, block)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(scan, starts))
    else:
        parts = [scan(a) for a in starts]
    # Ties resolve to the earliest block, so the result does not depend on jobs.
    return max(parts, key=lambda p: (p[0], -p[1]))


def holder_seminorm(
    w: SpaceTimeField,
    delta: float,
    region: ParabolicCylinder | None = None,
    max_points: int = 4000,
    stride: int | None = None,
    jobs: int = 1,
) -> HolderReport:
    """Sampled parabolic ``C^δ`` seminorm of ``w`` over ``region``.

    All pairs on a decimated lattice (every ``stride``-th sample per axis and
    in time, at most ``max_points`` points when the stride is automatic) plus
    the pair realizing the max and min over the full region.
    """
    if not 0 < delta <= 1:
        raise ValueError("need delta in (0, 1]")
    if stride is None:
        stride = _lattice_stride(w, region, max_points)
    coords, times, vals = _region_samples(w, region, stride)
    if len(vals) == 0:
        raise ValueError("region contains no samples")
    best, i, j = _pair_scan(coords, times, vals, delta, jobs)
    p = (*coords[i], times[i])
    q = (*coords[j], times[j])

    fc, ft, fv = _region_samples(w, region, 1)
    hi, lo = int(np.argmax(fv)), int(np.argmin(fv))
    d = float(parabolic_distance(fc[hi], ft[hi], fc[lo], ft[lo]))
    if d > 0:
        ext = float(fv[hi] - fv[lo]) / d**delta
        if ext > best:
            best, p, q = ext, (*fc[hi], ft[hi]), (*fc[lo], ft[lo])
    return HolderReport(delta, best, tuple(map(float, p)), tuple(map(float, q)), len(vals), stride)


def probe_quotient(a: float, b: float, p, q, delta: float, tp: float = 0.0, tq: float = 0.0) -> float:
    """Single-pair Hölder quotient ``|a - b| / dist(p, q)^δ``."""
    d = float(parabolic_distance(np.asarray(p, float), tp, np.asarray(q, float), tq))
    if d <= 0:
        raise ValueError("probe points coincide")
    return abs(a - b) / d**delta


def write_holder_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=["delta", "value", "p_point", "q_point"])
        wr.writeheader()
        for rep in reports:
            wr.writerow(rep.row())


# -- level-set measures ------------------------------------------------------


@dataclass
class LevelSeries:
    """``A[i, j] = A_{k_i; q_j}`` and ``B[i, j] = B_{k_i; q_j}``."""

    thresholds: np.ndarray
    exponents: np.ndarray
    A: np.ndarray
    B: np.ndarray
    ball_measure: float
    window: float

    def rows(self):
        for i, k in enumerate(self.thresholds):
            for j, q in enumerate(self.exponents):
                yield float(k), float(q), float(self.A[i, j]), float(self.B[i, j])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["k", "q", "A", "B"])
            for row in self.rows():
                wr.writerow([repr(x) for x in row])


def _time_weights(times: np.ndarray) -> np.ndarray:
    """Trapezoid weights, exact for constants in time."""
    if times.size == 1:
        return np.zeros(1)
    dt = np.diff(times)
    w = np.zeros(times.size)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def level_slices(w: SpaceTimeField, k: float, mask=None):
    """Per-snapshot measures of ``{w > k}`` and ``{w < k}`` inside ``mask``.

    ``mask`` defaults to the cells whose centres lie in the unit ball.
    """
    if mask is None:
        mask = w.grid.radius() < 1.0
    vol = np.where(mask, w.grid.volume_array(), 0.0)
    above = np.array([psum(vol * (f > k)) for f in w.frames])
    below = np.array([psum(vol * (f < k)) for f in w.frames])
    return above, below, psum(vol)


def level_measures(w: SpaceTimeField, thresholds, exponents, mask=None) -> LevelSeries:
    """``A_{k;q} = (∫ |{w > k}|^q dt)^{1/q}`` and ``B_{k;q}`` for ``{w < k}``.

    The time window must have length at most 1.  Monotonicity (``A``
    nonincreasing in ``k``, ``A`` and ``B`` nondecreasing in ``q``) is checked
    and a violation raises ``RuntimeError``.
    """
    ks = np.sort(np.asarray(thresholds, dtype=np.float64))
    qs = np.sort(np.asarray(exponents, dtype=np.float64))
    if np.any((qs <= 0) | (qs > 1)):
        raise ValueError("exponents must lie in (0, 1]")
    window = float(w.times[-1] - w.times[0])
    if window > 1.0 + 1e-12:
        raise ValueError(f"time window {window} is longer than 1")
    tw = _time_weights(w.times)
    A = np.zeros((ks.size, qs.size))
    Bm = np.zeros_like(A)
    ball = 0.0
    for i, k in enumerate(ks):
        above, below, ball = level_slices(w, k, mask)
        for j, q in enumerate(qs):
            A[i, j] = float(np.dot(tw, above**q)) ** (1.0 / q)
            Bm[i, j] = float(np.dot(tw, below**q)) ** (1.0 / q)
    slack = 1e-12 * max(1.0, float(np.max(A, initial=0.0)), float(np.max(Bm, initial=0.0)))
    if np.any(np.diff(A, axis=0) > slack):
        raise RuntimeError("A_{k;q} increased with k")
    if np.any(np.diff(A, axis=1) < -slack) or np.any(np.diff(Bm, axis=1) < -slack):
        raise RuntimeError("level measure decreased with q")
    return LevelSeries(ks, qs, A, Bm, ball, window)
