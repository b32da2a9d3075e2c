"""Meshes, cell/face fields, the two conservative spatial operators and norms.

Box grids cover ``[-L, L]^d`` with an even number of cells per axis, so the
origin sits on a cell corner.  Radial grids hold a profile on ``[0, L]`` with
cell centres at ``(i + 1/2) h`` and shell volumes/face areas of a
``d``-dimensional ball, so a 1D radial run conserves ``d``-dimensional mass.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend

BOX = "box"
RADIAL = "radial"


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def psum(a) -> float:
    """Deterministic sum (NumPy's fixed pairwise tree over the raveled array)."""
    return float(np.add.reduce(np.ravel(np.asarray(a, dtype=np.float64))))


def _first_bad(values: np.ndarray):
    bad = np.argwhere(~np.isfinite(values))
    return tuple(int(i) for i in bad[0]) if bad.size else None


def check_finite(values: np.ndarray, what: str = "field") -> None:
    idx = _first_bad(values)
    if idx is not None:
        raise ValueError(f"{what}: non-finite value {values[idx]!r} at cell {idx}")


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    half_extent: float
    mode: str = BOX

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if self.n < 4:
            raise ValueError(f"need at least 4 cells per axis, got {self.n}")
        if not self.half_extent > 0:
            raise ValueError("half_extent must be positive")
        if self.mode not in (BOX, RADIAL):
            raise ValueError(f"unknown grid mode {self.mode!r}")
        if self.mode == BOX and self.n % 2:
            raise ValueError("box grids need an even cell count (origin on a cell corner)")

    @property
    def radial(self) -> bool:
        return self.mode == RADIAL

    @property
    def h(self) -> float:
        if self.radial:
            return self.half_extent / self.n
        return 2.0 * self.half_extent / self.n

    @property
    def ndim_array(self) -> int:
        return 1 if self.radial else self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.ndim_array

    @property
    def size(self) -> int:
        return self.n**self.ndim_array

    def axis_centers(self) -> np.ndarray:
        i = np.arange(self.n) + 0.5
        if self.radial:
            return i * self.h
        return -self.half_extent + i * self.h

    def axis_faces(self) -> np.ndarray:
        i = np.arange(self.n + 1, dtype=np.float64)
        if self.radial:
            return i * self.h
        return -self.half_extent + i * self.h

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinate arrays (``ij`` indexing)."""
        c = self.axis_centers()
        return tuple(np.meshgrid(*([c] * self.ndim_array), indexing="ij"))

    def points(self) -> np.ndarray:
        """Cell centres as an ``(N, k)`` array in lexicographic cell order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def radius(self) -> np.ndarray:
        if self.radial:
            return self.axis_centers()
        return np.sqrt(sum(m * m for m in self.mesh()))

    def face_mesh(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinates of the centres of faces normal to ``axis``."""
        axes = [self.axis_centers()] * self.ndim_array
        axes[axis] = self.axis_faces()
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def face_area(self) -> np.ndarray:
        """Radial face areas (``|S^{d-1}| r^{d-1}``)."""
        r = self.axis_faces()
        return sphere_area(self.dim) * r ** (self.dim - 1)

    def cell_volumes(self) -> np.ndarray | float:
        if self.radial:
            r = self.axis_faces()
            return sphere_area(self.dim) * (r[1:] ** self.dim - r[:-1] ** self.dim) / self.dim
        return self.h**self.dim

    def volume_array(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.cell_volumes(), dtype=np.float64), self.shape)

    def total_volume(self) -> float:
        if self.radial:
            return sphere_area(self.dim) * self.half_extent**self.dim / self.dim
        return (2.0 * self.half_extent) ** self.dim

    def coord_names(self) -> list[str]:
        return ["x", "y", "z"][: self.ndim_array]


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        check_finite(self.values, "scalar field")

    @classmethod
    def density(cls, grid: Grid, values) -> ScalarField:
        f = cls(grid, values)
        if np.any(f.values < 0):
            idx = tuple(int(i) for i in np.argwhere(f.values < 0)[0])
            raise ValueError(f"density must be nonnegative; {f.values[idx]!r} at cell {idx}")
        return f

    @classmethod
    def from_function(cls, grid: Grid, fn) -> ScalarField:
        if grid.radial:
            return cls(grid, fn(grid.axis_centers()))
        return cls(grid, fn(*grid.mesh()))

    def integral(self) -> float:
        return integrate(self)

    def copy(self) -> ScalarField:
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """Drift samples: per-face normal components, or per-cell full vectors.

    Face arrays are stored for every face, boundary faces included; the
    operators ignore the boundary entries.  Radial grids carry a single
    radial component.
    """

    grid: Grid
    components: tuple
    on_faces: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=np.float64) for c in self.components)
        want = self.grid.ndim_array
        if len(comps) != want:
            raise ValueError(f"expected {want} components, got {len(comps)}")
        for ax, c in enumerate(comps):
            shape = list(self.grid.shape)
            if self.on_faces:
                shape[ax] += 1
            if c.shape != tuple(shape):
                raise ValueError(f"component {ax} has shape {c.shape}, expected {tuple(shape)}")
            check_finite(c, f"vector component {ax}")
        self.components = comps

    @classmethod
    def zeros(cls, grid: Grid, on_faces: bool = True) -> VectorField:
        comps = []
        for ax in range(grid.ndim_array):
            shape = list(grid.shape)
            if on_faces:
                shape[ax] += 1
            comps.append(np.zeros(shape))
        return cls(grid, tuple(comps), on_faces)

    def scaled(self, c: float) -> VectorField:
        return VectorField(self.grid, tuple(c * a for a in self.components), self.on_faces, dict(self.meta))

    def cell_components(self) -> tuple[np.ndarray, ...]:
        """Components at cell centres (faces averaged pairwise)."""
        if not self.on_faces:
            return self.components
        out = []
        for ax, c in enumerate(self.components):
            lo = [slice(None)] * c.ndim
            hi = [slice(None)] * c.ndim
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            out.append(0.5 * (c[tuple(lo)] + c[tuple(hi)]))
        return tuple(out)

    def magnitude(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.cell_components()))

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(c))) for c in self.components)


@dataclass(frozen=True)
class ParabolicCylinder:
    """``{|x - x0| < r} x (t0 - c r^2, t0]``."""

    center: tuple
    t0: float
    r: float
    c: float = 1.0

    def __post_init__(self):
        if not (self.r > 0 and self.c > 0):
            raise ValueError("cylinder needs r > 0 and c > 0")

    @property
    def t_start(self) -> float:
        return self.t0 - self.c * self.r**2

    def spatial_mask(self, grid: Grid) -> np.ndarray:
        if grid.radial:
            return np.abs(grid.axis_centers() - self.center[0]) < self.r
        d2 = sum((m - x0) ** 2 for m, x0 in zip(grid.mesh(), self.center))
        return d2 < self.r**2

    def time_mask(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=np.float64)
        tol = 1e-12 * max(1.0, abs(self.t0))
        return (t > self.t_start + tol) & (t <= self.t0 + tol)


# -- operators -------------------------------------------------------------


def laplacian_of_nonlinearity(u: ScalarField, m: float, eps: float = 0.0, backend=None) -> ScalarField:
    """Discrete ``Lap(u^m + eps u)`` with zero flux through the outer faces."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    check_finite(u.values, "u")
    k = _backend.get(backend)
    g = u.grid
    if g.radial:
        out = k.lap_phi_radial(u.values, float(m), float(eps), g.h, g.face_area(), g.cell_volumes())
    else:
        out = k.lap_phi(u.values, float(m), float(eps), g.h)
    return ScalarField(g, out)


def divergence_of_drift_flux(u: ScalarField, V: VectorField, backend=None) -> ScalarField:
    """Upwind ``div(u V)``; the transport velocity of ``u_t = div(u V)`` is ``-V``."""
    if V.grid != u.grid:
        if V.grid.ndim_array != u.grid.ndim_array or V.grid.shape != u.grid.shape:
            raise ValueError(
                f"dimension mismatch: u lives on {u.grid.shape}, V on {V.grid.shape}"
            )
    if not V.on_faces:
        raise ValueError("drift must be sampled on faces for the flux operator")
    check_finite(u.values, "u")
    k = _backend.get(backend)
    g = u.grid
    if g.radial:
        out = k.div_upwind_radial(u.values, V.components[0], g.face_area(), g.cell_volumes())
    else:
        out = k.div_upwind(u.values, V.components, g.h)
    return ScalarField(g, out)


def integrate(f: ScalarField | np.ndarray, grid: Grid | None = None) -> float:
    """Midpoint-rule integral (cell value times cell volume)."""
    if isinstance(f, ScalarField):
        grid, vals = f.grid, f.values
    else:
        vals = np.asarray(f)
    vol = grid.cell_volumes()
    return psum(vals * vol)


def _masked_weights(grid: Grid, mask) -> np.ndarray:
    w = grid.volume_array()
    if mask is not None:
        w = np.where(mask, w, 0.0)
    return w


def lp_norm(V: VectorField | ScalarField, p: float, mask=None) -> float:
    """Cell-volume weighted ``L^p`` norm of ``|V|``; ``mask`` restricts the domain."""
    if p < 1:
        raise ValueError("p must be >= 1")
    mag = np.abs(V.values) if isinstance(V, ScalarField) else V.magnitude()
    check_finite(mag, "|V|")
    if math.isinf(p):
        return float(np.max(np.where(mask, mag, 0.0) if mask is not None else mag))
    w = _masked_weights(V.grid, mask)
    scale = float(np.max(mag)) if mag.size else 0.0
    if scale == 0.0:
        return 0.0
    return scale * psum(w * (mag / scale) ** p) ** (1.0 / p)


def lp_logq_norm(V: VectorField | ScalarField, p: float, q: float, mask=None) -> float:
    """``(int |V|^p max(log^q |V|, 1))^{1/p}``; the log factor is 1 where ``|V| <= e``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if q <= 0:
        raise ValueError("q must be positive")
    mag = np.abs(V.values) if isinstance(V, ScalarField) else V.magnitude()
    check_finite(mag, "|V|")
    with np.errstate(divide="ignore"):
        lg = np.log(np.where(mag > 0, mag, 1.0))
    weight = np.maximum(np.maximum(lg, 0.0) ** q, 1.0)
    w = _masked_weights(V.grid, mask)
    return psum(w * mag**p * weight) ** (1.0 / p)


# -- snapshot files --------------------------------------------------------


def write_snapshot(path, f: ScalarField) -> None:
    """CSV ``x[,y[,z]],value`` in lexicographic cell order, shortest round-trip floats."""
    pts = f.grid.points()
    vals = f.values.ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(f.grid.coord_names() + ["value"])
        for row, v in zip(pts, vals):
            w.writerow([repr(float(c)) for c in row] + [repr(float(v))])


def read_snapshot(path, grid: Grid) -> ScalarField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header != grid.coord_names() + ["value"]:
        raise ValueError(f"snapshot header {header} does not match grid")
    if len(body) != grid.size:
        raise ValueError(f"snapshot has {len(body)} rows, grid has {grid.size} cells")
    arr = np.array([[float(c) for c in r] for r in body])
    if not np.allclose(arr[:, :-1], grid.points(), rtol=0, atol=1e-9 * grid.h):
        raise ValueError("snapshot coordinates do not match grid cell centres")
    return ScalarField(grid, arr[:, -1].reshape(grid.shape))


def snapshot_path(out_dir, name: str) -> Path:
    p = Path(out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p / name
