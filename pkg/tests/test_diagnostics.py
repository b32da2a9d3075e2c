import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pmdrift import diagnostics as G
from pmdrift.grid import Grid, ParabolicCylinder, ScalarField


def field_from(grid, times, fn):
    mesh = grid.mesh()
    return G.SpaceTimeField(grid, times, np.stack([fn(*mesh, t) for t in times]))


# -- SpaceTimeField ----------------------------------------------------------


def test_spacetime_validation():
    g = Grid(1, 8, 1.0)
    with pytest.raises(ValueError, match="increasing"):
        G.SpaceTimeField(g, [0.0, 0.0], np.zeros((2, 8)))
    with pytest.raises(ValueError, match="shape"):
        G.SpaceTimeField(g, [0.0], np.zeros((1, 9)))
    with pytest.raises(ValueError, match="finite"):
        G.SpaceTimeField(g, [0.0], np.full((1, 8), np.nan))
    f = ScalarField(g, np.arange(8.0))
    w = G.SpaceTimeField.constant_in_time(f, [0.0, 1.0])
    assert len(w) == 2 and np.array_equal(w.frame(1).values, f.values)


# -- transforms --------------------------------------------------------------


def test_transforms_of_zero_and_m2():
    g = Grid(2, 8, 1.0)
    z = ScalarField(g, np.zeros(g.shape))
    assert np.all(G.pressure_transform(z, 3.0).values == 0)
    assert np.all(G.nu_transform(z, 3.0).values == 0)
    u = np.linspace(0, 5, 64).reshape(g.shape)
    assert np.allclose(G.pressure_transform(ScalarField(g, u), 2.0).values, 2 * u, rtol=1e-15)
    assert np.allclose(G.nu_transform(ScalarField(g, u), 2.0).values, np.sqrt(u), rtol=1e-15)


@settings(max_examples=50)
@given(
    arrays(np.float64, 32, elements=st.floats(1e-6, 1e3)),
    st.floats(1.05, 4.0),
)
def test_transform_round_trips(u, m):
    assert np.max(np.abs(G.inverse_nu_transform(G.nu_transform(u, m), m) - u)) <= 1e-12 * max(1.0, u.max() / 1e3)
    back = G.inverse_pressure_transform(G.pressure_transform(u, m), m)
    assert np.allclose(back, u, rtol=1e-12, atol=0)


def test_transforms_reject_negative_and_bad_m():
    with pytest.raises(ValueError):
        G.nu_transform(np.array([-1.0]), 2.0)
    with pytest.raises(ValueError):
        G.pressure_transform(np.array([1.0]), 1.0)


# -- oscillation -------------------------------------------------------------


def test_oscillation_constant_and_linear():
    g = Grid(2, 200, 1.0)
    times = np.linspace(0, 1, 5)
    const = field_from(g, times, lambda x, y, t: 3.0 + 0 * x)
    Q = ParabolicCylinder((0.0, 0.0), 1.0, 0.5)
    assert G.oscillation(const, Q) == 0.0
    lin = field_from(g, times, lambda x, y, t: x)
    for r in (0.2, 0.5, 0.9):
        osc = G.oscillation(lin, ParabolicCylinder((0.1, 0.0), 1.0, r))
        assert abs(osc - 2 * r) <= g.h * (1 + 1e-9)


def test_oscillation_nested_and_shift_invariant():
    g = Grid(2, 32, 1.0)
    rng = np.random.default_rng(0)
    w = G.SpaceTimeField(g, np.linspace(0, 1, 6), rng.random((6,) + g.shape))
    big = ParabolicCylinder((0.0, 0.0), 1.0, 0.8, c=1.5)
    small = ParabolicCylinder((0.1, 0.1), 1.0, 0.3)
    assert G.oscillation(w, small) <= G.oscillation(w, big)
    shifted = w.map(lambda a: a + 7.0)
    assert G.oscillation(shifted, big) == pytest.approx(G.oscillation(w, big), abs=1e-14)


def test_oscillation_rejects_out_of_range():
    g = Grid(1, 16, 1.0)
    w = G.SpaceTimeField(g, [0.0, 1.0], np.zeros((2, 16)))
    with pytest.raises(ValueError, match="time"):
        G.oscillation(w, ParabolicCylinder((0.0,), 1.0, 0.5, c=8.0))
    with pytest.raises(ValueError, match="box"):
        G.oscillation(w, ParabolicCylinder((0.8,), 1.0, 0.5))
    with pytest.raises(ValueError, match="no samples"):
        G.oscillation(w, ParabolicCylinder((0.0,), 1.0, 1e-3, c=1.0))


# -- rescaling ---------------------------------------------------------------


def test_rescale_identity_on_grid_points():
    g = Grid(2, 16, 1.0)
    times = np.linspace(-1, 0, 5)
    rng = np.random.default_rng(1)
    w = G.SpaceTimeField(g, times, rng.random((5,) + g.shape))
    # The cell-centre hull is [-1 + h/2, 1 - h/2], so r < 1 keeps the target inside it.
    r = 1 - g.h / 2
    out = G.rescale_cylinder(w, r, 1.0, 2.0, n_out=16, n_times=5)
    assert out.grid == Grid(2, 16, 1.0)
    # With r slightly below 1 the target centres land on a shrunken lattice; compare to
    # an exact r=1 lattice on a padded source instead.
    big = Grid(2, 18, 1.0 + 1 / 8)
    vals = np.zeros((5,) + big.shape)
    vals[:, 1:-1, 1:-1] = w.frames
    wp = G.SpaceTimeField(big, times, vals)
    ident = G.rescale_cylinder(wp, 1.0, 1.0, 2.0, n_out=16, n_times=5)
    assert np.max(np.abs(ident.frames - w.frames)) == 0.0


def test_rescale_constant_and_time_scaling():
    g = Grid(1, 64, 2.0)
    times = np.linspace(0, 4, 41)
    const = G.SpaceTimeField.constant_in_time(ScalarField(g, np.full(g.shape, 2.5)), times)
    out = G.rescale_cylinder(const, 0.5, 3.0, 2.0)
    assert np.allclose(out.frames, 2.5, rtol=0, atol=1e-15)
    # ν = t: v(x, s) = t0 + r² w^{-α} s
    lin = field_from(g, times, lambda x, t: t + 0 * x)
    r, w_osc, m = 0.5, 4.0, 2.0
    out = G.rescale_cylinder(lin, r, w_osc, m, t0=3.0)
    depth = r * r * w_osc ** (-(m - 1) / m)
    assert np.allclose(out.frames[:, 0], 3.0 + depth * out.times, atol=1e-13)


def _wave(x, y, t):
    return np.sin(3 * x + y) * np.exp(-t) + 0.3 * y * y


def test_rescale_preserves_oscillation_aligned():
    # depth r² w^{-α} = 0.2 and n_out = 64 map the target lattice onto source samples.
    g = Grid(2, 128, 1.0)
    w = field_from(g, np.linspace(0, 1, 41), _wave)
    r, w_osc, m, t0 = 0.5, 1.5625, 2.0, 1.0
    c = w_osc ** (-(m - 1) / m)
    direct = G.oscillation(w, ParabolicCylinder((0.0, 0.0), t0, r, c=c))
    v = G.rescale_cylinder(w, r, w_osc, m, t0=t0, n_out=64, n_times=9)
    rescaled = G.oscillation(v, ParabolicCylinder((0.0, 0.0), 0.0, 1.0, c=1.0))
    assert rescaled == pytest.approx(direct, abs=1e-12)


def _two_bumps(x, y, t):
    up = np.exp(-((x - 0.1) ** 2 + (y - 0.15) ** 2) / 0.05)
    down = np.exp(-((x + 0.15) ** 2 + (y + 0.1) ** 2) / 0.05)
    return (1 + 0.5 * t) * up - down


def test_rescale_preserves_oscillation_interpolated():
    # Extremes sit inside the cylinder, so the comparison measures interpolation only.
    g = Grid(2, 512, 1.0)
    w = field_from(g, np.linspace(0, 1, 11), _two_bumps)
    r, w_osc, m, t0 = 0.45, 2.0, 2.0, 1.0
    c = w_osc ** (-(m - 1) / m)
    direct = G.oscillation(w, ParabolicCylinder((0.0, 0.0), t0, r, c=c))
    v = G.rescale_cylinder(w, r, w_osc, m, t0=t0, n_out=256, n_times=51)
    rescaled = G.oscillation(v, ParabolicCylinder((0.0, 0.0), 0.0, 1.0, c=1.0))
    assert rescaled == pytest.approx(direct, abs=1e-3)


def test_rescale_rejects_out_of_range():
    g = Grid(1, 16, 1.0)
    w = G.SpaceTimeField(g, [0.0, 1.0], np.zeros((2, 16)))
    with pytest.raises(ValueError, match="space"):
        G.rescale_cylinder(w, 1.5, 1.0, 2.0)
    with pytest.raises(ValueError, match="time"):
        G.rescale_cylinder(w, 0.5, 1e-4, 2.0)


# -- Hölder seminorm ---------------------------------------------------------


def test_holder_linear_is_one():
    g = Grid(1, 200, 1.0)
    w = G.SpaceTimeField.constant_in_time(ScalarField(g, g.axis_centers().copy()), [0.0])
    rep = G.holder_seminorm(w, 1.0)
    assert abs(rep.value - 1.0) <= g.h


def test_holder_two_probe_lower_bound():
    # 40² cells of width 0.01: every pair is scanned and ±0.075 are cell centres.
    eps, a, delta = 0.075 / 4, 0.7, 0.5
    g = Grid(2, 40, 0.2)
    c = g.axis_centers()
    vals = np.zeros(g.shape)
    i0 = int(np.argmin(np.abs(c - 0.005)))
    vals[i0, int(np.argmin(np.abs(c - 4 * eps)))] = a
    w = G.SpaceTimeField.constant_in_time(ScalarField(g, vals), [0.0])
    pair = G.probe_quotient(a, 0.0, (0.005, 4 * eps), (0.005, -4 * eps), delta)
    assert pair == pytest.approx(a / (8 * eps) ** delta, rel=1e-12)
    rep = G.holder_seminorm(w, delta)
    assert rep.stride == 1
    assert rep.value >= pair


def test_holder_enrichment_monotone_and_homogeneous():
    g = Grid(2, 32, 1.0)
    rng = np.random.default_rng(4)
    w = G.SpaceTimeField(g, np.linspace(0, 0.5, 8), rng.random((8,) + g.shape))
    coarse = G.holder_seminorm(w, 0.5, stride=4).value
    fine = G.holder_seminorm(w, 0.5, stride=2).value
    assert fine >= coarse
    assert G.holder_seminorm(w.map(lambda a: 3 * a + 1), 0.5, stride=4).value == pytest.approx(3 * coarse, rel=1e-12)


def test_holder_budget_and_jobs():
    g = Grid(2, 64, 1.0)
    rng = np.random.default_rng(5)
    w = G.SpaceTimeField(g, np.linspace(0, 1, 4), rng.random((4,) + g.shape))
    a = G.holder_seminorm(w, 0.7, max_points=4000)
    assert a.n_points <= 4000
    b = G.holder_seminorm(w, 0.7, max_points=4000, jobs=3)
    assert a == b


def test_holder_uses_parabolic_metric():
    g = Grid(1, 4, 1.0)
    frames = np.zeros((2, 4))
    frames[1] = 1.0
    w = G.SpaceTimeField(g, [0.0, 0.25], frames)
    # Same cell, time gap 1/4: distance 1/2, quotient 1 / (1/2)^1 = 2.
    assert G.holder_seminorm(w, 1.0).value == pytest.approx(2.0, rel=1e-14)


def test_holder_csv(tmp_path):
    g = Grid(1, 8, 1.0)
    w = G.SpaceTimeField.constant_in_time(ScalarField(g, g.axis_centers() ** 2), [0.0])
    reps = [G.holder_seminorm(w, d) for d in (0.5, 1.0)]
    path = tmp_path / "holder.csv"
    G.write_holder_csv(path, reps)
    rows = list(csv.DictReader(open(path)))
    assert [r["delta"] for r in rows] == ["0.5", "1.0"]
    assert float(rows[1]["value"]) == reps[1].value
    assert len(rows[0]["p_point"].split(";")) == 2


# -- level measures ----------------------------------------------------------


def test_level_measures_constant_field():
    g = Grid(2, 64, 1.0)
    times = np.linspace(-0.8, 0.0, 9)
    w = G.SpaceTimeField.constant_in_time(ScalarField(g, np.full(g.shape, 2.0)), times)
    qs = [0.25, 0.5, 1.0]
    ser = G.level_measures(w, [1.0, 3.0], qs)
    assert np.all(ser.A[1] == 0.0)
    ball = ser.ball_measure
    assert ball == pytest.approx(np.pi, rel=0.02)
    for j, q in enumerate(qs):
        assert ser.A[0, j] == pytest.approx(ball * 0.8 ** (1 / q), rel=1e-12)
        assert ser.B[1, j] == pytest.approx(ball * 0.8 ** (1 / q), rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_level_measures_monotone_random(seed):
    g = Grid(2, 16, 1.0)
    rng = np.random.default_rng(seed)
    w = G.SpaceTimeField(g, np.linspace(-1, 0, 7), rng.random((7,) + g.shape))
    ser = G.level_measures(w, [0.2, 0.5, 0.8], [0.1, 0.4, 0.7, 1.0])
    assert np.all(np.diff(ser.A, axis=1) >= -1e-15)
    assert np.all(np.diff(ser.A, axis=0) <= 1e-15)
    for k in (0.2, 0.5):
        above, below, ball = G.level_slices(w, k)
        assert np.all(above + below <= ball * (1 + 1e-14))


def test_level_measures_reject_bad_input(tmp_path):
    g = Grid(1, 8, 1.0)
    w = G.SpaceTimeField(g, [0.0, 2.0], np.zeros((2, 8)))
    with pytest.raises(ValueError, match="longer"):
        G.level_measures(w, [0.5], [1.0])
    w = G.SpaceTimeField(g, [0.0, 1.0], np.zeros((2, 8)))
    with pytest.raises(ValueError):
        G.level_measures(w, [0.5], [1.5])
    ser = G.level_measures(w, [0.5, -0.5], [0.5, 1.0])
    ser.write_csv(tmp_path / "lv.csv")
    rows = list(csv.reader(open(tmp_path / "lv.csv")))
    assert rows[0] == ["k", "q", "A", "B"] and len(rows) == 5
