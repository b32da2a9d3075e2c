import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pmdrift import _backend
from pmdrift import drift as D
from pmdrift import solver as S
from pmdrift.diagnostics import SpaceTimeField
from pmdrift.grid import Grid, ParabolicCylinder, ScalarField, VectorField, psum, read_snapshot


def gaussian_drift(seed, dim=2, amp=3.0):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(4, dim)) * 0.4
    a = rng.normal(size=(4, dim)) * amp
    w = rng.uniform(0.15, 0.4, 4)

    def fn(*x):
        r2 = [sum((x[i] - c[k, i]) ** 2 for i in range(dim)) / w[k] ** 2 for k in range(4)]
        return tuple(sum(a[k, i] * np.exp(-r2[k]) for k in range(4)) for i in range(dim))

    return D.DriftSpec(D.CUSTOM, fn=fn)


def bump(grid, center, radius, height=1.0):
    r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh(), center))
    return height * np.maximum(0.0, 1.0 - r2 / radius**2)


def test_step_control_validation():
    with pytest.raises(ValueError):
        S.StepControl(cfl_diffusion=1.0)
    with pytest.raises(ValueError):
        S.StepControl(dt_max=0.0)


def test_constant_state_unchanged():
    g = Grid(2, 16, 1.0)
    st0 = S.SolverState(ScalarField(g, np.full(g.shape, 2.5)), 0.0, 2.0)
    st1 = S.step(st0, S.StepControl(), dt=1e-3)
    assert np.array_equal(st1.u.values, st0.u.values)
    assert st1.t == 1e-3


def test_diffusion_dt_matches_closed_form():
    g = Grid(2, 32, 1.0)
    u = bump(g, (0, 0), 0.5, 3.0)
    st0 = S.SolverState(ScalarField(g, u), 0.0, 2.0, eps_reg=0.1)
    ctl = S.StepControl(cfl_diffusion=0.4)
    expect = 0.4 * g.h**2 / (2 * g.dim * (2.0 * np.max(u) + 0.1))
    assert math.isclose(st0.stable_dt(ctl), expect, rel_tol=1e-14)


def test_mass_conserved_over_1000_steps():
    g = Grid(2, 48, 1.0)
    st0 = S.SolverState(ScalarField(g, bump(g, (0.1, -0.2), 0.4)), 0.0, 2.0, drift=gaussian_drift(1))
    st1, _ = S.run_until(st0, math.inf, S.StepControl(), max_steps=1000)
    assert st1.steps == 1000
    assert abs(st1.mass() - st0.initial_mass) <= 1e-9 * st0.initial_mass
    assert np.min(st1.u.values) >= 0


def test_oversized_dt_caught_by_positivity():
    g = Grid(1, 16, 1.0)
    u = np.zeros(16)
    u[8] = 1.0
    st0 = S.SolverState(ScalarField(g, u), 0.0, 2.0)
    with pytest.raises(S.SolverError, match="negative density"):
        S.step(st0, S.StepControl(), dt=1.0)


def test_negativity_is_an_error():
    # CFL numbers summing above 1 break monotonicity for a spike in an outflow.
    g = Grid(1, 16, 1.0)
    u = np.zeros(16)
    u[8] = 1.0
    vf = np.zeros(17)
    vf[8] = 50.0  # draws cell 8 downward
    vf[9] = -50.0  # and upward
    st0 = S.SolverState(ScalarField(g, u), 0.0, 1.0, V=VectorField(g, (vf,)))
    with pytest.raises(S.SolverError, match="negative density"):
        S.step(st0, S.StepControl(cfl_diffusion=0.9, cfl_advection=0.9))


def test_nonfinite_rate_rejected():
    g = Grid(1, 16, 1e-3)
    vf = np.full(17, 1e308)
    st0 = S.SolverState(ScalarField(g, np.ones(16)), 0.0, 2.0, V=VectorField(g, (vf,)))
    with pytest.raises(S.SolverError, match="not finite"):
        S.step(st0, S.StepControl())


def test_run_until_identity_and_csv(tmp_path):
    g = Grid(1, 32, 1.0)
    st0 = S.SolverState(ScalarField(g, bump(g, (0.0,), 0.5)), 0.0, 2.0)
    st1, ser = S.run_until(st0, 0.0, S.StepControl())
    assert st1 is st0
    assert len(ser.rows) == 1
    obs = S.Observers(probes=[(0.0,), (0.3,)], cylinder=ParabolicCylinder((0.0,), 0.05, 0.2), stride=5)
    path = tmp_path / "series.csv"
    st2, ser = S.run_until(st0, 0.05, S.StepControl(), obs, series_path=path)
    assert st2.t == 0.05
    assert path.read_text().splitlines()[0] == "t,mass,sup,inf,osc_Q,probe_1,probe_2"
    osc = ser.column("osc_Q")
    assert math.isnan(osc[0]) and osc[-1] >= 0
    assert np.all(np.diff(ser.column("t")) > 0)


def test_fused_backends_agree():
    if "cython" not in _backend.available():
        pytest.skip("compiled kernels not built")
    for d, n in ((1, 64), (2, 24), (3, 10)):
        g = Grid(d, n, 1.0)
        u0 = bump(g, (0.1,) * d, 0.6)
        runs = []
        for be in ("python", "cython"):
            st0 = S.SolverState(ScalarField(g, u0), 0.0, 2.0, drift=gaussian_drift(2, d), backend=be)
            runs.append(S.run_until(st0, math.inf, S.StepControl(), max_steps=50)[0])
        assert np.array_equal(runs[0].u.values, runs[1].u.values)
        assert runs[0].t == runs[1].t


def test_radial_run_conserves_d_mass():
    g = Grid(3, 80, 2.0, "radial")
    u0 = np.maximum(0.0, 1 - g.axis_centers() ** 2)
    st0 = S.SolverState(ScalarField(g, u0), 0.0, 2.0, drift=D.DriftSpec(D.QUADRATIC, A=1.0))
    st1, _ = S.run_until(st0, 0.2, S.StepControl())
    assert abs(st1.mass() - st0.mass()) <= 1e-12 * st0.mass()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.0, 3.0), st.floats(0.5, 6.0))
def test_positivity_random_drift(seed, m, amp):
    g = Grid(2, 24, 1.0)
    rng = np.random.default_rng(seed)
    u0 = rng.random(g.shape) * (rng.random(g.shape) < 0.3)
    st0 = S.SolverState(ScalarField(g, u0), 0.0, m, drift=gaussian_drift(seed, 2, amp))
    st1, _ = S.run_until(st0, math.inf, S.StepControl(), max_steps=200)
    assert np.min(st1.u.values) >= 0
    assert abs(st1.mass() - st0.mass()) <= 1e-12 * 200 * st0.mass()


def test_checkpoint(tmp_path):
    g = Grid(2, 8, 1.0)
    st0 = S.SolverState(ScalarField(g, bump(g, (0, 0), 0.5)), 0.25, 2.0, drift=D.DriftSpec(D.QUADRATIC, A=2.0))
    snap, side = S.write_checkpoint(st0, tmp_path / "ck.csv")
    assert np.array_equal(read_snapshot(snap, g).values, st0.u.values)
    keys = dict(line.split("=", 1) for line in side.read_text().splitlines())
    assert keys["drift"] == "quadratic" and keys["t"] == "0.25" and keys["grid.n"] == "8"


# -- Barenblatt -------------------------------------------------------------


def test_barenblatt_constants_m2_d1():
    c = S.barenblatt_constants(2.0, 1, 1.0)
    assert math.isclose(c.C, (math.sqrt(3) / 8) ** (2 / 3), rel_tol=1e-14)
    assert math.isclose(c.k, 1 / 12, rel_tol=1e-15)
    assert math.isclose(c.alpha, 1 / 3, rel_tol=1e-15)
    assert math.isclose(4 / 3 * math.sqrt(12) * c.C**1.5, 1.0, rel_tol=1e-14)


@pytest.mark.parametrize("m,d", [(2.0, 1), (1.5, 2), (3.0, 3), (2.0, 2)])
def test_barenblatt_mass_by_quadrature(m, d):
    for mass in (1.0, 2.0):
        R = S.barenblatt_radius(m, d, mass, 0.7)
        # radial integral of the d-dimensional profile
        prof = lambda r: float(S.barenblatt_oracle(m, d, mass, np.array([r] + [0.0] * (d - 1)), 0.7)) * r ** (d - 1)  # noqa: E731
        val = integrate.quad(prof, 0, R, epsabs=1e-14, epsrel=1e-12)[0] * 2 * math.pi ** (d / 2) / math.gamma(d / 2)
        assert math.isclose(val, mass, rel_tol=1e-9)
        assert float(S.barenblatt_oracle(m, d, mass, np.array([R * 1.0001] + [0.0] * (d - 1)), 0.7)) == 0.0
    with pytest.raises(ValueError):
        S.barenblatt_oracle(m, d, 1.0, np.zeros(d), 0.0)


def _barenblatt_l1_error(n):
    g = Grid(1, n, 3.0)
    st0 = S.SolverState(S.barenblatt_field(g, 2.0, 1.0, 0.1), 0.1, 2.0)
    st1, _ = S.run_until(st0, 1.0, S.StepControl(), S.Observers(stride=10**9))
    exact = S.barenblatt_field(g, 2.0, 1.0, 1.0)
    return psum(np.abs(st1.u.values - exact.values)) * g.h, st1


def test_barenblatt_convergence_and_propagation():
    e1, _ = _barenblatt_l1_error(200)
    e2, st = _barenblatt_l1_error(400)
    assert math.log2(e1 / e2) >= 0.8
    assert e2 <= 0.02
    g = st.grid
    # numerical support: cells above 1e-12 of the peak (explicit steps leave
    # a super-exponentially decaying tail beyond the front)
    support = g.axis_centers()[st.u.values > 1e-12 * np.max(st.u.values)]
    R = S.barenblatt_radius(2.0, 1, 1.0, 1.0)
    assert np.max(np.abs(support)) <= R + 2 * g.h


# -- stationary profile ---------------------------------------------------


def test_stationary_constant_closed_form():
    C = S.stationary_constant(D.PowerPotential(1), 2.0, 1.0, 1)
    assert math.isclose(C, (3 / (4 * math.sqrt(2))) ** (2 / 3), rel_tol=1e-10)
    small = [S.stationary_constant(D.PowerPotential(1), 2.0, M, 1) for M in (1e-2, 1e-4, 1e-6)]
    assert small[0] > small[1] > small[2] > 0 and small[2] < 1e-3
    with pytest.raises(ValueError):
        S.stationary_constant(D.PowerPotential(1), 2.0, 0.0, 1)


def test_stationary_profile_mass_on_grid():
    g = Grid(2, 256, 2.0)
    rho, C = S.stationary_profile(D.DriftSpec(D.QUADRATIC, A=2.0), 1.5, 0.3, g)
    assert math.isclose(rho.integral(), 0.3, rel_tol=1e-3)
    assert math.isclose(np.max(rho.values), C**2, rel_tol=1e-2)


def test_weak_residual_stationary_and_zero():
    g = Grid(2, 256, 2.0)
    spec = D.DriftSpec(D.CUSTOM, fn=lambda x, y: (2 * x, 2 * y))
    rho, _ = S.stationary_profile(D.PowerPotential(2), 2.0, 1.0, g)
    times = np.linspace(0, 1, 11)
    V = spec.sample_faces(g)
    for test in (S.BumpTest((0.2, 0.1), 0.6, 0.0, 1.0), S.BumpTest((0.0, 0.0), 1.5, 0.0, 1.0)):
        assert abs(S.weak_residual(SpaceTimeField.constant_in_time(rho, times), V, 2.0, test)) <= 1e-4
    zero = SpaceTimeField.constant_in_time(ScalarField(g, np.zeros(g.shape)), times)
    assert S.weak_residual(zero, V, 2.0, S.BumpTest((0.0, 0.0), 1.0, 0.0, 1.0)) == 0.0
    with pytest.raises(ValueError, match="boundary"):
        S.weak_residual(zero, V, 2.0, S.BumpTest((1.5, 0.0), 1.0, 0.0, 1.0))


def test_weak_residual_barenblatt_refines():
    res = []
    for n in (100, 200, 400):
        g = Grid(1, n, 3.0)
        st0 = S.SolverState(S.barenblatt_field(g, 2.0, 1.0, 0.1), 0.1, 2.0)
        snaps = []
        S.run_until(st0, 0.6, S.StepControl(), S.Observers(stride=max(1, n // 50)), snapshots=snaps)
        hist = SpaceTimeField(g, [t for t, _ in snaps], np.stack([u for _, u in snaps]))
        res.append(abs(S.weak_residual(hist, st0.V, 2.0, S.BumpTest((0.3,), 1.5, 0.1, 0.6))))
    assert res[1] <= 0.55 * res[0] and res[2] <= 0.55 * res[1]


# -- comparison / contraction -------------------------------------------------


def test_ordering_preserved():
    g = Grid(2, 48, 1.0)
    lo = bump(g, (0.1, 0.0), 0.4, 0.8)
    hi = lo + bump(g, (-0.2, 0.1), 0.5, 0.5)
    spec = gaussian_drift(7)
    states = [S.SolverState(ScalarField(g, v), 0.0, 2.0, drift=spec) for v in (lo, hi)]
    _, (h_lo, h_hi) = S.run_coupled(states, None, S.StepControl(), n_steps=300, stride=10)
    assert S.ordering_violation(h_lo, h_hi) <= 1e-8
    assert np.all(S.l1_contraction_probe(h_lo, h_hi).series == 0.0)


def test_contraction_crossing_data():
    g = Grid(2, 48, 1.0)
    a = bump(g, (0.2, 0.0), 0.4, 1.0)
    b = bump(g, (-0.1, 0.1), 0.5, 0.7)
    spec = gaussian_drift(9)
    states = [S.SolverState(ScalarField(g, v), 0.0, 1.5, drift=spec) for v in (a, b)]
    _, (h1, h2) = S.run_coupled(states, None, S.StepControl(), n_steps=300, stride=5)
    rep = S.l1_contraction_probe(h1, h2)
    assert rep.nonincreasing
    assert rep.series[-1] < rep.series[0]
    same = S.l1_contraction_probe(h1, h1)
    assert np.all(same.series == 0)


def test_contraction_probe_rejects_mismatch():
    g1, g2 = Grid(1, 8, 1.0), Grid(1, 10, 1.0)
    h1 = SpaceTimeField(g1, [0.0], np.zeros((1, 8)))
    h2 = SpaceTimeField(g2, [0.0], np.zeros((1, 10)))
    with pytest.raises(ValueError):
        S.l1_contraction_probe(h1, h2)


def test_uniform_bound_trend_admissible_drift():
    # bounded part plus an L^p part with p > d: no growth of sup u over [0, 10]
    def fn(x, y):
        r = np.sqrt(x * x + y * y) + 1e-300
        core = np.where(r < 0.5, r ** (-0.5), 0.0)
        return (np.sin(3 * y) + core * x / r, np.cos(2 * x) + core * y / r)

    g = Grid(2, 32, 1.5)
    st0 = S.SolverState(ScalarField(g, bump(g, (0.3, 0.2), 0.6)), 0.0, 2.0, drift=D.DriftSpec(D.CUSTOM, fn=fn))
    _, ser = S.run_until(st0, 10.0, S.StepControl(), S.Observers(stride=50))
    t, sup = ser.column("t"), ser.column("sup")
    assert np.max(sup[t >= 9]) <= 2 * np.max(sup[t <= 1])


def test_stationary_constant_bounded_potential():
    pot = D.LogLogPotential(math.exp(math.e**3), 2)
    assert math.isclose(float(pot(np.array([1e7]))[0]), pot.sup, rel_tol=1e-12)
    C = S.stationary_constant(pot, 2.0, 1.0, 2)
    assert 0 < C < 0.5 * pot.sup
    # independent check: radial mass in log r
    f = lambda t: max(C - float(pot(np.array([math.exp(t)]))[0]) / 2, 0.0) * math.exp(2 * t)  # noqa: E731
    R = math.log(S._support_radius(pot, 2 * C))
    br = [-60.0] + [math.log(x) for x in (pot.r1, pot.r2, pot.b, pot.b2)] + list(np.linspace(math.log(pot.b2), R, 40)[1:])
    mass = 2 * math.pi * sum(integrate.quad(f, a, b, limit=200)[0] for a, b in zip(br, br[1:]))
    assert math.isclose(mass, 1.0, rel_tol=1e-9)
    # below m = 2 the mass map stays finite up to the supremum
    with pytest.raises(ValueError, match="out of reach"):
        S.stationary_constant(pot, 1.25, 1.0, 2)
