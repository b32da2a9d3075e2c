import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from pmdrift import barriers as B
from pmdrift.drift import DriftSpec


@pytest.fixture(scope="module")
def p2():
    return B.certified_params(0.3, 0.02, dim=2)[0]


@pytest.fixture(scope="module")
def p3():
    return B.certified_params(0.3, 0.02, dim=3)[0]


def _fd1(fn, t, h):
    return (-fn(t + 2 * h) + 8 * fn(t + h) - 8 * fn(t - h) + fn(t - 2 * h)) / (12 * h)


# -- time profiles -----------------------------------------------------------


@pytest.mark.parametrize("dim", [2, 3])
def test_z_endpoints(dim):
    p = B.BarrierParams(s=0.3, eps=0.02, r=0.05, dim=dim)
    assert B.z_profile(p, 0.0) == 1.0
    assert B.z_profile(p, p.T) == pytest.approx(4 * 0.02, rel=1e-12)


def test_z_linear_when_s_is_one():
    p = B.BarrierParams(s=1.0, eps=0.05, r=0.1)
    assert p.M == 1.0
    assert p.T == pytest.approx(1 - 4 * 0.05, rel=1e-14)
    t = np.linspace(0, p.T, 7)
    assert np.allclose(B.z_profile(p, t), 1 - t, rtol=0, atol=1e-14)


def test_z_solves_its_ode(p2):
    t = np.linspace(0.05, 0.95, 19) * p2.T
    fd = _fd1(p2.z, t, 1e-4 * p2.T)
    want = -p2.z(t) ** (p2.s - 1) / p2.M
    assert np.max(np.abs(fd / want - 1)) < 1e-6
    assert np.all(np.diff(p2.z(t)) < 0)


def test_k_denominator_and_growth(p2):
    a = (4 * p2.eps) ** p2.s
    assert p2.k_denominator(0.0) == pytest.approx(p2.C0 * (1 - a / 2), rel=1e-13)
    t = np.linspace(0, p2.T, 50)
    k = B.k_profile(p2, t)
    assert np.all(k > 0) and np.all(np.diff(k) > 0)
    assert k[-1] > k[0]
    tt = t[2:-2]
    fd = _fd1(p2.k, tt, 1e-4 * p2.T)
    need = p2.C_star * p2.k(tt) ** 2 / (p2.r * p2.z(tt)) ** 2
    assert np.max(np.abs(fd / need - 1)) < 1e-6


def test_k0_tends_to_two_over_c0():
    devs = []
    for s in (0.1, 0.01, 0.001):
        p = B.BarrierParams(s=s, eps=0.02, r=0.05)
        devs.append(abs(B.k_profile(p, 0.0) * p.C0 / 2 - 1))
        a = (4 * p.eps) ** s
        assert devs[-1] == pytest.approx((1 - a) / (2 - a), rel=1e-10)
    assert devs[0] > devs[1] > devs[2] and devs[2] < 5e-3


def test_time_outside_window_rejected(p2):
    with pytest.raises(ValueError):
        B.z_profile(p2, -0.1)
    with pytest.raises(ValueError):
        B.k_profile(p2, p2.T * 1.01)


@pytest.mark.parametrize(
    "kw",
    [dict(s=0.0), dict(s=1.2), dict(eps=0.3), dict(r=0.2), dict(r=1 / 9, dim=3), dict(m=1.0), dict(dim=1), dict(c_s=-1.0)],
)
def test_bad_params_rejected(kw):
    base = dict(s=0.3, eps=0.02, r=0.05, dim=2)
    base.update(kw)
    with pytest.raises(ValueError):
        B.BarrierParams(**base)


# -- barrier values ----------------------------------------------------------


def test_sub_peak_rides_the_center(p2):
    for t in (0.0, 0.4 * p2.T, p2.T):
        z = p2.z(t)
        assert B.subsolution_eval(p2, (0.0, z), t) == pytest.approx(p2.c_s * z**p2.s, rel=1e-14)
    at_end = B.subsolution_eval(p2, (0.0, 4 * p2.eps), p2.T)
    assert at_end == pytest.approx(p2.c_s * (4 * p2.eps) ** p2.s, rel=1e-12)
    assert B.subsolution_eval(p2, (0.0, -0.5), 0.0) == 0.0


def test_super_vanishes_at_its_center(p2, p3):
    # z(T) = 4 eps up to rounding, so the profile sees R near 1e-14
    assert B.supersolution_eval(p2, (0.0, -4 * p2.eps), p2.T) <= 1e-20 * p2.k(p2.T)
    assert B.supersolution_eval(p3, (0.0, 0.0, -4 * p3.eps), p3.T) <= 1e-20 * p3.k(p3.T)
    assert B.supersolution_eval(p2, (0.0, -p2.z(p2.T)), p2.T) == 0.0
    t = 0.3 * p2.T
    assert B.supersolution_eval(p2, (0.0, 0.5), t) == pytest.approx(p2.k(t), rel=1e-14)


def test_eval_checks_dimension(p2):
    with pytest.raises(ValueError):
        B.subsolution_eval(p2, (0.0, 0.0, 0.0), 0.0)


# -- radial profiles ---------------------------------------------------------


def test_sub_profile_shape():
    R = np.linspace(0, 1.2, 2001)
    val, d1, _ = B.sub_profile(R)
    assert val[0] == pytest.approx(1.0, rel=1e-15)
    assert np.all(np.diff(val[R <= 1]) <= 0)
    assert np.all(val[R >= 1] == 0)
    assert np.all(d1 <= 0)


@pytest.mark.parametrize("profile", [B.sub_profile, B.super_profile])
def test_profile_derivatives_match_fd(profile):
    R = np.linspace(0.05, 0.95, 400)
    h = 1e-5
    val = lambda r: profile(r)[0]  # noqa: E731
    _, d1, d2 = profile(R)
    fd1 = _fd1(val, R, h)
    fd2 = (val(R + h) - 2 * val(R) + val(R - h)) / h**2
    assert np.max(np.abs(fd1 - d1)) < 1e-7
    assert np.max(np.abs(fd2 - d2)) < 1e-4


def test_super_profile_shape():
    R = np.linspace(0, 1.5, 30_001)
    val, d1, _ = B.super_profile(R)
    assert val[0] == 0 and d1[0] == 0
    assert np.all(np.diff(val) >= 0)
    assert np.all(val[R >= 1] == 1.0) and np.all(val <= 1.0)
    inner = R <= 0.5
    assert np.array_equal(val[inner], R[inner] ** 2)


@pytest.mark.parametrize("m,dim", [(2.0, 2), (2.0, 3), (1.5, 2), (3.0, 3)])
def test_profile_inequality_holds_with_recorded_constant(m, dim):
    C = B.profile_constant(m, dim)
    assert C >= 2 * dim * (m - 1) + 4  # the R² core alone needs this much
    R = np.random.default_rng(5).uniform(0, 1.2, 100_000)
    lhs, val = B.profile_inequality_lhs(m, dim, R)
    assert np.all(lhs <= C * val)


def test_laplacian_cap_bounds_dense_samples():
    for dim in (2, 3):
        R = np.random.default_rng(dim).uniform(0, 1, 100_000)
        _, d1, d2 = B.sub_profile(R)
        assert np.max(np.abs(B.radial_laplacian(d1, d2, R, dim))) <= B.laplacian_cap(dim)
        fine = np.linspace(0, 1, 1_000_001)
        _, d1, d2 = B.sub_profile(fine)
        dense = np.max(np.abs(B.radial_laplacian(d1, d2, fine, dim)))
        assert B.laplacian_cap(dim) / B.SAFETY == pytest.approx(dense, rel=1e-6)


# -- transport margin and critical point -------------------------------------


def _sympy_hessian(s_val, dim):
    s = sp.Rational(s_val).limit_denominator(1000)
    if dim == 2:
        x, y = sp.symbols("x y", real=True)
        f = x**2 + y * (y + 1) + (x - y) ** (s - 1) * (x + y + 1) / 2 + (-x - y) ** (s - 1) * (-x + y + 1) / 2
        v, pt = [x, y], {x: 0, y: -1}
    else:
        x1, x2, y = sp.symbols("x1 x2 y", real=True)
        q = sp.Rational(1, 4)
        f = (
            -q * (y - x1 + x2) ** (s - 1) * (x1 + y - 1)
            - q * (y + x1 - x2) ** (s - 1) * (x2 + y - 1)
            - q * (y + x1 + x2) ** (s - 1) * (-x1 - x2 + 2 * (y - 1))
            + x1**2
            + x2**2
            + y * (y - 1)
        )
        v, pt = [x1, x2, y], {x1: 0, x2: 0, y: 1}
    return float(s), np.array([[float(sp.diff(f, a, b).subs(pt)) for b in v] for a in v])


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("s", [0.1, 0.3, 0.5, 0.85])
def test_closed_form_hessian_matches_symbolic(s, dim):
    s_exact, H = _sympy_hessian(s, dim)
    assert np.allclose(B.expected_hessian(s_exact, dim), H, rtol=1e-14, atol=1e-14)


def test_certificate_examples():
    c2 = B.critical_point_certificate(0.5, 2)
    assert c2.hessian_entries["xx"] == pytest.approx(1.0, rel=1e-5)
    assert c2.hessian_entries["yy"] == pytest.approx(3.0, rel=1e-5)
    c3 = B.critical_point_certificate(0.5, 3)
    assert c3.hessian_entries["x1x1"] == pytest.approx(1.5, rel=1e-5)
    assert c3.hessian_entries["yy"] == pytest.approx(3.0, rel=1e-5)
    assert c3.hessian_entries["x1y"] == pytest.approx(0.25, rel=1e-5)
    assert abs(c3.hessian_entries["x1x2"]) < 1e-8


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("s", [0.1, 0.3, 0.5])
def test_r_s_positive_and_certified(s, dim):
    c = B.critical_point_certificate(s, dim)
    assert 0 < c.r_s <= 0.5
    assert abs(c.value) <= 1e-8 and max(map(abs, c.gradient)) <= 1e-8
    assert c.max_hessian_rel_error <= 1e-5
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(dim, 20_000))
    pts *= c.r_s * rng.uniform(0, 1, 20_000) ** (1 / dim) / np.linalg.norm(pts, axis=0)
    x0 = B.critical_point(dim)[:, None]
    assert np.all(B.transport_margin(s, *(x0 + pts)) >= -1e-12)


def test_r_s_below_search_cap_is_tight():
    c = B.critical_point_certificate(0.1, 2)
    assert c.r_s < 0.5
    rng = np.random.default_rng(2)
    th = rng.uniform(0, 2 * np.pi, 200_000)
    rad = 1.01 * c.r_s
    vals = B.transport_margin(0.1, rad * np.cos(th), -1 + rad * np.sin(th))
    assert vals.min() < 0


def test_hessian_mismatch_is_hard_failure(monkeypatch):
    monkeypatch.setattr(B, "expected_hessian", lambda s, dim: np.eye(dim))
    with pytest.raises(ValueError, match="Hessian"):
        B.critical_point_certificate(0.3, 2)


def _margin_from_drift(p, X, center):
    """``(X - c)·(X + M V(X))``, the transport margin built from the sampled drift."""
    V = p.drift().evaluate(*X)
    return sum((X[i] - center[i]) * (X[i] + p.M * V[i]) for i in range(p.dim))


@pytest.mark.parametrize("dim", [2, 3])
def test_margin_matches_drift_and_reflection(dim):
    p = B.BarrierParams(s=0.3, eps=0.02, r=0.05, dim=dim)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.1, 0.1, size=(dim, 5000))
    e = np.zeros(dim)
    e[-1] = 1.0
    up, down = e[:, None] + pts, -e[:, None] + pts
    f_up = _margin_from_drift(p, up, e)
    f_down = _margin_from_drift(p, down, -e)
    if dim == 2:
        ref_down = B.transport_margin(p.s, *down)
        ref_up = B.transport_margin(p.s, *(-up))
    else:
        ref_up = B.transport_margin(p.s, *up)
        ref_down = B.transport_margin(p.s, *(-down))
    assert np.allclose(f_up, ref_up, rtol=1e-10, atol=1e-12)
    assert np.allclose(f_down, ref_down, rtol=1e-10, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.95))
def test_margin_has_a_strict_local_minimum(s):
    for dim in (2, 3):
        x0 = B.critical_point(dim)
        assert abs(float(B.transport_margin(s, *x0))) < 1e-14
        assert np.all(np.linalg.eigvalsh(B.expected_hessian(s, dim)) > 0)


# -- residual sign checks ----------------------------------------------------


@pytest.mark.parametrize("which", ["sub", "super"])
def test_certified_barriers_pass(p2, which):
    rep = B.residual_sign_check(p2, which)
    assert rep.passed, rep.failing()
    assert rep.n_samples >= 100_000
    assert rep.n_skipped == 0


def test_perturbed_k_breaks_growth_condition(p2):
    rep = B.residual_sign_check(p2, "super", n_samples=1 << 14, k_scale=1 + 1e-3)
    assert not rep.passed
    assert "k_growth" in rep.failing()
    w = rep.witness_point
    assert len(w) == 3 and 0 <= w[-1] <= p2.T
    assert rep.max_violation == pytest.approx(1e-3, rel=0.05)


def test_zero_drift_sub_fails_on_transport(p2):
    # Without the inward drift the shrinking bump gains mass below its center.
    rep = B.residual_sign_check(p2, "sub", n_samples=1 << 14, drift=DriftSpec())
    assert not rep.passed
    assert rep.conditions["amplitude"].passed
    assert not rep.conditions["transport"].passed
    w = np.array(rep.witness_point)
    assert w[1] < p2.z(w[-1])  # below the moving center


def test_amplitude_above_cap_detected():
    p = B.BarrierParams(s=0.3, eps=0.02, r=0.0625, c_s=None)
    big = B.BarrierParams(s=0.3, eps=0.02, r=0.0625, c_s=3 * p.cs_cap)
    rep = B.residual_sign_check(big, "sub", n_samples=1 << 12)
    assert not rep.conditions["amplitude"].passed


def test_jobs_do_not_change_the_report(p3):
    a = B.residual_sign_check(p3, "super", n_samples=1 << 15, jobs=1, chunk=1 << 12)
    b = B.residual_sign_check(p3, "super", n_samples=1 << 15, jobs=3, chunk=1 << 12)
    assert a == b


def test_report_is_json_with_required_fields(p2):
    cert = B.critical_point_certificate(p2.s, 2)
    reps = [B.residual_sign_check(p2, w, n_samples=1 << 12) for w in ("sub", "super")]
    doc = json.loads(B.certificate_report(cert, reps))
    for key in ("params", "max_violation", "witness_point", "r_s", "hessian_entries"):
        assert key in doc
    assert doc["r_s"] == cert.r_s
    assert math.isclose(doc["hessian_entries"]["xx"], 2 * p2.s, rel_tol=1e-5)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("s,eps", [(0.1, 0.01), (0.5, 0.02), (0.2, 0.04)])
def test_default_amplitude_orders_the_barriers(dim, s, eps):
    p = B.BarrierParams(s=s, eps=eps, r=0.05, dim=dim)
    assert p.c_s <= 0.5 * p.cs_cap and p.c_s <= 0.5 * p.k(0.0)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.2, 1.2, size=(dim, 20000))
    for t in np.linspace(0.0, p.T, 7):
        near = rng.uniform(-1, 1, size=(dim, 5000)) * p.r * p.z(t)
        near[-1] += p.z(t)
        both = np.concatenate([pts, near], axis=1)
        sub = B.subsolution_eval(p, tuple(both), t)
        assert np.max(sub) > 0.5 * p.c_s * p.z(t) ** p.s
        assert np.all(sub <= B.supersolution_eval(p, tuple(both), t))
