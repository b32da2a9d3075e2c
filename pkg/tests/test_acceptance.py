"""Acceptance criteria 1-9, one printed PASS/FAIL line each.

Criteria 1-8 read the checks an experiment report tags with their number;
criterion 9 exercises the diagnostics directly.  The full set takes about a minute.
"""

import time

import numpy as np

from pmdrift import diagnostics as G
from pmdrift.experiments import Check, config_for, run_experiment
from pmdrift.grid import Grid, ParabolicCylinder, ScalarField

_CACHE = {}


def report(exp_id, tmp_path_factory, overrides=()):
    key = (exp_id, tuple(overrides))
    if key not in _CACHE:
        out = tmp_path_factory.mktemp(exp_id)
        _CACHE[key] = run_experiment(exp_id, config_for(exp_id, overrides=overrides), out)
    return _CACHE[key]


def verdict(capsys, n, checks, extra=""):
    assert checks, f"no checks tagged with criterion {n}"
    ok = all(c.passed for c in checks)
    bad = [c for c in checks if not c.passed] or checks[:1]
    detail = "; ".join(f"{c.name} = {c.value}" for c in bad) + extra
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


def tagged(rep, n):
    return [c for c in rep.checks if c.criterion == n]


def test_criterion_1_conservation_positivity(tmp_path_factory, capsys):
    rep = report("E8_comparison_contraction", tmp_path_factory)
    assert verdict(capsys, 1, tagged(rep, 1))


def test_criterion_2_barenblatt(tmp_path_factory, capsys):
    rep = report("E1_barenblatt", tmp_path_factory)
    names = {c.name for c in tagged(rep, 2)}
    assert names == {"oracle_constants", "convergence_order", "l1_error_finest"}
    assert verdict(capsys, 2, tagged(rep, 2))


def test_criterion_3_stationary_attraction(tmp_path_factory, capsys):
    rep = report("E2_stationary", tmp_path_factory)
    assert {c.name for c in tagged(rep, 3)} == {"C_closed_form", "final_distance", "monotone_last_half"}
    assert verdict(capsys, 3, tagged(rep, 3))


def test_criterion_4_comparison_contraction(tmp_path_factory, capsys):
    rep = report("E8_comparison_contraction", tmp_path_factory)
    assert {c.name for c in tagged(rep, 4)} == {"ordering", "l1_contraction"}
    assert verdict(capsys, 4, tagged(rep, 4))


def test_criterion_5_unbounded_peaks(tmp_path_factory, capsys):
    rep = report("E3_unbounded", tmp_path_factory)
    assert {c.name for c in tagged(rep, 5)} == {"peak_increasing", "peak_ratio", "norm_spread"}
    assert verdict(capsys, 5, tagged(rep, 5))


def test_criterion_6_barrier_certification(tmp_path_factory, capsys):
    t = time.perf_counter()
    reps = [report(e, tmp_path_factory) for e in ("E5_divfree2d", "E6_divfree3d")]
    cert_time = sum(r.timings["certification"] for r in reps)
    checks = [c for r in reps for c in tagged(r, 6)]
    assert {c.name for c in checks} == {"hessian_match", "r_s_found", "sign_checks", "certification_runtime"}
    ok = verdict(capsys, 6, checks, f"; certification {cert_time:.1f} s of {time.perf_counter() - t:.1f} s")
    assert ok and cert_time <= 300.0


def test_criterion_7_holder_trend(tmp_path_factory, capsys):
    rep = report("E5_divfree2d", tmp_path_factory)
    names = {c.name for c in tagged(rep, 7)}
    assert {"quotient_increasing", "lower_probe_vacuum"} <= names
    assert sum(c.name.startswith("run_barriers") for c in tagged(rep, 7)) == 3
    assert verdict(capsys, 7, tagged(rep, 7))


def test_criterion_8_recurrences(tmp_path_factory, capsys):
    rep = report("E7_recurrences", tmp_path_factory)
    names = {c.name for c in tagged(rep, 8)}
    assert {"critical_exponent", "pair_converges", "moments_plateau", "c3", "runtime"} <= names
    assert verdict(capsys, 8, tagged(rep, 8))


def _dyadic_fields(seed, g, nt=6):
    rng = np.random.default_rng(seed)
    return G.SpaceTimeField(g, np.linspace(-1.0, 0.0, nt), rng.integers(0, 1024, (nt,) + g.shape) / 1024.0)


def test_criterion_9_diagnostics(capsys):
    g = Grid(2, 16, 1.0)
    ks, qs = [0.2, 0.4, 0.6, 0.8], [0.1, 0.3, 0.6, 1.0]
    level_ok = True
    for seed in range(20):
        ser = G.level_measures(_dyadic_fields(seed, g), ks, qs)
        level_ok &= bool(np.all(np.diff(ser.A, axis=1) >= 0) and np.all(np.diff(ser.B, axis=1) >= 0))
        level_ok &= bool(np.all(np.diff(ser.A, axis=0) <= 0) and np.all(np.diff(ser.B, axis=0) >= 0))

    g1 = Grid(1, 200, 1.0)
    w = G.SpaceTimeField.constant_in_time(ScalarField(g1, g1.axis_centers().copy()), [0.0])
    hv = G.holder_seminorm(w, 1.0).value
    holder_ok = abs(hv - 1.0) <= g1.h

    Q = ParabolicCylinder((0.0, 0.0), 0.0, 0.8, c=1.0)
    shift_ok = True
    for seed in range(20):
        f = _dyadic_fields(seed, g)
        for c in (7.0, -3.5, 1024.0):
            shift_ok &= G.oscillation(f.map(lambda a: a + c), Q) == G.oscillation(f, Q)

    checks = [
        Check("level_monotone", 9, level_ok, f"{level_ok} on 20 fields", "monotone in q and k"),
        Check("holder_of_x", 9, holder_ok, f"{hv!r} (h = {g1.h})", "1 +- h"),
        Check("osc_shift", 9, shift_ok, f"exact {shift_ok}", "bitwise equal"),
    ]
    assert verdict(capsys, 9, checks)
