"""Compare the compiled kernels with the NumPy fallback.

Times the two stencil operators and a fixed number of solver steps on 2D and
3D grids, checks that both backends agree, and prints one row per case.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--steps 50]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from pmdrift import _backend
from pmdrift import solver as S
from pmdrift.drift import DIVFREE2D, DIVFREE3D, DriftSpec
from pmdrift.grid import Grid, ScalarField, divergence_of_drift_flux, laplacian_of_nonlinearity

CASES = [
    (Grid(2, 256, 1.0), DriftSpec(DIVFREE2D, s=0.3, epsilon=0.05)),
    (Grid(3, 48, 1.0), DriftSpec(DIVFREE3D, s=0.3, epsilon=0.05)),
]


def _data(g: Grid) -> ScalarField:
    rng = np.random.default_rng(0)
    r2 = sum(x * x for x in g.mesh())
    return ScalarField(g, np.maximum(0.5 - r2, 0.0) * (1.0 + 0.1 * rng.random(g.shape)))


def _solve(u, spec, backend, steps):
    st = S.SolverState(u.copy(), 0.0, 2.0, drift=spec, backend=backend)
    return S.advance(st, S.StepControl(), np.inf, steps).u.values


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=50)
    args = ap.parse_args(argv)
    backends = _backend.available()
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':<28}{'backend':<9}{'best ms':>10}{'speedup':>9}{'max rel diff':>14}")
    for g, spec in CASES:
        u = _data(g)
        V = spec.sample_faces(g)
        jobs = {
            "laplacian": lambda b: laplacian_of_nonlinearity(u, 2.0, backend=b).values,
            "drift divergence": lambda b: divergence_of_drift_flux(u, V, backend=b).values,
            f"{args.steps} solver steps": lambda b: _solve(u, spec, b, args.steps),
        }
        for label, fn in jobs.items():
            ref = fn("python")
            times = {}
            for b in backends:
                out = fn(b)
                diff = float(np.max(np.abs(out - ref)) / max(np.max(np.abs(ref)), 1e-300))
                n = 1 if "solver" in label else 10
                times[b] = min(timeit.repeat(lambda: fn(b), number=n, repeat=args.repeat)) / n
                case = f"{g.dim}D n={g.n} {label}"
                speed = times["python"] / times[b]
                print(f"{case:<28}{b:<9}{1e3 * times[b]:>10.2f}{speed:>9.2f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
