"""Worst-case iteration of the two bootstrap recurrences.

``run_appendix_a`` iterates the moment bound
``M_k = C2^{n_k} + C2^k M_{k-1}^{2 + C1/n_k}`` together with the exponent
bookkeeping ``c_k = (2 + C1/n_k) c_{k-1} + k + 1``. ``run_appendix_b`` iterates
the coupled pair ``(a_n, b_n)`` and classifies the orbit. Every quantity is
carried as a logarithm, normalized by ``n_k`` where it would otherwise overflow.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

LOG_FLOOR = -700.0
CONVERGES = "CONVERGES"
DIVERGES = "DIVERGES"
UNDECIDED = "UNDECIDED"


@dataclass(frozen=True)
class RecurrenceConfig:
    """Parameters of both recurrences.

    Moment recurrence: ``C0``, ``C1``, ``a``, bound ``M`` on the initial data
    and step count ``K``. Coupled pair: ``C1``, integrability ``p``, dimension
    ``d``, start ``a0 = b0`` and step count ``N``.
    """

    C0: float = 1.0
    C1: float = 1.0
    a: float = 0.0
    M: float = 1.0
    K: int = 1000
    p: float = 3.5
    d: int = 2
    a0: float = 1e-6
    N: int = 5000

    def __post_init__(self):
        if not self.C0 > 0:
            raise ValueError(f"C0 must be positive, got {self.C0}")
        if not self.C1 >= 0:
            raise ValueError(f"C1 must be nonnegative, got {self.C1}")
        if not self.a > -1:
            raise ValueError(f"a must exceed -1, got {self.a}")
        if not self.M > 0:
            raise ValueError(f"M must be positive, got {self.M}")
        if self.K < 0 or self.N < 0:
            raise ValueError("step counts must be nonnegative")
        if not self.p > 2:
            raise ValueError(f"p must exceed 2, got {self.p}")
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"d must be an integer >= 2, got {self.d}")
        if not 0 <= self.a0 < 1:
            raise ValueError(f"a0 must lie in [0, 1), got {self.a0}")

    @property
    def q1(self) -> float:
        return 1.0 - 2.0 / self.p

    @property
    def q2(self) -> float:
        return 1.0 - 1.0 / self.p

    @property
    def C2(self) -> float:
        """Constant of the moment recurrence, increasing in ``C1``, ``M`` and ``1/C0``."""
        return max(self.C1, 1.0) * (1.0 + self.M) * (1.0 + 1.0 / self.C0)

    def n(self, k: int) -> float:
        """``n_k = 2^k (a+1) - a``; exact for integer ``a`` and moderate ``k``."""
        if float(self.a).is_integer() and k < 1000:
            return 2 ** k * (int(self.a) + 1) - int(self.a)
        return 2.0 ** k * (self.a + 1) - self.a


def n_sequence(a: float, K: int) -> list:
    """``n_0 = 1``, ``n_{k+1} = 2 n_k + a``, iterated directly."""
    out = [1]
    for _ in range(K):
        out.append(2 * out[-1] + a)
    return out


def critical_exponent(d: int) -> float:
    """Integrability threshold ``p* = d + 4/(d+2)`` of the coupled pair."""
    return d + 4.0 / (d + 2)


def _inv_n(k: int, a: float) -> float:
    """``1/n_k`` without forming ``2^k``."""
    t = 2.0 ** -k
    return t / ((a + 1.0) - a * t)


def _n_ratio(k: int, a: float) -> float:
    """``n_{k-1}/n_k`` without forming ``2^k``."""
    t = 2.0 ** -k
    return 0.5 * ((a + 1.0) - 2.0 * a * t) / ((a + 1.0) - a * t)


@dataclass
class MomentReport:
    """Normalized iterates of the moment recurrence.

    ``log_B[k] = log(M_k)/n_k`` and ``c_over_n[k] = c_k/n_k``. ``bound`` is
    ``sup_k c_k/n_k * log C3`` with the induction constant ``C3`` recorded in
    ``log_C3``; the iteration must stay below it.
    """

    config: RecurrenceConfig
    C2: float
    log_B: np.ndarray
    c_over_n: np.ndarray
    log_C3: float
    plateau_k: int | None

    @property
    def B(self) -> np.ndarray:
        return np.exp(self.log_B)

    @property
    def sup_B(self) -> float:
        return float(np.exp(self.log_B.max()))

    @property
    def sup_c_over_n(self) -> float:
        return float(self.c_over_n.max())

    @property
    def bound(self) -> float:
        return self.sup_c_over_n * self.log_C3

    @property
    def bounded(self) -> bool:
        return bool(self.log_B.max() <= self.bound)

    def as_dict(self) -> dict:
        return {
            "C2": self.C2,
            "sup_B": self.sup_B,
            "sup_c_over_n": self.sup_c_over_n,
            "log_C3": self.log_C3,
            "log_bound": self.bound,
            "plateau_k": self.plateau_k,
            "K": self.config.K,
        }


def c_sequence(C1: float, a: float, K: int) -> list:
    """Exponents ``c_0 = 1``, ``c_k = (2 + C1/n_k) c_{k-1} + k + 1`` as floats."""
    ns = n_sequence(a, K)
    c = [1.0]
    for k in range(1, K + 1):
        c.append((2.0 + C1 / ns[k]) * c[-1] + k + 1)
    return c


def _plateau(values: np.ndarray, tol: float) -> int | None:
    """First index after which consecutive changes stay below ``tol``."""
    jumps = np.abs(np.diff(values)) > tol * np.maximum(1.0, np.abs(values[1:]))
    if jumps[-1:].any() or values.size < 2:
        return None
    last = np.flatnonzero(jumps)
    return int(last[-1] + 1) if last.size else 0


def run_appendix_a(cfg: RecurrenceConfig, plateau_tol: float = 1e-12) -> MomentReport:
    """Iterate the moment recurrence with equality, starting from ``M_0 = M``."""
    x = math.log(cfg.C2)
    log_B = np.empty(cfg.K + 1)
    gamma = np.empty(cfg.K + 1)
    log_B[0] = math.log(cfg.M)
    gamma[0] = 1.0
    for k in range(1, cfg.K + 1):
        inv_n = _inv_n(k, cfg.a)
        e = 2.0 + cfg.C1 * inv_n
        ratio = _n_ratio(k, cfg.a)
        # log(M_k)/n_k = logaddexp(n_k x, k x + e n_{k-1} l_{k-1}) / n_k
        y = k * x * inv_n + e * ratio * log_B[k - 1]
        hi, lo = max(x, y), min(x, y)
        log_B[k] = hi + math.log1p(math.exp((lo - hi) / inv_n)) * inv_n
        gamma[k] = e * ratio * gamma[k - 1] + (k + 1) * inv_n
    # log M_k <= c_k log C3 by induction once C3 >= 2 max(C2, M) and n_k <= (1 + a+) c_k
    log_C3 = (1.0 + max(cfg.a, 0.0)) * (max(x, math.log(cfg.M)) + math.log(2.0))
    return MomentReport(cfg, cfg.C2, log_B, gamma, log_C3, _plateau(log_B, plateau_tol))


@dataclass
class PairReport:
    """Log-space orbit of the coupled pair and its classification."""

    config: RecurrenceConfig
    log_a: np.ndarray
    log_b: np.ndarray
    verdict: str
    steps: int

    @property
    def a(self) -> np.ndarray:
        return np.exp(self.log_a)

    @property
    def b(self) -> np.ndarray:
        return np.exp(self.log_b)

    @property
    def final_log_a(self) -> float:
        return float(self.log_a[-1])


def run_appendix_b(cfg: RecurrenceConfig, floor: float = LOG_FLOOR, tail: int = 10) -> PairReport:
    """Iterate ``(a_n, b_n)`` with equality from ``a_0 = b_0``.

    CONVERGES once ``log a_n <= floor`` after ``tail`` strictly decreasing
    steps, DIVERGES once ``a_n >= 1``, UNDECIDED if neither happens in ``N``
    steps.
    """
    d, q1, q2 = cfg.d, cfg.q1, cfg.q2
    lc = math.log(cfg.C1) if cfg.C1 > 0 else -math.inf
    la = lb = math.log(cfg.a0) if cfg.a0 > 0 else -math.inf
    log_a, log_b = [la], [lb]
    verdict = UNDECIDED
    if la == -math.inf:
        return PairReport(cfg, np.array(log_a), np.array(log_b), CONVERGES, 0)
    run = 0
    for n in range(cfg.N):
        nc = n * lc if n else 0.0
        nb = np.logaddexp(nc + (q2 + 2.0 / d) * la, nc + (2.0 / d) * la + q1 * lb)
        na = np.logaddexp(nc + (q2 + 2.0 / (d + 2)) * la, nc + q1 * lb + (2.0 / (d + 2)) * la)
        run = run + 1 if na < la else 0
        la, lb = float(na), float(nb)
        log_a.append(la)
        log_b.append(lb)
        if la >= 0.0:
            verdict = DIVERGES
            break
        if la <= floor and run >= tail:
            verdict = CONVERGES
            break
    return PairReport(cfg, np.array(log_a), np.array(log_b), verdict, len(log_a) - 1)


@dataclass
class ScanTable:
    """Verdicts of the coupled pair over a ``(p, a0)`` grid."""

    d: int
    C1: float
    p_grid: np.ndarray
    a0_grid: np.ndarray
    rows: list = field(default_factory=list)

    def frontier(self) -> dict:
        """Least sampled ``p`` with verdict CONVERGES for each ``a0`` (None if none)."""
        out = {}
        for a0 in self.a0_grid:
            ps = [r[1] for r in self.rows if r[2] == a0 and r[3] == CONVERGES]
            out[float(a0)] = min(ps) if ps else None
        return out

    def verdict(self, p: float, a0: float) -> str:
        for r in self.rows:
            if r[1] == p and r[2] == a0:
                return r[3]
        raise KeyError((p, a0))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["d", "p", "a0", "verdict", "final_log_a"])
            for row in self.rows:
                w.writerow([row[0], repr(row[1]), repr(row[2]), row[3], repr(row[4])])


def _scan_cell(args) -> tuple:
    d, C1, p, a0, N = args
    rep = run_appendix_b(RecurrenceConfig(C1=C1, p=p, d=d, a0=a0, N=N))
    return (d, p, a0, rep.verdict, rep.final_log_a)


def threshold_scan(d: int, C1: float, a0_grid, p_grid, N: int = 5000, jobs: int = 1) -> ScanTable:
    """Run the coupled pair on every ``(p, a0)`` cell; cells are independent."""
    p_grid = np.asarray(p_grid, dtype=np.float64)
    a0_grid = np.asarray(a0_grid, dtype=np.float64)
    cells = [(d, C1, float(p), float(a0), N) for p in p_grid for a0 in a0_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_scan_cell, cells, chunksize=max(1, len(cells) // (4 * jobs))))
    else:
        rows = [_scan_cell(c) for c in cells]
    return ScanTable(d, C1, p_grid, a0_grid, rows)
