"""Numerical checks that balancing group activations never raises the aggregated score.

With phi(a) = P / (P + a) convex and decreasing, the mean of phi over group
activations is Schur-convex: if ``a`` majorizes ``b`` (same total, ``b`` more
balanced) then mean phi(b) <= mean phi(a).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NonPositiveP, Rng, TotalMismatch

TOTAL_TOL = 1e-9
SCORE_TOL = 1e-12


def majorizes(a, b, tol: float = TOTAL_TOL) -> bool:
    """True if ``a`` majorizes ``b``, i.e. ``b`` is at least as balanced as ``a``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise TotalMismatch(f"length {a.shape} != {b.shape}")
    if abs(a.sum() - b.sum()) > tol * max(1.0, abs(a.sum())):
        raise TotalMismatch(f"totals differ: {a.sum()} vs {b.sum()}")
    pa = np.cumsum(np.sort(a)[::-1])[:-1]
    pb = np.cumsum(np.sort(b)[::-1])[:-1]
    return bool(np.all(pb <= pa + tol * max(1.0, abs(a.sum()))))


def phi(P: float, a):
    return P / (P + np.asarray(a, dtype=np.float64))


def mean_score(P: float, a) -> float:
    if not P > 0:
        raise NonPositiveP(f"P must be positive, got {P}")
    return float(np.mean(phi(P, a)))


def robin_hood(a: np.ndarray, rng: Rng) -> np.ndarray:
    """Move a random amount from a larger entry to a smaller one, at most half their gap."""
    a = a.copy()
    i, j = rng.sample_without_replacement(len(a), 2)
    hi, lo = (i, j) if a[i] >= a[j] else (j, i)
    delta = rng.uniform() * (a[hi] - a[lo]) / 2.0
    a[hi] -= delta
    a[lo] += delta
    return a


def balanced_version(a: np.ndarray, rng: Rng) -> np.ndarray:
    """A random vector majorized by ``a``: T a for a random doubly stochastic T."""
    G = len(a)
    # convex mix of permutation matrices is doubly stochastic
    w = rng.exponential(size=3)
    w /= w.sum()
    out = np.zeros(G)
    for wk in w:
        out += wk * a[rng.permutation(G)]
    return out


@dataclass
class Violation:
    kind: str
    P: float
    a: list[float]
    b: list[float]
    score_a: float
    score_b: float


@dataclass
class TheoremReport:
    trials: int
    G: int
    checked_pairs: int = 0
    transfers: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_theorem(trials: int, G: int, rng: Rng, transfers_per_trial: int = 5) -> TheoremReport:
    """Randomized search for counterexamples; violations are returned, never raised."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rep = TheoremReport(trials, G)
    for _ in range(trials):
        P = float(np.exp(rng.uniform(-3, 3)))
        a = rng.exponential(size=G) * float(np.exp(rng.uniform(-2, 2)))

        cur = a
        for _ in range(transfers_per_trial):
            nxt = robin_hood(cur, rng)
            s0, s1 = mean_score(P, cur), mean_score(P, nxt)
            rep.transfers += 1
            if s1 > s0 + SCORE_TOL:
                rep.violations.append(Violation("transfer", P, cur.tolist(), nxt.tolist(), s0, s1))
            cur = nxt

        # an independent random pair: test majorization both ways, check ordering when it holds
        b = balanced_version(a, rng) if rng.uniform() < 0.5 else rng.exponential(size=G)
        b = b * (a.sum() / b.sum())
        for x, y in ((a, b), (b, a)):
            if majorizes(x, y):
                rep.checked_pairs += 1
                sx, sy = mean_score(P, x), mean_score(P, y)
                if sy > sx + SCORE_TOL:
                    rep.violations.append(Violation("majorization", P, x.tolist(), y.tolist(), sx, sy))
    return rep


def two_point_gap(P: float, x: float, y: float, delta: float) -> float:
    """phi(x - delta) + phi(y + delta) - phi(x) - phi(y); non-positive for 0 <= delta <= (x - y)/2."""
    return float(phi(P, x - delta) + phi(P, y + delta) - phi(P, x) - phi(P, y))


def two_point_grid(n: int = 100, P_values=(0.1, 1.0, 10.0), fractions=(0.1, 0.25, 0.5)) -> float:
    """Largest two-point gap over an n x n grid of activation pairs; must be <= 0 up to rounding."""
    grid = np.linspace(0.0, 10.0, n)
    worst = -np.inf
    for P in P_values:
        for x in grid:
            for y in grid:
                hi, lo = max(x, y), min(x, y)
                for f in fractions:
                    worst = max(worst, two_point_gap(P, hi, lo, f * (hi - lo)))
    return float(worst)
