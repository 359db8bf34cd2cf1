"""Vector primitives, error types and seeded randomness shared by every module."""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

ZERO_NORM = 1e-12


class NegStreamError(ValueError):
    """Base class for validation errors raised by the engine."""


class ZeroVector(NegStreamError):
    pass


class NonFinite(NegStreamError):
    pass


class DimensionMismatch(NegStreamError):
    pass


class EmptyClass(NegStreamError):
    pass


class VocabularyTooSmall(NegStreamError):
    pass


class TooFewNegatives(NegStreamError):
    pass


class EmptyGroup(NegStreamError):
    pass


class InvalidSigma(NegStreamError):
    pass


class EmptyNegatives(NegStreamError):
    pass


class NonFiniteLoss(NegStreamError):
    pass


class InvalidRho(NegStreamError):
    pass


class InfeasibleGeometry(NegStreamError):
    pass


class InsufficientSamples(NegStreamError):
    pass


class TotalMismatch(NegStreamError):
    pass


class NonPositiveP(NegStreamError):
    pass


def normalize(raw: Sequence[float] | np.ndarray) -> np.ndarray:
    """Return ``raw`` scaled to unit L2 norm as a float64 array."""
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DimensionMismatch(f"expected a non-empty 1-d vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("vector contains NaN or Inf")
    n = float(np.linalg.norm(x))
    if n < ZERO_NORM:
        raise ZeroVector(f"norm {n:.3g} is too small to normalize")
    return x / n


def normalize_rows(raw: np.ndarray) -> np.ndarray:
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("matrix contains NaN or Inf")
    n = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(n < ZERO_NORM):
        raise ZeroVector("matrix has a zero row")
    return x / n


def check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatch(f"dimension {a.shape[-1]} != {b.shape[-1]}")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two unit vectors: a clamped dot product (no re-normalization)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} != {b.shape}")
    # sum of elementwise products is symmetric in (a, b) bit for bit
    return float(min(1.0, max(-1.0, float(np.sum(a * b)))))


def cosines(rows: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Clamped cosines of each unit row of ``rows`` against unit ``v``."""
    rows = np.asarray(rows, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    check_dims(rows, v)
    return np.clip(rows @ v, -1.0, 1.0)


class Rng:
    """Explicitly seeded PCG64 stream. No global state is ever touched.

    ``spawn`` derives independent child streams so parallel work stays
    reproducible regardless of scheduling.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2**64:
            raise NegStreamError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self._ss = np.random.SeedSequence(self.seed)
        self.gen = np.random.Generator(np.random.PCG64(self._ss))

    def spawn(self, n: int) -> list["Rng"]:
        return [Rng(int(c.generate_state(1, np.uint64)[0])) for c in self._ss.spawn(n)]

    def derive(self, key: int) -> "Rng":
        """Child stream keyed by ``key``; independent of how much this stream was consumed."""
        ss = np.random.SeedSequence([self.seed, int(key)])
        return Rng(int(ss.generate_state(1, np.uint64)[0]))

    def normal(self, sigma: float, size: int | tuple[int, ...]) -> np.ndarray:
        return self.gen.normal(0.0, sigma, size=size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.gen.uniform(low, high, size=size)

    def exponential(self, size=None):
        return self.gen.exponential(1.0, size=size)

    def integers(self, low: int, high: int, size=None):
        return self.gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def sample_without_replacement(self, n: int, k: int) -> list[int]:
        """First ``k`` slots of a Fisher-Yates shuffle of ``range(n)``."""
        if not 0 <= k <= n:
            raise NegStreamError(f"cannot sample {k} of {n}")
        idx = list(range(n))
        for i in range(k):
            j = int(self.gen.integers(i, n))
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k]

    def get_state(self) -> dict[str, Any]:
        return {"seed": self.seed, "bit_generator": self.gen.bit_generator.state}

    @classmethod
    def from_state(cls, state: dict[str, Any]) -> "Rng":
        rng = cls(int(state["seed"]))
        rng.gen.bit_generator.state = state["bit_generator"]
        return rng
