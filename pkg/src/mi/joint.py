# mi/joint.py
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.errors import DataError

SUM_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """p[a, b] over a finite |A| x |B| alphabet"""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=np.float64)
        if p.ndim != 2 or 0 in p.shape:
            raise DataError(f"joint must be a non-empty matrix, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise DataError("joint entries must be finite and non-negative")
        if abs(p.sum() - 1.0) > SUM_TOLERANCE:
            raise DataError(f"joint sums to {p.sum():.15f}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def shape(self) -> tuple[int, int]:
        return self.p.shape

    @property
    def marginal_a(self) -> np.ndarray:
        return self.p.sum(axis=1)

    @property
    def marginal_b(self) -> np.ndarray:
        return self.p.sum(axis=0)

    def transpose(self) -> "DiscreteJoint":
        return DiscreteJoint(self.p.T)

    @classmethod
    def from_counts(cls, counts: np.ndarray, smoothing: float = 0.0) -> "DiscreteJoint":
        counts = np.asarray(counts, dtype=np.float64) + smoothing
        total = counts.sum()
        if total <= 0:
            raise DataError("no counts to build a joint from")
        return cls(_renormalize(counts / total))


def _renormalize(p: np.ndarray) -> np.ndarray:
    # one extra division brings the float sum back within tolerance
    return p / p.sum()


def true_mi(joint: DiscreteJoint) -> float:
    """Sum of p(a,b) ln[p(a,b) / (p(a) p(b))] in nats, with 0 ln 0 = 0"""
    p = joint.p
    outer = np.outer(joint.marginal_a, joint.marginal_b)
    support = p > 0
    return float(np.sum(p[support] * (np.log(p[support]) - np.log(outer[support]))))


def product_joint(p_a: np.ndarray, p_b: np.ndarray) -> DiscreteJoint:
    return DiscreteJoint(_renormalize(np.outer(p_a, p_b)))


def diagonal_joint(k: int) -> DiscreteJoint:
    return DiscreteJoint(np.eye(k) / k)


def random_joint(
    size_a: int,
    size_b: int,
    concentration: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> DiscreteJoint:
    """Dirichlet(concentration) draw over all |A| x |B| cells"""
    if size_a < 1 or size_b < 1 or concentration <= 0:
        raise DataError("joint sizes must be >= 1 and concentration > 0")
    rng = rng or np.random.default_rng()
    flat = rng.dirichlet(np.full(size_a * size_b, concentration))
    return DiscreteJoint(_renormalize(flat.reshape(size_a, size_b)))
