# mi/bounds.py
"""
Contrastive (InfoNCE-style) lower bounds on the mutual information of a
discrete joint, evaluated by exact enumeration or by sampling.

The exact bound scores every b in B as a candidate, each weighted by its
marginal p(b):

    E_p(a,b) [ f(a,b) - ln sum_b' p(b') exp f(a,b') ]

which is at most I(A;B) for every critic f, is 0 for a constant critic, never
exceeds H(B) <= ln|B|, and reduces to the familiar
f(a,b) - ln sum_b' exp f(a,b') + ln|B| when B is uniform.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
import torch

from core.errors import DataError, NumericError
from core.seeding import torch_generator
from mi.joint import DiscreteJoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Critic:
    """A full score table f[a, b], or factored embeddings with f(a,b) = <g_a[a], g_b[b]>"""

    table: Optional[np.ndarray] = None
    g_a: Optional[np.ndarray] = None
    g_b: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.table is None) == (self.g_a is None or self.g_b is None):
            raise DataError("a critic is either a full table or a pair of embedding tables")
        for name in ("table", "g_a", "g_b"):
            value = getattr(self, name)
            if value is not None:
                value = np.array(value, dtype=np.float64)
                if not np.all(np.isfinite(value)):
                    raise NumericError(f"critic {name} has non-finite entries")
                object.__setattr__(self, name, value)
        if self.table is None and self.g_a.shape[1] != self.g_b.shape[1]:
            raise DataError("factored critic embeddings must share their width")

    @property
    def factored(self) -> bool:
        return self.table is None

    def scores(self) -> np.ndarray:
        return self.table if self.table is not None else self.g_a @ self.g_b.T

    @classmethod
    def constant(cls, shape: tuple[int, int], value: float = 0.0) -> "Critic":
        return cls(table=np.full(shape, value))

    @classmethod
    def random(cls, shape: tuple[int, int], rng: np.random.Generator, scale: float = 1.0) -> "Critic":
        return cls(table=rng.normal(0.0, scale, size=shape))


@dataclass(frozen=True)
class BoundEstimate:
    value: float
    candidate_set_size: int
    exact: bool
    sample_count: Optional[int] = None
    standard_error: Optional[float] = None

    def __post_init__(self):
        if self.candidate_set_size < 2:
            raise DataError("a contrastive bound needs at least 2 candidates")


def _check_shapes(joint: DiscreteJoint, scores_shape: tuple[int, ...]):
    if tuple(scores_shape) != joint.shape:
        raise DataError(f"critic scores {tuple(scores_shape)} do not match joint {joint.shape}")


def _exact_bound(p: torch.Tensor, scores: torch.Tensor) -> torch.Tensor:
    log_pb = torch.log(p.sum(dim=0))
    normalizer = torch.logsumexp(scores + log_pb, dim=1, keepdim=True)
    support = p > 0
    return torch.sum(p[support] * (scores - normalizer)[support])


def infonce_bound(
    joint: DiscreteJoint, critic: Critic, candidate_set: Optional[Sequence[int]] = None
) -> BoundEstimate:
    """
    Exact expectation of the bound over the candidate set (all of B by default).

    A candidate subset restricts the joint to those b columns, renormalized,
    so the value stays at most ln of the subset size. With uniform p(b) this
    is the plain E[f(a,b) - ln (1/|B|) sum_b' exp f(a,b')] form.
    """
    scores = critic.scores()
    _check_shapes(joint, scores.shape)
    p = joint.p

    if candidate_set is not None:
        columns = [int(b) for b in candidate_set]
        if len(set(columns)) != len(columns) or not all(0 <= b < joint.shape[1] for b in columns):
            raise DataError(f"candidate set must hold distinct indices of B (size {joint.shape[1]}), got {columns}")
        p = DiscreteJoint.from_counts(p[:, columns]).p
        scores = scores[:, columns]

    value = float(_exact_bound(torch.from_numpy(p), torch.from_numpy(scores)))
    if not math.isfinite(value):
        raise NumericError("bound is not finite")
    return BoundEstimate(value=value, candidate_set_size=p.shape[1], exact=True)



def infonce_monte_carlo(
    joint: DiscreteJoint,
    critic: Critic,
    k: int,
    n_batches: int,
    rng: np.random.Generator,
) -> BoundEstimate:
    """
    Sampled InfoNCE: draw k pairs from the joint, score every a_i against all k
    b_j, average f(a_i,b_i) - ln (1/k) sum_j exp f(a_i,b_j). Repeated over
    n_batches with the standard error of the batch means.
    """
    if k < 2 or n_batches < 1:
        raise DataError("Monte Carlo InfoNCE needs k >= 2 and at least one batch")
    scores = critic.scores()
    _check_shapes(joint, scores.shape)

    size_b = joint.shape[1]
    flat = joint.p.reshape(-1)
    estimates = np.empty(n_batches)
    for n in range(n_batches):
        cells = rng.choice(flat.size, size=k, p=flat)
        a, b = cells // size_b, cells % size_b
        block = scores[np.ix_(a, b)]
        row_max = block.max(axis=1, keepdims=True)
        log_mean = (row_max + np.log(np.mean(np.exp(block - row_max), axis=1, keepdims=True))).ravel()
        estimates[n] = float(np.mean(np.diag(block) - log_mean))

    stderr = float(estimates.std(ddof=1) / math.sqrt(n_batches)) if n_batches > 1 else 0.0
    return BoundEstimate(
        value=float(estimates.mean()),
        candidate_set_size=k,
        exact=False,
        sample_count=n_batches * k,
        standard_error=stderr,
    )


def optimize_critic(
    joint: DiscreteJoint,
    factored: bool = False,
    d: int = 4,
    steps: int = 1000,
    lr: float = 0.1,
    seed: int = 0,
    init_scale: float = 0.01,
) -> tuple[Critic, list[float]]:
    """
    Gradient ascent on the exact bound with Adam.

    The full table starts at zero (bound 0); the factored critic starts from
    small seeded embeddings. The best critic seen is returned, so the result
    never scores below the starting one. Also returns the bound per step.
    """
    if d < 1:
        raise DataError("critic width d must be >= 1")
    size_a, size_b = joint.shape
    p = torch.from_numpy(joint.p)

    if factored:
        generator = torch_generator(seed, "critic", d)
        g_a = torch.nn.Parameter(init_scale * torch.randn(size_a, d, generator=generator, dtype=torch.float64))
        g_b = torch.nn.Parameter(init_scale * torch.randn(size_b, d, generator=generator, dtype=torch.float64))
        params = [g_a, g_b]

        def scores() -> torch.Tensor:
            return g_a @ g_b.T

        def snapshot() -> Critic:
            return Critic(g_a=g_a.detach().numpy().copy(), g_b=g_b.detach().numpy().copy())
    else:
        table = torch.nn.Parameter(torch.zeros(size_a, size_b, dtype=torch.float64))
        params = [table]

        def scores() -> torch.Tensor:
            return table

        def snapshot() -> Critic:
            return Critic(table=table.detach().numpy().copy())

    optimizer = torch.optim.Adam(params, lr=lr)
    best_critic = snapshot()
    with torch.no_grad():
        best_value = float(_exact_bound(p, scores()))
    history = [best_value]

    for step in range(steps):
        optimizer.zero_grad()
        bound = _exact_bound(p, scores())
        (-bound).backward()
        optimizer.step()

        with torch.no_grad():
            value = float(_exact_bound(p, scores()))
        if not math.isfinite(value):
            raise NumericError(f"critic optimisation diverged at step {step}")
        history.append(value)
        if value > best_value:
            best_value, best_critic = value, snapshot()

    logger.debug(f"optimized {'factored' if factored else 'full'} critic: bound {history[0]:.4f} -> {best_value:.4f}")
    return best_critic, history


class CandidateCount(NamedTuple):
    count: int
    log_count: float


def sentence_candidate_count(vocab_size: int, length: int) -> CandidateCount:
    """|V|^L candidates a sentence-level critic would have to normalize over"""
    if vocab_size < 1 or length < 0:
        raise DataError("vocab_size must be >= 1 and length >= 0")
    return CandidateCount(vocab_size**length, length * math.log(vocab_size))
