# model/gradcheck.py
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import torch

from core.errors import DataError
from core.seeding import substream, torch_generator
from corpus.types import Context
from model.training import backward
from objectives.losses import batch_context_loss, batch_utterance_loss, total_loss
from objectives.masking import LossMode, corrupt_context, plan_token_masks

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    n_coords: int
    worst_parameter: str
    worst_analytic: float
    worst_numeric: float


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@torch.no_grad()
def randomize_parameters(model: torch.nn.Module, std: float = 0.3, seed: int = 0):
    """Add N(0, std) noise to every parameter, to move away from the symmetric init"""
    generator = torch_generator(seed, "gradcheck-noise")
    for param in model.parameters():
        noise = torch.randn(param.shape, generator=generator, dtype=torch.float64)
        param.add_(std * noise.to(param.dtype))


def mug_loss_fn(
    model: torch.nn.Module,
    contexts: Sequence[Context],
    p_omega: float = 0.15,
    p_c: float = 0.2,
    lambda_u: float = 1.0,
    lambda_d: float = 1.0,
    seed: int = 0,
) -> Callable[[], torch.Tensor]:
    """Closure over a frozen MUG batch returning the hierarchical loss"""
    rng = substream(seed, "gradcheck")
    corrupted = [corrupt_context(ctx, LossMode.MUG, p_c, rng=rng) for ctx in contexts]
    utterances = [utt.tokens for ctx in contexts for utt in ctx.utterances]
    plans = [plan_token_masks(u, p_omega, rng=rng) for u in utterances]

    def loss() -> torch.Tensor:
        u_part, _ = batch_utterance_loss(model, utterances, plans)
        d_part, _ = batch_context_loss(model, corrupted)
        return total_loss(u_part, d_part, lambda_u, lambda_d).total

    return loss


def gradient_check(
    model: torch.nn.Module,
    loss_fn: Callable[[], torch.Tensor],
    epsilon: float = 1e-5,
    n_coords: int = 200,
    seed: int = 0,
) -> GradCheckResult:
    """
    Compare backward() against central differences on sampled coordinates.

    Coordinates are drawn uniformly over all parameter entries, without
    replacement. The model must be in float64; dropout is switched off.
    """
    named = list(model.named_parameters())
    if any(p.dtype != torch.float64 for _, p in named):
        raise DataError("gradient check needs a float64 model (call model.double())")

    was_training = model.training
    model.eval()
    try:
        analytic = backward(model, loss_fn())

        sizes = [p.numel() for _, p in named]
        total = sum(sizes)
        rng = substream(seed, "gradcheck-coords")
        picks = sorted(int(i) for i in rng.choice(total, size=min(n_coords, total), replace=False))

        offsets, running = [], 0
        for size in sizes:
            offsets.append(running)
            running += size

        worst = (0.0, "", 0.0, 0.0)
        param_idx = 0
        for flat in picks:
            while flat >= offsets[param_idx] + sizes[param_idx]:
                param_idx += 1
            name, param = named[param_idx]
            local = flat - offsets[param_idx]

            with torch.no_grad():
                values = param.view(-1)
                original = float(values[local])
                values[local] = original + epsilon
                f_plus = float(loss_fn())
                values[local] = original - epsilon
                f_minus = float(loss_fn())
                values[local] = original

            numeric = (f_plus - f_minus) / (2 * epsilon)
            exact = float(analytic[name].view(-1)[local])
            error = relative_error(exact, numeric)
            if error > worst[0]:
                worst = (error, f"{name}[{local}]", exact, numeric)
    finally:
        model.train(was_training)

    logger.info(f"gradient check over {len(picks)} coordinates: max relative error {worst[0]:.3e} at {worst[1] or '-'}")
    return GradCheckResult(worst[0], len(picks), worst[1], worst[2], worst[3])
