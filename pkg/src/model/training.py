# model/training.py
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

import torch
from torch.optim import AdamW
from torch.optim.lr_scheduler import LambdaLR

from core.errors import DataError, NumericError
from core.seeding import derive_seed, substream
from corpus.types import AlignedContextPair, Context
from objectives.losses import LossValue, batch_context_loss, batch_utterance_loss, total_loss
from objectives.masking import CorruptedContext, LossMode, MaskPlan, corrupt_context, plan_token_masks

logger = logging.getLogger(__name__)


def lr_factor(step: int, warmup: int) -> float:
    """Linear warmup to 1 at step warmup-1, then inverse-sqrt decay"""
    if warmup <= 0:
        return 1.0
    t = step + 1
    return min(t / warmup, math.sqrt(warmup / t))


def backward(model: torch.nn.Module, loss: torch.Tensor) -> dict[str, torch.Tensor]:
    """Gradients of loss for every named parameter; unreachable ones are exact zeros"""
    model.zero_grad(set_to_none=True)
    loss.backward()
    grads = {}
    for name, param in model.named_parameters():
        grads[name] = torch.zeros_like(param) if param.grad is None else param.grad.detach().clone()
    return grads


class WarmupAdamW:
    """AdamW with decoupled weight decay under the warmup / inverse-sqrt schedule"""

    def __init__(
        self,
        named_parameters: Iterable[tuple[str, torch.nn.Parameter]],
        lr: float,
        weight_decay: float = 0.01,
        warmup: int = 100,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.named = [(name, p) for name, p in named_parameters if p.requires_grad]
        if not self.named:
            raise DataError("optimizer needs at least one trainable parameter")
        self.base_lr = lr
        self.warmup = warmup
        self.optimizer = AdamW([p for _, p in self.named], lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        self.scheduler = LambdaLR(self.optimizer, lambda step: lr_factor(step, warmup))
        self.step_count = 0

    @property
    def current_lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def zero_grad(self):
        self.optimizer.zero_grad(set_to_none=True)

    def step(self) -> float:
        """Apply one update; returns the learning rate it used"""
        for name, param in self.named:
            if param.grad is not None and not bool(torch.isfinite(param.grad).all()):
                raise NumericError(f"non-finite gradient for {name} at step {self.step_count}")

        lr = self.current_lr
        self.optimizer.step()
        self.scheduler.step()
        self.step_count += 1
        return lr


def optimizer_step(optimizer: WarmupAdamW, grads: Optional[Mapping[str, torch.Tensor]] = None) -> float:
    """Install grads (when given) into the parameters and take one step"""
    if grads is not None:
        for name, param in optimizer.named:
            if name in grads:
                grad = grads[name]
                if grad.shape != param.shape:
                    raise DataError(f"gradient for {name} has shape {tuple(grad.shape)}, expected {tuple(param.shape)}")
                param.grad = grad.detach().clone().to(param.dtype)
    return optimizer.step()


@dataclass(frozen=True)
class PretrainSettings:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-3
    warmup: int = 100
    weight_decay: float = 0.01
    p_omega: float = 0.15
    p_c: float = 0.2
    lambda_u: float = 1.0
    lambda_d: float = 1.0
    modes: tuple[str, ...] = ("MUG", "TMUG", "MMUG")
    seed: int = 0
    log_every: int = 50

    @classmethod
    def from_run_config(cls, cfg) -> "PretrainSettings":
        return cls(
            steps=cfg.steps,
            batch_size=cfg.batch_size,
            lr=cfg.lr,
            warmup=cfg.warmup,
            weight_decay=cfg.weight_decay,
            p_omega=cfg.p_omega,
            p_c=cfg.p_c,
            lambda_u=cfg.lambda_u,
            lambda_d=cfg.lambda_d,
            modes=tuple(cfg.loss_modes),
            seed=cfg.seed,
        )


@dataclass
class Batch:
    corrupted: list[CorruptedContext]
    utterances: list[tuple[int, ...]]
    plans: list[MaskPlan]


class Pretrainer:
    """
    Mini-batch pretraining over monolingual contexts and aligned pairs.

    Loss modes are scheduled round-robin, one mode per step. Every step
    combines the MUM loss over all utterances of the batch's (code-switched)
    contexts with the dialog loss of the step's mode.
    """

    def __init__(
        self,
        model: torch.nn.Module,
        settings: PretrainSettings,
        contexts: Sequence[Context] = (),
        pairs: Sequence[AlignedContextPair] = (),
    ):
        self.model = model
        self.settings = settings
        self.contexts = [ctx for ctx in contexts if ctx.is_monolingual] or [pair.base for pair in pairs]
        self.pairs = list(pairs)
        # TMUG and MMUG need an L slot to survive code-switching
        self.mixed_pairs = [pair for pair in self.pairs if len(pair.translated_slots) < len(pair.base)]
        self.modes = [LossMode(str(m).upper()) for m in settings.modes]

        if not self.modes:
            raise DataError("no loss modes selected")
        if not self.contexts:
            raise DataError("pretraining needs at least one monolingual context")
        if not self.pairs and any(m != LossMode.MUG for m in self.modes):
            raise DataError("TMUG/MMUG need aligned context pairs, none were given")
        if self.pairs and not self.mixed_pairs and any(m != LossMode.MUG for m in self.modes):
            raise DataError("TMUG/MMUG need aligned pairs with at least one untranslated slot")

        self.optimizer = WarmupAdamW(
            model.named_parameters(), lr=settings.lr, weight_decay=settings.weight_decay, warmup=settings.warmup
        )
        self.history: list[dict] = []

    def mode_for_step(self, step: int) -> LossMode:
        return self.modes[step % len(self.modes)]

    def pool_for(self, mode: LossMode) -> list:
        return self.contexts if mode == LossMode.MUG else self.mixed_pairs

    def make_batch(self, mode: LossMode, items: Sequence[Union[Context, AlignedContextPair]], rng) -> Batch:
        corrupted, utterances, plans = [], [], []
        for item in items:
            corrupted.append(corrupt_context(item, mode, self.settings.p_c, rng=rng))
            source = item
            if isinstance(item, AlignedContextPair):
                source = item.base if mode == LossMode.MUG else item.code_switched()
            for utt in source.utterances:
                utterances.append(utt.tokens)
                plans.append(plan_token_masks(utt.tokens, self.settings.p_omega, rng=rng))
        return Batch(corrupted, utterances, plans)

    def sample_batch(self, step: int) -> tuple[LossMode, Batch]:
        mode = self.mode_for_step(step)
        pool = self.pool_for(mode)
        pick = substream(self.settings.seed, "batch", step)
        size = self.settings.batch_size
        indices = pick.choice(len(pool), size=size, replace=len(pool) < size)
        items = [pool[int(i)] for i in indices]
        return mode, self.make_batch(mode, items, substream(self.settings.seed, "mask", step))

    def batch_loss(self, batch: Batch) -> LossValue:
        s = self.settings
        zero = torch.zeros((), dtype=self.model.dtype, device=self.model.device)

        u_part, u_count = zero, 0
        if s.lambda_u:
            u_part, u_count = batch_utterance_loss(self.model, batch.utterances, batch.plans)
        d_part, d_count = zero, 0
        if s.lambda_d:
            d_part, d_count = batch_context_loss(self.model, batch.corrupted)

        return total_loss(u_part, d_part, s.lambda_u, s.lambda_d, u_count + d_count)

    def train_step(self, step: int) -> dict:
        mode, batch = self.sample_batch(step)

        self.model.train()
        self.optimizer.zero_grad()
        loss = self.batch_loss(batch)
        loss.total.backward()
        lr = self.optimizer.step()

        record = {"step": step, "mode": mode.value, "lr": lr, **loss.as_floats()}
        self.history.append(record)
        if self.settings.log_every and step % self.settings.log_every == 0:
            logger.info(f"step {step} [{mode}] loss {record['total']:.4f} (u {record['utterance_part']:.4f}, d {record['dialog_part']:.4f})")
        return record

    def train(self, steps: Optional[int] = None) -> list[dict]:
        steps = self.settings.steps if steps is None else steps
        torch.manual_seed(derive_seed(self.settings.seed, "dropout"))

        start = self.optimizer.step_count
        for step in range(start, start + steps):
            self.train_step(step)
        self.model.eval()
        return self.history

    @torch.no_grad()
    def evaluate(self, mode: "LossMode | str" = LossMode.MUG, n: int = 64, name: str = "eval") -> LossValue:
        """Loss on a fixed, seeded set of corruptions (identical across calls)"""
        mode = LossMode(str(mode).upper())
        pool = self.pool_for(mode)
        items = [pool[i % len(pool)] for i in range(n)]
        batch = self.make_batch(mode, items, substream(self.settings.seed, name))

        was_training = self.model.training
        self.model.eval()
        try:
            loss = self.batch_loss(batch)
        finally:
            self.model.train(was_training)
        return LossValue(*(float(v) for v in (loss.total, loss.utterance_part, loss.dialog_part)), loss.token_count)
