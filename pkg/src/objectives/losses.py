# objectives/losses.py
import math
from dataclasses import dataclass
from typing import Any, Sequence

import torch
import torch.nn.functional as F

from core.errors import DataError, NumericError
from model.hierarchical import pad_sequences
from objectives.masking import CorruptedContext, MaskPlan


@dataclass(frozen=True)
class LossValue:
    """total = lambda_u * utterance_part + lambda_d * dialog_part, in nats per target token"""

    total: Any
    utterance_part: Any
    dialog_part: Any
    token_count: int = 0

    def as_floats(self) -> dict[str, float]:
        return {
            "total": float(self.total),
            "utterance_part": float(self.utterance_part),
            "dialog_part": float(self.dialog_part),
            "token_count": self.token_count,
        }


def masked_token_nll(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Summed -log softmax(logits)[target] over rows"""
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), reduction="sum")


def batch_utterance_loss(model, utterances: Sequence[Sequence[int]], plans: Sequence[MaskPlan]) -> tuple[torch.Tensor, int]:
    """Mean MUM loss over every masked token of the batch, and that token count"""
    if len(utterances) != len(plans) or not plans:
        raise DataError("one mask plan per utterance, and at least one utterance")

    ids, mask = pad_sequences([plan.apply(utt) for utt, plan in zip(utterances, plans)], device=model.device)
    logits = model.utterance_token_logits(ids, mask)

    rows = [(b, pos) for b, plan in enumerate(plans) for pos in plan.masked_token_positions]
    targets = torch.tensor([t for plan in plans for t in plan.target_tokens], dtype=torch.long, device=logits.device)
    batch_idx = torch.tensor([b for b, _ in rows], dtype=torch.long, device=logits.device)
    pos_idx = torch.tensor([p for _, p in rows], dtype=torch.long, device=logits.device)

    count = len(rows)
    return masked_token_nll(logits[batch_idx, pos_idx], targets) / count, count


def batch_context_loss(model, corrupted: Sequence[CorruptedContext]) -> tuple[torch.Tensor, int]:
    """
    Teacher-forced dialog loss, averaged over every target token of the batch.

    Each masked slot is one decoder sequence: the language token of its target
    followed by the target without its last token.
    """
    if not corrupted:
        raise DataError("empty corrupted-context batch")

    _, states = model.encode_contexts([cc.context for cc in corrupted])

    memory_rows, slots, inputs, outputs = [], [], [], []
    for b, cc in enumerate(corrupted):
        for pos, target in zip(cc.masked_positions, cc.targets):
            memory_rows.append(b)
            slots.append(pos)
            inputs.append([model.language_token(target.lang), *target.tokens[:-1]])
            outputs.append(list(target.tokens))

    device = states.device
    input_ids, padding = pad_sequences(inputs, device=device)
    output_ids, _ = pad_sequences(outputs, device=device)
    memory = states[torch.tensor(memory_rows, dtype=torch.long, device=device)]
    logits = model.decode(memory, input_ids, torch.tensor(slots, dtype=torch.long, device=device), padding)

    keep = ~padding
    count = int(keep.sum())
    return masked_token_nll(logits[keep], output_ids[keep]) / count, count


def utterance_loss(model, utt: Sequence[int], plan: MaskPlan) -> torch.Tensor:
    """-(1/|M|) sum over masked positions of log p(token | masked utterance)"""
    loss, _ = batch_utterance_loss(model, [utt], [plan])
    return loss


def context_loss(model, cc: CorruptedContext) -> torch.Tensor:
    loss, _ = batch_context_loss(model, [cc])
    return loss


def _finite(name: str, value: Any) -> float:
    number = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
    if not math.isfinite(number):
        raise NumericError(f"{name} is not finite: {number}")
    return number


def total_loss(
    u_part: Any,
    d_part: Any,
    lambda_u: float = 1.0,
    lambda_d: float = 1.0,
    token_count: int = 0,
) -> LossValue:
    """Weighted hierarchical loss; parts may be floats or graph-carrying tensors"""
    _finite("utterance loss", u_part)
    _finite("dialog loss", d_part)
    total = lambda_u * u_part + lambda_d * d_part
    _finite("total loss", total)
    return LossValue(total, u_part, d_part, token_count)
