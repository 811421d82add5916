# tasks/scoring.py
import copy
import logging
from dataclasses import dataclass
from typing import Sequence, Union

import torch
import torch.nn.functional as F

from core.errors import DataError
from core.seeding import derive_seed, substream
from model.hierarchical import pad_sequences
from model.training import WarmupAdamW
from tasks.instances import InconsistencyInstance, RetrievalInstance

logger = logging.getLogger(__name__)

Instance = Union[InconsistencyInstance, RetrievalInstance]


def rank_candidates(scores: Sequence[float]) -> list[int]:
    """Candidate indices by descending score, ties in index order"""
    return sorted(range(len(scores)), key=lambda i: (-float(scores[i]), i))


class RandomScorer:
    """Seeded chance-level baseline"""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def predict_ii(self, instance: InconsistencyInstance, ordinal: int) -> int:
        return int(substream(self.seed, "random-ii", ordinal).integers(len(instance.context)))

    def rank_nur(self, instance: RetrievalInstance, ordinal: int) -> list[int]:
        scores = substream(self.seed, "random-nur", ordinal).random(len(instance.candidates))
        return rank_candidates(scores)


def ii_logits(model, instances: Sequence[InconsistencyInstance]) -> torch.Tensor:
    pooled, _ = model.encode_contexts([inst.context for inst in instances])
    return model.ii_logits(pooled)


def nur_logits(model, instances: Sequence[RetrievalInstance]) -> torch.Tensor:
    """[B, D+1] head scores; all instances need the same candidate count"""
    counts = {len(inst.candidates) for inst in instances}
    if len(counts) != 1:
        raise DataError("NUR instances in one batch must have the same number of candidates")
    n_candidates = counts.pop()

    pooled, _ = model.encode_contexts([inst.context for inst in instances])
    ids, mask = pad_sequences([c.tokens for inst in instances for c in inst.candidates], device=model.device)
    candidates, _ = model.encode_utterances(ids, mask)
    contexts = pooled.repeat_interleave(n_candidates, dim=0)
    return model.nur_scores(contexts, candidates).view(len(instances), n_candidates)


@torch.no_grad()
def score_ii(model, instance: InconsistencyInstance) -> int:
    """Predicted replaced index; ties go to the lowest index"""
    return score_ii_batch(model, [instance])[0]


@torch.no_grad()
def score_nur(model, instance: RetrievalInstance) -> list[int]:
    return score_nur_batch(model, [instance])[0]


def _batches(items: Sequence, size: int):
    for start in range(0, len(items), size):
        yield items[start : start + size]


@torch.no_grad()
def score_ii_batch(model, instances: Sequence[InconsistencyInstance], batch_size: int = 128) -> list[int]:
    model.eval()
    predictions = []
    for batch in _batches(instances, batch_size):
        # torch.argmax returns the first maximal index
        predictions.extend(int(i) for i in torch.argmax(ii_logits(model, batch), dim=-1))
    return predictions


@torch.no_grad()
def score_nur_batch(model, instances: Sequence[RetrievalInstance], batch_size: int = 64) -> list[list[int]]:
    model.eval()
    rankings = []
    for batch in _batches(instances, batch_size):
        for row in nur_logits(model, batch).cpu().numpy():
            rankings.append(rank_candidates(row))
    return rankings


def task_loss(model, instances: Sequence[Instance]) -> torch.Tensor:
    """Cross-entropy over T classes for II, binary cross-entropy per candidate for NUR"""
    device = model.device
    if isinstance(instances[0], InconsistencyInstance):
        labels = torch.tensor([inst.label for inst in instances], dtype=torch.long, device=device)
        return F.cross_entropy(ii_logits(model, instances), labels)

    logits = nur_logits(model, instances)
    targets = torch.zeros_like(logits)
    for row, inst in enumerate(instances):
        targets[row, inst.label] = 1.0
    return F.binary_cross_entropy_with_logits(logits, targets)


@dataclass(frozen=True)
class FineTuneSettings:
    steps: int = 300
    batch_size: int = 16
    lrs: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    weight_decay: float = 0.0
    warmup: int = 10
    seed: int = 0


def _train_copy(model, train: Sequence[Instance], lr: float, settings: FineTuneSettings):
    tuned = copy.deepcopy(model)
    optimizer = WarmupAdamW(tuned.named_parameters(), lr=lr, weight_decay=settings.weight_decay, warmup=settings.warmup)
    torch.manual_seed(derive_seed(settings.seed, "finetune-dropout"))

    tuned.train()
    for step in range(settings.steps):
        rng = substream(settings.seed, "finetune", step)
        picks = rng.choice(len(train), size=settings.batch_size, replace=len(train) < settings.batch_size)
        optimizer.zero_grad()
        loss = task_loss(tuned, [train[int(i)] for i in picks])
        loss.backward()
        optimizer.step()
    tuned.eval()
    return tuned


@torch.no_grad()
def validation_loss(model, instances: Sequence[Instance], batch_size: int = 128) -> float:
    model.eval()
    total, count = 0.0, 0
    for batch in _batches(instances, batch_size):
        total += float(task_loss(model, batch)) * len(batch)
        count += len(batch)
    return total / count


def fine_tune(model, train: Sequence[Instance], valid: Sequence[Instance], settings: FineTuneSettings = FineTuneSettings()):
    """
    Fine-tune encoder and task head once per learning rate in the grid and
    keep the copy with the lowest validation loss. The input model is left
    untouched. Returns (model, {lr: validation loss}).
    """
    if not train or not valid:
        raise DataError("fine-tuning needs training and validation instances")
    if len({type(inst) for inst in [*train, *valid]}) != 1:
        raise DataError("fine-tuning instances must all belong to one task")

    best, best_loss, losses = None, float("inf"), {}
    for lr in settings.lrs:
        tuned = _train_copy(model, train, lr, settings)
        loss = validation_loss(tuned, valid)
        losses[lr] = loss
        logger.info(f"fine-tune lr={lr:g}: validation loss {loss:.4f}")
        if loss < best_loss:
            best, best_loss = tuned, loss

    if best is None:
        raise DataError("every fine-tuning run produced a non-finite validation loss")
    return best, losses


def random_predictions(instances: Sequence[Instance], seed: int = 0) -> list:
    scorer = RandomScorer(seed)
    return [
        scorer.predict_ii(inst, k) if isinstance(inst, InconsistencyInstance) else scorer.rank_nur(inst, k)
        for k, inst in enumerate(instances)
    ]


def model_predictions(model, instances: Sequence[Instance]) -> list:
    if not instances:
        return []
    if isinstance(instances[0], InconsistencyInstance):
        return score_ii_batch(model, instances)
    return score_nur_batch(model, instances)


def labels_of(instances: Sequence[Instance]) -> list[int]:
    return [inst.label for inst in instances]
