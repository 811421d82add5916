# tasks/experiments.py
import logging
from dataclasses import dataclass, replace
from statistics import mean
from typing import Any, Sequence

from core.seeding import derive_seed
from corpus.shards import HELDOUT, split_for_movie
from corpus.synthetic import SyntheticCorpusSpec, generate_synthetic_corpus, synthetic_contexts, synthetic_pairs
from model.config import ModelConfig
from model.hierarchical import HierarchicalModel
from model.training import PretrainSettings, Pretrainer
from tasks.instances import UtterancePool, make_ii
from tasks.metrics import compute_metrics
from tasks.scoring import FineTuneSettings, fine_tune, labels_of, model_predictions
from vocab.vocabulary import build_vocab

logger = logging.getLogger(__name__)

MUG_ONLY = ("MUG",)
CODE_SWITCHED = ("MUG", "TMUG", "MMUG")


@dataclass(frozen=True)
class CodeSwitchSettings:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    corpus: SyntheticCorpusSpec = SyntheticCorpusSpec(n_movies=24, conversations_per_movie=6)
    context_size: int = 5
    dim: int = 32
    heads: int = 2
    pretrain_steps: int = 300
    batch_size: int = 16
    lr: float = 3e-3
    warmup: int = 10
    p_lprime: float = 0.4
    heldout_fraction: float = 0.25
    finetune: FineTuneSettings = FineTuneSettings(steps=150, lrs=(1e-3,))


def _mii_accuracy(modes: Sequence[str], seed: int, settings: CodeSwitchSettings) -> float:
    corpus = generate_synthetic_corpus(replace(settings.corpus, seed=seed))
    vocab = build_vocab(corpus.texts(), max_size=10_000)
    T = settings.context_size

    contexts = synthetic_contexts(corpus, vocab, T=T)
    pairs = synthetic_pairs(corpus, vocab, T=T)
    heldout = {m for m in corpus.movie_ids if split_for_movie(m, settings.heldout_fraction, seed) == HELDOUT}

    train_pairs = [p for p in pairs if p.base.movie_id not in heldout]
    test_pairs = [p for p in pairs if p.base.movie_id in heldout]
    train_contexts = [c for c in contexts if c.movie_id not in heldout]

    config = ModelConfig.for_vocab(vocab, dim=settings.dim, heads=settings.heads, context_size=T, dropout=0.0)
    model = HierarchicalModel(config, seed=derive_seed(seed, "model"))
    pretrainer = Pretrainer(
        model,
        PretrainSettings(
            steps=settings.pretrain_steps,
            batch_size=settings.batch_size,
            lr=settings.lr,
            warmup=settings.warmup,
            weight_decay=0.0,
            modes=tuple(modes),
            seed=seed,
            log_every=0,
        ),
        train_contexts,
        train_pairs,
    )
    pretrainer.train()

    half = len(train_pairs) // 2
    pool = UtterancePool.from_items(pairs)
    train_ii = make_ii(train_pairs[:half], pool, settings.p_lprime, seed=derive_seed(seed, "mii-train"))
    valid_ii = make_ii(train_pairs[half:], pool, settings.p_lprime, seed=derive_seed(seed, "mii-valid"))
    test_ii = make_ii(test_pairs, pool, settings.p_lprime, seed=derive_seed(seed, "mii-test"))

    tuned, _ = fine_tune(model, train_ii, valid_ii, replace(settings.finetune, seed=seed))
    return compute_metrics(model_predictions(tuned, test_ii), labels_of(test_ii)).accuracy


def run_code_switch_experiment(settings: CodeSwitchSettings = CodeSwitchSettings()) -> dict[str, Any]:
    """
    Pretrain MUG-only and MUG+TMUG+MMUG models of equal size and step budget,
    fine-tune both on mII and compare held-out accuracy per seed.
    """
    results: dict[str, list[float]] = {"mug_only": [], "code_switched": []}
    for seed in settings.seeds:
        results["mug_only"].append(_mii_accuracy(MUG_ONLY, seed, settings))
        results["code_switched"].append(_mii_accuracy(CODE_SWITCHED, seed, settings))
        logger.info(
            f"seed {seed}: mII accuracy MUG {results['mug_only'][-1]:.3f}, "
            f"MUG+TMUG+MMUG {results['code_switched'][-1]:.3f}"
        )

    return {
        "seeds": list(settings.seeds),
        "mug_only": results["mug_only"],
        "code_switched": results["code_switched"],
        "mean_mug_only": mean(results["mug_only"]),
        "mean_code_switched": mean(results["code_switched"]),
    }
