# stages/model_stages.py
from pathlib import Path
from typing import Any

from core.errors import DataError, NumericError
from core.seeding import derive_seed, substream
from corpus.shards import TRAIN, read_context_shard
from corpus.types import AlignedContextPair, Context, LanguageTag, TokenizedUtterance
from model.checkpoint import save_checkpoint
from model.config import ModelConfig
from model.gradcheck import gradient_check, mug_loss_fn, randomize_parameters
from model.hierarchical import HierarchicalModel
from model.training import PretrainSettings, Pretrainer
from stages.base import BaseStage
from stages.corpus_stages import SHARDS_DIR, VOCAB_FILE
from utils.jsonl import write_json, write_jsonl
from vocab.vocabulary import Vocabulary

CHECKPOINT_FILE = "model.ckpt"
GRADCHECK_TOLERANCE = 1e-4


def checkpoint_path(stage: BaseStage) -> Path:
    return Path(stage.config.checkpoint) if stage.config.checkpoint else stage.output_dir / CHECKPOINT_FILE


class PretrainStage(BaseStage):
    name = "pretrain"
    help = "pretrain the hierarchical encoder on the train shards"

    def _setup(self):
        self.vocab = Vocabulary.load(self.record_input(self.output_dir / VOCAB_FILE))
        shards = self.require(self.output_dir / SHARDS_DIR, "shards (run `align` first)")

        self.contexts: list[Context] = []
        self.pairs: list[AlignedContextPair] = []
        for path in sorted(shards.glob(f"{TRAIN}.*.jsonl")):
            for item in read_context_shard(self.record_input(path)):
                if isinstance(item, AlignedContextPair):
                    self.pairs.append(item)
                else:
                    self.contexts.append(item)

        if not self.contexts and not self.pairs:
            raise DataError(f"no training contexts in {shards}")

    def _run(self) -> dict[str, Any]:
        cfg = self.config
        config = ModelConfig.for_vocab(
            self.vocab,
            dim=cfg.dim,
            heads=cfg.heads,
            layers_u=cfg.layers_u,
            layers_d=cfg.layers_d,
            layers_dec=cfg.layers_dec,
            max_utt_tokens=cfg.max_utt_tokens,
            context_size=cfg.context_size,
            dropout=cfg.dropout,
            tie_embeddings=cfg.tie_embeddings,
        )
        model = HierarchicalModel(config, seed=derive_seed(cfg.seed, "model"))
        self.logger.info(
            f"{model.parameter_count()} parameters, {len(self.contexts)} contexts, {len(self.pairs)} aligned pairs"
        )

        pretrainer = Pretrainer(model, PretrainSettings.from_run_config(cfg), self.contexts, self.pairs)
        history = pretrainer.train()

        save_checkpoint(model, self.record_output(checkpoint_path(self)))
        write_jsonl(self.record_output(self.output_dir / "pretrain" / "history.jsonl"), history)
        return {"steps": len(history), "final_loss": history[-1]["total"] if history else None}


def gradcheck_contexts(n_contexts: int, T: int, vocab_size: int, first_regular: int, seed: int) -> list[Context]:
    """Random small contexts over regular ids, for the finite-difference check"""
    rng = substream(seed, "gradcheck-data")
    contexts = []
    for _ in range(n_contexts):
        utterances = []
        for _ in range(T):
            length = int(rng.integers(2, 5))
            tokens = tuple(int(t) for t in rng.integers(first_regular, vocab_size, size=length))
            utterances.append(TokenizedUtterance(tokens, LanguageTag.EN))
        contexts.append(Context(tuple(utterances), "gradcheck"))
    return contexts


class GradCheckStage(BaseStage):
    name = "grad-check"
    help = "compare analytic gradients with central finite differences on a tiny float64 model"

    @classmethod
    def add_arguments(cls, parser):
        parser.add_argument("--coords", type=int, default=200, help="number of sampled parameter coordinates")
        parser.add_argument("--epsilon", type=float, default=1e-5, help="finite difference step")

    def _setup(self):
        self.n_coords = int(self.options.get("coords", 200))
        self.epsilon = float(self.options.get("epsilon", 1e-5))
        if self.n_coords < 1 or self.epsilon <= 0:
            raise DataError("--coords must be >= 1 and --epsilon > 0")

    def _run(self) -> dict[str, Any]:
        cfg = self.config
        # |V| = 11: the five specials, two language tokens, four regular ids
        config = ModelConfig(
            vocab_size=11, dim=8, heads=2, layers_u=1, layers_d=1, layers_dec=1,
            max_utt_tokens=8, context_size=3, dropout=0.0, lang_ids={"en": 5, "fr": 6},
        )
        model = HierarchicalModel(config, seed=derive_seed(cfg.seed, "model")).double()
        randomize_parameters(model, seed=cfg.seed)

        contexts = gradcheck_contexts(4, config.context_size, config.vocab_size, max(config.lang_ids.values()) + 1, cfg.seed)
        loss_fn = mug_loss_fn(model, contexts, cfg.p_omega, cfg.p_c, cfg.lambda_u, cfg.lambda_d, seed=cfg.seed)
        result = gradient_check(model, loss_fn, epsilon=self.epsilon, n_coords=self.n_coords, seed=cfg.seed)

        report = {
            "max_rel_error": result.max_rel_error,
            "n_coords": result.n_coords,
            "worst_parameter": result.worst_parameter,
            "worst_analytic": result.worst_analytic,
            "worst_numeric": result.worst_numeric,
            "tolerance": GRADCHECK_TOLERANCE,
            "passed": result.max_rel_error < GRADCHECK_TOLERANCE,
        }
        write_json(self.record_output(self.output_dir / "gradcheck.json"), report)

        if not report["passed"]:
            raise NumericError(
                f"gradient check failed: relative error {result.max_rel_error:.3e} at {result.worst_parameter}"
            )
        return report
