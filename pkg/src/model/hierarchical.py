# model/hierarchical.py
import logging
from typing import Optional, Sequence

import torch
import torch.nn as nn

from core.errors import DataError
from core.seeding import torch_generator
from corpus.types import Context, LanguageTag
from model.config import ModelConfig
from model.layers import DecoderLayer, EncoderLayer
from vocab.vocabulary import PAD

logger = logging.getLogger(__name__)

INIT_STD = 0.02


def pad_sequences(
    sequences: Sequence[Sequence[int]], pad: int = PAD, device: Optional[torch.device] = None
) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad to the longest sequence; returns (ids [B, L], padding mask [B, L])"""
    if not sequences:
        raise DataError("cannot pad an empty batch")
    longest = max(len(s) for s in sequences)
    ids = torch.full((len(sequences), longest), pad, dtype=torch.long, device=device)
    mask = torch.ones((len(sequences), longest), dtype=torch.bool, device=device)
    for row, seq in enumerate(sequences):
        if seq:
            ids[row, : len(seq)] = torch.as_tensor(list(seq), dtype=torch.long)
            mask[row, : len(seq)] = False
    return ids, mask


def masked_mean(states: torch.Tensor, padding_mask: Optional[torch.Tensor]) -> torch.Tensor:
    if padding_mask is None:
        return states.mean(dim=-2)
    keep = (~padding_mask).unsqueeze(-1).to(states.dtype)
    return (states * keep).sum(dim=-2) / keep.sum(dim=-2).clamp(min=1.0)


class HierarchicalModel(nn.Module):
    """
    Token-level encoder f^u, dialog-level encoder f^d and a shared decoder.

    f^u reads one utterance and mean-pools its final states into the utterance
    embedding. f^d reads the T utterance embeddings plus an utterance-position
    embedding and mean-pools into the context embedding. The decoder generates
    one masked utterance: its first input is the target-language token, every
    input also carries the masked slot's position embedding, and it
    cross-attends to the f^d states of the corrupted context.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        dim, heads, inner, p = config.dim, config.heads, config.inner_dim, config.dropout

        self.token_embedding = nn.Embedding(config.vocab_size, dim)
        self.token_position = nn.Embedding(config.max_utt_tokens, dim)
        self.utterance_position = nn.Embedding(config.context_size, dim)
        self.decoder_position = nn.Embedding(config.max_utt_tokens, dim)
        self.embedding_dropout = nn.Dropout(p)

        self.utterance_layers = nn.ModuleList(EncoderLayer(dim, heads, inner, p) for _ in range(config.layers_u))
        self.utterance_norm = nn.LayerNorm(dim)
        self.dialog_layers = nn.ModuleList(EncoderLayer(dim, heads, inner, p) for _ in range(config.layers_d))
        self.dialog_norm = nn.LayerNorm(dim)
        self.decoder_layers = nn.ModuleList(DecoderLayer(dim, heads, inner, p) for _ in range(config.layers_dec))
        self.decoder_norm = nn.LayerNorm(dim)

        self.output_projection = None if config.tie_embeddings else nn.Linear(dim, config.vocab_size, bias=False)
        self.output_bias = nn.Parameter(torch.zeros(config.vocab_size))

        # task heads, fine-tuned downstream
        self.ii_head = nn.Sequential(nn.Linear(dim, dim), nn.GELU(), nn.Linear(dim, config.context_size))
        self.nur_head = nn.Sequential(nn.Linear(2 * dim, dim), nn.GELU(), nn.Linear(dim, 1))

        self.reset_parameters(torch_generator(seed, "init"))

    @torch.no_grad()
    def reset_parameters(self, generator: torch.Generator):
        for module in self.modules():
            if isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
                module.bias.zero_()
            elif isinstance(module, nn.Linear):
                module.weight.normal_(0.0, INIT_STD, generator=generator)
                if module.bias is not None:
                    module.bias.zero_()
            elif isinstance(module, nn.Embedding):
                module.weight.normal_(0.0, INIT_STD, generator=generator)
        self.output_bias.zero_()

    @property
    def dtype(self) -> torch.dtype:
        return self.output_bias.dtype

    @property
    def device(self) -> torch.device:
        return self.output_bias.device

    def language_token(self, lang: "str | LanguageTag") -> int:
        return self.config.language_token(lang)

    def _check_ids(self, ids: torch.Tensor, padding_mask: torch.Tensor):
        if ids.shape[-1] > self.config.max_utt_tokens:
            raise DataError(f"sequence of {ids.shape[-1]} tokens exceeds max_utt_tokens={self.config.max_utt_tokens}")
        if bool((padding_mask.all(dim=-1)).any()):
            raise DataError("empty utterance")
        real = ids[~padding_mask]
        if real.numel() and (int(real.min()) < 0 or int(real.max()) >= self.config.vocab_size):
            raise DataError(f"token id outside vocabulary of size {self.config.vocab_size}")

    def output_logits(self, states: torch.Tensor) -> torch.Tensor:
        if self.output_projection is None:
            return states @ self.token_embedding.weight.T + self.output_bias
        return self.output_projection(states) + self.output_bias

    # batched paths

    def encode_utterances(
        self, ids: torch.Tensor, padding_mask: Optional[torch.Tensor] = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """f^u over [B, L] token ids -> (pooled [B, dim], token states [B, L, dim])"""
        if padding_mask is None:
            padding_mask = torch.zeros_like(ids, dtype=torch.bool)
        self._check_ids(ids, padding_mask)

        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.embedding_dropout(self.token_embedding(ids) + self.token_position(positions))
        for layer in self.utterance_layers:
            x = layer(x, padding_mask)
        states = self.utterance_norm(x)
        return masked_mean(states, padding_mask), states

    def utterance_token_logits(self, ids: torch.Tensor, padding_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """MUM head: per-token vocabulary logits [B, L, V]"""
        _, states = self.encode_utterances(ids, padding_mask)
        return self.output_logits(states)

    def encode_dialogs(self, embeddings: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """f^d over [B, n, dim] utterance embeddings, n <= T"""
        n = embeddings.shape[1]
        if not 1 <= n <= self.config.context_size:
            raise DataError(f"dialog encoder takes 1..{self.config.context_size} utterances, got {n}")

        positions = torch.arange(n, device=embeddings.device)
        x = self.embedding_dropout(embeddings + self.utterance_position(positions))
        for layer in self.dialog_layers:
            x = layer(x)
        states = self.dialog_norm(x)
        return states.mean(dim=1), states

    def encode_contexts(self, contexts: Sequence[Context]) -> tuple[torch.Tensor, torch.Tensor]:
        """Both encoders over a batch of equally long contexts"""
        if not contexts:
            raise DataError("empty context batch")
        n = len(contexts[0])
        if any(len(ctx) != n for ctx in contexts):
            raise DataError("contexts in one batch must have the same length")

        ids, mask = pad_sequences(
            [utt.tokens for ctx in contexts for utt in ctx.utterances], device=self.device
        )
        pooled, _ = self.encode_utterances(ids, mask)
        return self.encode_dialogs(pooled.view(len(contexts), n, -1))

    def decode(
        self,
        memory: torch.Tensor,
        inputs: torch.Tensor,
        slots: torch.Tensor,
        padding_mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        """
        Teacher-forced decoder logits [B, n, V].

        inputs[b] is the language token followed by the target prefix; slots[b]
        is the masked position being generated from memory[b].
        """
        if inputs.shape[1] > self.config.max_utt_tokens:
            raise DataError(f"decoder input of {inputs.shape[1]} steps exceeds max_utt_tokens")
        positions = torch.arange(inputs.shape[1], device=inputs.device)
        x = (
            self.token_embedding(inputs)
            + self.decoder_position(positions)
            + self.utterance_position(slots).unsqueeze(1)
        )
        x = self.embedding_dropout(x)
        for layer in self.decoder_layers:
            x = layer(x, memory, padding_mask)
        return self.output_logits(self.decoder_norm(x))

    def ii_logits(self, context_embeddings: torch.Tensor) -> torch.Tensor:
        return self.ii_head(context_embeddings)

    def nur_scores(self, context_embeddings: torch.Tensor, candidate_embeddings: torch.Tensor) -> torch.Tensor:
        return self.nur_head(torch.cat([context_embeddings, candidate_embeddings], dim=-1)).squeeze(-1)

    # single-instance operations

    def encode_utterance(self, tokens: Sequence[int]) -> tuple[torch.Tensor, torch.Tensor]:
        """(utterance embedding [dim], token states [L, dim])"""
        if len(tokens) < 1:
            raise DataError("empty utterance")
        ids, mask = pad_sequences([tokens], device=self.device)
        pooled, states = self.encode_utterances(ids, mask)
        return pooled[0], states[0]

    def encode_context(self, embeddings: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(context embedding [dim], utterance states [T, dim]) from exactly T embeddings"""
        if embeddings.dim() != 2 or embeddings.shape[0] != self.config.context_size:
            raise DataError(f"expected {self.config.context_size} utterance embeddings, got {tuple(embeddings.shape)}")
        pooled, states = self.encode_dialogs(embeddings.unsqueeze(0))
        return pooled[0], states[0]

    def decode_masked_utterance(
        self, states: torch.Tensor, lang_token: int, targets: Sequence[int], slot: int = 0
    ) -> torch.Tensor:
        """Per-step logits [len(targets), V]; step j sees the language token and targets[:j]"""
        if len(targets) < 1:
            raise DataError("empty decoder target")
        inputs = torch.tensor([[lang_token, *targets[:-1]]], dtype=torch.long, device=self.device)
        slots = torch.tensor([slot], dtype=torch.long, device=self.device)
        return self.decode(states.unsqueeze(0), inputs, slots)[0]

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
