# model/layers.py
"""Pre-LN transformer blocks shared by the utterance, dialog and decoder stacks."""
import math
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F


def attention_weights(scores: torch.Tensor) -> torch.Tensor:
    """Softmax over the key axis"""
    return torch.softmax(scores, dim=-1)


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, _ = x.shape
        return x.view(batch, length, self.heads, self.head_dim).transpose(1, 2)

    def forward(
        self,
        x: torch.Tensor,
        memory: Optional[torch.Tensor] = None,
        key_padding_mask: Optional[torch.Tensor] = None,
        causal: bool = False,
    ) -> torch.Tensor:
        """
        x: [batch, q_len, dim]; memory: [batch, k_len, dim] (defaults to x).
        key_padding_mask: [batch, k_len], True where the key is padding.
        """
        source = x if memory is None else memory
        q, k, v = self._split(self.q_proj(x)), self._split(self.k_proj(source)), self._split(self.v_proj(source))

        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if key_padding_mask is not None:
            scores = scores.masked_fill(key_padding_mask[:, None, None, :], float("-inf"))
        if causal:
            q_len, k_len = scores.shape[-2:]
            future = torch.ones(q_len, k_len, dtype=torch.bool, device=scores.device).triu(1)
            scores = scores.masked_fill(future, float("-inf"))

        weights = self.dropout(attention_weights(scores))
        out = (weights @ v).transpose(1, 2).reshape(x.shape[0], x.shape[1], -1)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, dim: int, inner_dim: int, dropout: float = 0.0):
        super().__init__()
        self.up = nn.Linear(dim, inner_dim)
        self.down = nn.Linear(inner_dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.dropout(self.down(F.gelu(self.up(x))))


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, inner_dim: int, dropout: float = 0.0):
        super().__init__()
        self.attn_norm = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, dropout)
        self.ffn_norm = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, inner_dim, dropout)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, padding_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = x + self.dropout(self.attn(self.attn_norm(x), key_padding_mask=padding_mask))
        return x + self.ffn(self.ffn_norm(x))


class DecoderLayer(nn.Module):
    """Causal self-attention, then cross-attention to the dialog states"""

    def __init__(self, dim: int, heads: int, inner_dim: int, dropout: float = 0.0):
        super().__init__()
        self.self_norm = nn.LayerNorm(dim)
        self.self_attn = MultiHeadAttention(dim, heads, dropout)
        self.cross_norm = nn.LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, heads, dropout)
        self.ffn_norm = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, inner_dim, dropout)
        self.dropout = nn.Dropout(dropout)

    def forward(
        self,
        x: torch.Tensor,
        memory: torch.Tensor,
        padding_mask: Optional[torch.Tensor] = None,
        memory_padding_mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        x = x + self.dropout(self.self_attn(self.self_norm(x), key_padding_mask=padding_mask, causal=True))
        x = x + self.dropout(
            self.cross_attn(self.cross_norm(x), memory=memory, key_padding_mask=memory_padding_mask)
        )
        return x + self.ffn(self.ffn_norm(x))
