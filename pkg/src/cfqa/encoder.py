"""Shared representation stack for documents and questions.

Two layers: an input embedding layer (word embedding concatenated with a
max-pooled character embedding) and an encoder block (projection, optional
sinusoidal positions, one convolution, multi-head self-attention, a
position-wise feed-forward), all through one parameter set regardless of
whether the input is a document or the question.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .nn import feed_forward, linear
from .params import ParamStore
from .tensor import Tensor


@dataclass
class EncoderConfig:
    d1: int = 300          # word embedding width
    d2: int = 200          # char embedding width
    d_model: int = 128
    k_s: int = 7
    d_f: int = 128
    n_heads: int = 4
    use_positional: bool = True
    use_residual: bool = True

    def validate(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.k_s % 2 == 0:
            raise ConfigError(f"conv kernel size must be odd, got {self.k_s}")
        if self.d_f != self.d_model:
            raise ConfigError(
                f"conv filter count {self.d_f} must equal d_model {self.d_model} "
                "so the attention layer sees a constant width")


@dataclass
class Encoded:
    """Sequence representation plus its padding mask (True = real token)."""
    matrix: Tensor            # [seq_len x d_model]
    mask: np.ndarray          # bool [seq_len]

    @property
    def seq_len(self) -> int:
        return self.matrix.data.shape[0]


def create_encoder_params(store: ParamStore, cfg: EncoderConfig,
                          n_words: int, n_chars: int,
                          rng: np.random.Generator,
                          word_init: Optional[np.ndarray] = None) -> None:
    cfg.validate()
    if word_init is not None:
        store.create("emb.word", (n_words, cfg.d1), rng, init=lambda s: word_init)
    else:
        store.create("emb.word", (n_words, cfg.d1), rng, fan_in=cfg.d1)
    store.create("emb.char", (n_chars, cfg.d2), rng, fan_in=cfg.d2)
    _create_block(store, "enc", cfg, rng,
                  proj_in=cfg.d1 + cfg.d2)


def _create_block(store: ParamStore, prefix: str, cfg: EncoderConfig,
                  rng: np.random.Generator, proj_in: Optional[int] = None) -> None:
    """One conv/attention/feed-forward block, optionally with an input projection."""
    d = cfg.d_model
    if proj_in is not None:
        store.create(f"{prefix}.proj_w", (proj_in, d), rng, fan_in=proj_in)
        store.create(f"{prefix}.proj_b", (d,), rng, fan_in=0)
    store.create(f"{prefix}.conv_w", (cfg.k_s, d, cfg.d_f), rng, fan_in=cfg.k_s * d)
    store.create(f"{prefix}.conv_b", (cfg.d_f,), rng, fan_in=0)
    for name in ("attn_q", "attn_k", "attn_v", "attn_o"):
        store.create(f"{prefix}.{name}", (d, d), rng, fan_in=d)
    store.create(f"{prefix}.ff_w1", (d, d), rng, fan_in=d)
    store.create(f"{prefix}.ff_b1", (d,), rng, fan_in=0)
    store.create(f"{prefix}.ff_w2", (d, d), rng, fan_in=d)
    store.create(f"{prefix}.ff_b2", (d,), rng, fan_in=0)


def embed_tokens(tokens, char_ids, store: ParamStore) -> Tensor:
    """Per-token vectors: word embedding concat char-embedding row max.

    ``char_ids`` is [n x w_c] with PAD entries excluded from the max.
    """
    word_vecs = T.embedding(store["emb.word"], np.asarray(tokens, dtype=np.int64))
    chars = np.asarray(char_ids, dtype=np.int64)
    char_vecs = T.embedding(store["emb.char"], chars)      # [n x w_c x d2]
    pad_mask = (chars != 0).astype(char_vecs.data.dtype)   # PAD id is 0
    penalty = Tensor((pad_mask - 1.0)[:, :, None] * 1e9)
    char_max = T.reduce_max(T.add(char_vecs, penalty), axis=1)
    return T.concat([word_vecs, char_max], axis=1)


def sinusoidal_positions(n: int, d: int, dtype) -> np.ndarray:
    pos = np.arange(n, dtype=np.float64)[:, None]
    dim = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2 * (dim // 2)) / d)
    enc = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(dtype)


def self_attention(x: Tensor, mask: np.ndarray, n_heads: int,
                   store: ParamStore, prefix: str,
                   return_weights: bool = False):
    """Multi-head scaled dot-product attention over one sequence.

    Masked key positions receive exactly zero weight from every query.
    """
    d = x.data.shape[1]
    d_head = d // n_heads
    q_all = T.matmul(x, store[f"{prefix}.attn_q"])
    k_all = T.matmul(x, store[f"{prefix}.attn_k"])
    v_all = T.matmul(x, store[f"{prefix}.attn_v"])
    key_mask = np.broadcast_to(mask[None, :], (x.data.shape[0], x.data.shape[0]))
    head_outs = []
    weights = []
    for h in range(n_heads):
        lo, hi = h * d_head, (h + 1) * d_head
        q = T.narrow(q_all, 1, lo, hi)
        k = T.narrow(k_all, 1, lo, hi)
        v = T.narrow(v_all, 1, lo, hi)
        scores = T.mul(T.matmul(q, T.transpose(k)), 1.0 / np.sqrt(d_head))
        attn = T.softmax(scores, axis=1, mask=key_mask)
        head_outs.append(T.matmul(attn, v))
        if return_weights:
            weights.append(attn.data.copy())
    out = T.matmul(T.concat(head_outs, axis=1), store[f"{prefix}.attn_o"])
    if return_weights:
        return out, weights
    return out


def encoder_block(x: Tensor, mask: np.ndarray, cfg: EncoderConfig,
                  store: ParamStore, prefix: str) -> Tensor:
    """conv -> self-attention -> feed-forward, residual around each sublayer."""
    conv = T.relu(T.add(T.conv1d(x, store[f"{prefix}.conv_w"]),
                        store[f"{prefix}.conv_b"]))
    x = T.add(x, conv) if cfg.use_residual else conv
    attn = self_attention(x, mask, cfg.n_heads, store, prefix)
    x = T.add(x, attn) if cfg.use_residual else attn
    ff = feed_forward(x, store[f"{prefix}.ff_w1"], store[f"{prefix}.ff_b1"],
                      store[f"{prefix}.ff_w2"], store[f"{prefix}.ff_b2"])
    return T.add(x, ff) if cfg.use_residual else ff


def project_embeddings(x: Tensor, cfg: EncoderConfig, store: ParamStore,
                       prefix: str = "enc") -> Tensor:
    """Map (d1+d2)-wide token vectors to d_model, adding positions if enabled."""
    x = linear(x, store[f"{prefix}.proj_w"], store[f"{prefix}.proj_b"])
    if cfg.use_positional:
        pos = sinusoidal_positions(x.data.shape[0], cfg.d_model, x.data.dtype)
        x = T.add(x, Tensor(pos))
    return x


def encode_sequence(x: Tensor, cfg: EncoderConfig, store: ParamStore,
                    mask: Optional[np.ndarray] = None) -> Encoded:
    """Full encoder: projection, positions, then the conv/attention/ff block."""
    if mask is None:
        mask = np.ones(x.data.shape[0], dtype=bool)
    x = project_embeddings(x, cfg, store)
    out = encoder_block(x, mask, cfg, store, "enc")
    return Encoded(out, mask)


def encode_tokens(tokens, char_ids, cfg: EncoderConfig, store: ParamStore) -> Encoded:
    return encode_sequence(embed_tokens(tokens, char_ids, store), cfg, store)
