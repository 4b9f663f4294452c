"""Sentence scoring and top-K narrowing.

Each sentence is scored by a small text CNN over the encoded question rows
concatenated with the sentence's projected token embeddings; a softmax over
the per-sentence scores gives the selection distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, Encoded, embed_tokens, project_embeddings
from .errors import ContractError
from .params import ParamStore
from .tensor import Tensor
from .text import TokenDoc


@dataclass
class SentenceDist:
    """Probabilities aligned to the sentence order of the scored context."""
    probs: np.ndarray
    logits: Tensor


def create_selector_params(store: ParamStore, cfg: EncoderConfig,
                           kernel: int, n_filters: int,
                           rng: np.random.Generator) -> None:
    store.create("sel.conv_w", (kernel, cfg.d_model, n_filters), rng,
                 fan_in=kernel * cfg.d_model)
    store.create("sel.conv_b", (n_filters,), rng, fan_in=0)
    store.create("sel.score_w", (n_filters,), rng, fan_in=n_filters)


def score_sentences(q: Encoded, ctx: TokenDoc, cfg: EncoderConfig,
                    store: ParamStore) -> SentenceDist:
    """Distribution over the sentences of ``ctx`` given the encoded question."""
    if ctx.n_sentences < 1:
        raise ContractError("cannot score an empty context")
    scores = []
    for tokens, chars in zip(ctx.sentences, ctx.char_ids):
        sent = project_embeddings(embed_tokens(tokens, chars, store), cfg, store)
        seq = T.concat([q.matrix, sent], axis=0)
        conv = T.relu(T.add(T.conv1d(seq, store["sel.conv_w"]), store["sel.conv_b"]))
        pooled = T.reduce_max(conv, axis=0)
        scores.append(T.matmul(pooled, store["sel.score_w"]))
    logits = T.concat([T.reshape(s, (1,)) for s in scores], axis=0)
    probs = T.softmax(logits, axis=0)
    return SentenceDist(probs=probs.data.copy(), logits=logits)


def top_k_indices(probs: np.ndarray, k: int) -> list[int]:
    """Indices of the k largest probabilities; ties favor the lower index."""
    order = np.argsort(-probs, kind="stable")
    return sorted(int(i) for i in order[: max(1, min(k, len(probs)))])


def select_top_k(dist: SentenceDist, ctx: TokenDoc, k: int) -> tuple[TokenDoc, list[int]]:
    """Keep the top-k sentences in original document order.

    k is clamped to the sentence count; provenance rides along unchanged.
    Returns the narrowed document and the kept sentence indices.
    """
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    if len(dist.probs) != ctx.n_sentences:
        raise ContractError(
            f"distribution over {len(dist.probs)} sentences does not match "
            f"context with {ctx.n_sentences}")
    keep = top_k_indices(dist.probs, k)
    narrowed = TokenDoc(
        sentences=[list(ctx.sentences[i]) for i in keep],
        char_ids=[[list(c) for c in ctx.char_ids[i]] for i in keep],
        source_spans=[list(ctx.source_spans[i]) for i in keep],
    )
    return narrowed, keep
