"""Span extraction: similarity attention, shared model-encoder, span heads.

The context attends to the question through a trilinear similarity matrix;
row- and column-normalized variants of that matrix produce the two
attention summaries that are fused with the context and pushed through one
weight-shared encoder block three times. Start and end heads read pairs of
those passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, Encoded, encoder_block, _create_block
from .errors import ContractError
from .params import ParamStore
from .tensor import Tensor


@dataclass
class AttentionPair:
    a: Tensor        # context-to-question summary [n x d_model]
    b: Tensor        # question-to-context summary [n x d_model]
    s: Tensor        # raw similarity [n x m]


@dataclass
class SpanPrediction:
    start: int
    end: int
    p_start: np.ndarray
    p_end: np.ndarray
    score: float


@dataclass
class AnswerOutput:
    """Forward results of the span extractor on one context."""
    start_logits: Tensor
    end_logits: Tensor
    mask: np.ndarray
    span: SpanPrediction


def create_answer_params(store: ParamStore, cfg: EncoderConfig,
                         rng: np.random.Generator) -> None:
    d = cfg.d_model
    store.create("ans.w_sim", (3 * d,), rng, fan_in=3 * d)
    store.create("ans.fuse_w", (4 * d, d), rng, fan_in=4 * d)
    store.create("ans.fuse_b", (d,), rng, fan_in=0)
    _create_block(store, "m2", cfg, rng)
    store.create("ans.w_start", (2 * d,), rng, fan_in=2 * d)
    store.create("ans.w_end", (2 * d,), rng, fan_in=2 * d)


def trilinear_similarity(q: Encoded, d: Encoded, w_sim: Tensor) -> Tensor:
    """S[i,j] = w . [q_j, d_i, q_j * d_i] for context row i, question row j."""
    dm = d.matrix.data.shape[1]
    if q.matrix.data.shape[1] != dm:
        raise ContractError("question and context encodings differ in width")
    w_q = T.narrow(w_sim, 0, 0, dm)
    w_d = T.narrow(w_sim, 0, dm, 2 * dm)
    w_m = T.narrow(w_sim, 0, 2 * dm, 3 * dm)
    n, m = d.seq_len, q.seq_len
    col = T.reshape(T.matmul(d.matrix, w_d), (n, 1))
    row = T.reshape(T.matmul(q.matrix, w_q), (1, m))
    cross = T.matmul(T.mul(d.matrix, w_m), T.transpose(q.matrix))
    return T.add(T.add(cross, col), row)


def context_query_attention(s: Tensor, q: Encoded, d: Encoded) -> AttentionPair:
    """Row/column softmax products of the similarity matrix.

    Padded question columns are excluded from the row softmax and padded
    context rows from the column softmax.
    """
    s_row = T.softmax(s, axis=1, mask=q.mask[None, :])
    s_col = T.softmax(s, axis=0, mask=d.mask[:, None])
    a = T.matmul(s_row, q.matrix)
    b = T.matmul(T.matmul(s_row, T.transpose(s_col)), d.matrix)
    return AttentionPair(a=a, b=b, s=s)


def model_encode(d: Encoded, pair: AttentionPair, cfg: EncoderConfig,
                 store: ParamStore) -> tuple[Tensor, Tensor, Tensor]:
    """Fuse attention into the context and run the shared block three times."""
    fused = T.concat([d.matrix, pair.a,
                      T.mul(d.matrix, pair.a),
                      T.mul(d.matrix, pair.b)], axis=1)
    x = T.add(T.matmul(fused, store["ans.fuse_w"]), store["ans.fuse_b"])
    e0 = encoder_block(x, d.mask, cfg, store, "m2")
    e1 = encoder_block(e0, d.mask, cfg, store, "m2")
    e2 = encoder_block(e1, d.mask, cfg, store, "m2")
    return e0, e1, e2


def decode_span(p_start: np.ndarray, p_end: np.ndarray, max_span_len: int,
                mode: str = "constrained") -> tuple[int, int]:
    """Pick (start, end) from the two position distributions.

    constrained: argmax of p_start[i]*p_end[j] over i <= j < i+max_span_len.
    paper_literal: independent argmaxes; a start past the end collapses the
    span to the start token.
    """
    if mode == "paper_literal":
        s = int(np.argmax(p_start))
        e = int(np.argmax(p_end))
        return (s, s) if s > e else (s, e)
    if mode != "constrained":
        raise ContractError(f"unknown decode mode {mode!r}")
    n = len(p_start)
    best = (-1.0, 0, 0)
    for j in range(n):
        lo = max(0, j - max_span_len + 1)
        i = lo + int(np.argmax(p_start[lo:j + 1]))
        cand = float(p_start[i]) * float(p_end[j])
        if cand > best[0]:
            best = (cand, i, j)
    return best[1], best[2]


def predict_span(start_logits: Tensor, end_logits: Tensor, mask: np.ndarray,
                 max_span_len: int, mode: str = "constrained") -> SpanPrediction:
    p_start = _masked_probs(start_logits.data, mask)
    p_end = _masked_probs(end_logits.data, mask)
    s, e = decode_span(p_start, p_end, max_span_len, mode=mode)
    return SpanPrediction(start=s, end=e, p_start=p_start, p_end=p_end,
                          score=float(p_start[s] * p_end[e]))


def _masked_probs(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, -1e30)
    z = z - z.max()
    ez = np.exp(z)
    return ez / ez.sum()


def answer_forward(q: Encoded, d: Encoded, cfg: EncoderConfig, store: ParamStore,
                   max_span_len: int, mode: str = "constrained") -> AnswerOutput:
    """Full extractor forward on one (question, context) pair."""
    sim = trilinear_similarity(q, d, store["ans.w_sim"])
    pair = context_query_attention(sim, q, d)
    e0, e1, e2 = model_encode(d, pair, cfg, store)
    start_logits = T.matmul(T.concat([e0, e1], axis=1), store["ans.w_start"])
    end_logits = T.matmul(T.concat([e0, e2], axis=1), store["ans.w_end"])
    span = predict_span(start_logits, end_logits, d.mask, max_span_len, mode=mode)
    return AnswerOutput(start_logits=start_logits, end_logits=end_logits,
                        mask=d.mask, span=span)


def span_nll(out: AnswerOutput, gold_start: int, gold_end: int) -> Tensor:
    """Negative log-likelihood of a gold (start, end) pair."""
    ls = T.log_softmax(out.start_logits, axis=0, mask=out.mask)
    le = T.log_softmax(out.end_logits, axis=0, mask=out.mask)
    return T.mul(T.add(T.pick(ls, gold_start), T.pick(le, gold_end)), -1.0)
