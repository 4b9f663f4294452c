"""Scripted stand-ins for the neural model, for engine-level tests.

The episode engine only needs a handful of duck-typed surfaces; these stubs
answer them with plain numpy so thousands of episodes run in milliseconds
and policies/spans can be pinned or randomized at will.
"""

from __future__ import annotations

import numpy as np

from cfqa.answer import AnswerOutput, SpanPrediction
from cfqa.encoder import Encoded
from cfqa.selector import SentenceDist
from cfqa.tensor import Tensor


def masked_probs(base: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    p = np.asarray(base, dtype=np.float64).copy()
    if mask is not None:
        p[~np.asarray(mask, dtype=bool)] = 0.0
    total = p.sum()
    if total <= 0:
        allowed = np.ones(3) if mask is None else np.asarray(mask, dtype=np.float64)
        return allowed / allowed.sum()
    return p / total


class ScriptedModel:
    """Engine-compatible stub with pluggable policy, span and sentence scorer.

    policy_fn(ctx, step) -> base probabilities over (answer, select, excise);
    span_fn(ctx, rng) -> (start, end); dist_fn(ctx, rng) -> sentence probs.
    """

    def __init__(self, seed: int = 0, d_model: int = 4, policy_fn=None,
                 span_fn=None, dist_fn=None):
        self.rng = np.random.default_rng(seed)
        self.d_model = d_model
        self.policy_fn = policy_fn or (lambda ctx, step: self.rng.dirichlet(np.ones(3)))
        self.span_fn = span_fn or self._random_span
        self.dist_fn = dist_fn or (lambda ctx, rng: rng.dirichlet(np.ones(ctx.n_sentences)))
        self._ctx = None
        self._step = -1

    def _random_span(self, ctx, rng):
        n = ctx.n_tokens
        start = int(rng.integers(0, n))
        end = int(rng.integers(start, n))
        return start, min(end, n - 1)

    def encode_question(self, example):
        rows = np.full((max(1, len(example.question)), self.d_model), 0.25)
        return Encoded(Tensor(rows), np.ones(rows.shape[0], dtype=bool))

    def encode_doc(self, ctx):
        self._ctx = ctx
        self._step += 1
        rows = np.zeros((ctx.n_tokens, self.d_model))
        return Encoded(Tensor(rows), np.ones(ctx.n_tokens, dtype=bool))

    def state(self, ctx_enc, q_enc):
        return Tensor(np.zeros((2, self.d_model)))

    def policy(self, state, action_mask=None):
        base = self.policy_fn(self._ctx, self._step)
        probs = masked_probs(base, action_mask)
        return Tensor(probs), Tensor(np.log(np.maximum(probs, 1e-12)))

    def value(self, state):
        return Tensor(np.asarray(0.0))

    def sentence_dist(self, q_enc, ctx):
        probs = np.asarray(self.dist_fn(ctx, self.rng), dtype=np.float64)
        return SentenceDist(probs=probs, logits=Tensor(np.log(probs + 1e-12)))

    def answer(self, q_enc, ctx_enc):
        start, end = self.span_fn(self._ctx, self.rng)
        n = self._ctx.n_tokens
        p = np.zeros(n)
        p[start] = 1.0
        pe = np.zeros(n)
        pe[end] = 1.0
        span = SpanPrediction(start=start, end=end, p_start=p, p_end=pe, score=1.0)
        return AnswerOutput(start_logits=Tensor(p), end_logits=Tensor(pe),
                            mask=np.ones(n, dtype=bool), span=span)


def pinned_policy(action_index: int):
    base = np.full(3, 1e-9)
    base[action_index] = 1.0
    return lambda ctx, step: base


def oracle_components(gold_answers):
    """Selector and span functions that read the gold answer's location."""
    from cfqa.text import find_subsequence

    def dist_fn(ctx, rng):
        probs = np.full(ctx.n_sentences, 1e-9)
        for i, sent in enumerate(ctx.sentences):
            if any(find_subsequence(sent, g) is not None for g in gold_answers):
                probs[i] = 1.0
        return probs / probs.sum()

    def span_fn(ctx, rng):
        flat = ctx.flat_tokens()
        for g in gold_answers:
            start = find_subsequence(flat, g)
            if start is not None:
                return start, start + len(g) - 1
        return 0, 0

    return dist_fn, span_fn


def make_example(rng, n_sentences=5, tokens_per_sentence=4, gold_sentence=None,
                 example_id="ex-0"):
    from cfqa.text import QAExample, TokenDoc

    sentences = [[int(t) for t in rng.integers(10, 200, size=tokens_per_sentence)]
                 for _ in range(n_sentences)]
    if gold_sentence is None:
        gold_sentence = int(rng.integers(0, n_sentences))
    gold = sentences[gold_sentence][1:3]
    doc = TokenDoc(
        sentences=sentences,
        char_ids=[[[1, 2]] * len(s) for s in sentences],
        source_spans=[[(si, ti) for ti in range(len(s))]
                      for si, s in enumerate(sentences)],
    )
    question = [int(t) for t in rng.integers(10, 200, size=3)]
    return QAExample(example_id, doc, question, [[1, 2]] * 3, [list(gold)])
