"""Wires every parameterized module into one model over a shared store."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .answer import AnswerOutput, answer_forward, create_answer_params
from .config import RunConfig
from .controller import (actor_policy, build_state, create_controller_params,
                         critic_value)
from .encoder import Encoded, create_encoder_params, encode_tokens
from .params import ParamStore
from .selector import SentenceDist, create_selector_params, score_sentences
from .tensor import Tensor
from .text import QAExample, TokenDoc, Vocab, load_glove


class QaModel:
    """All trainable state plus the forward surfaces the episode loop uses.

    One encoder parameter set serves documents and questions; the sentence
    scorer, span extractor and the two controller GRUs have their own
    parameters. Creation order is fixed, so a seed pins every initial value.
    """

    def __init__(self, cfg: RunConfig, vocab: Vocab, seed: Optional[int] = None):
        cfg.validate()
        self.cfg = cfg
        self.enc_cfg = cfg.encoder_config()
        self.vocab = vocab
        self.store = ParamStore(rho=cfg.rho, eps=cfg.eps)
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        word_init = None
        if cfg.glove_path:
            word_init = load_glove(cfg.glove_path, vocab, dim=cfg.d1)
        create_encoder_params(self.store, self.enc_cfg, vocab.n_words,
                              vocab.n_chars, rng, word_init=word_init)
        if cfg.glove_path and cfg.freeze_word_emb:
            self.store["emb.word"].requires_grad = False
        create_selector_params(self.store, self.enc_cfg, cfg.sel_kernel,
                               cfg.sel_filters, rng)
        create_answer_params(self.store, self.enc_cfg, rng)
        create_controller_params(self.store, cfg.d_model, cfg.gru_size, rng)

    # ---- representation -------------------------------------------------
    def encode_doc(self, doc: TokenDoc) -> Encoded:
        return encode_tokens(doc.flat_tokens(), doc.flat_char_ids(),
                             self.enc_cfg, self.store)

    def encode_question(self, example: QAExample) -> Encoded:
        return encode_tokens(example.question, example.question_chars,
                             self.enc_cfg, self.store)

    # ---- modules ---------------------------------------------------------
    def sentence_dist(self, q_enc: Encoded, ctx: TokenDoc) -> SentenceDist:
        return score_sentences(q_enc, ctx, self.enc_cfg, self.store)

    def answer(self, q_enc: Encoded, ctx_enc: Encoded) -> AnswerOutput:
        return answer_forward(q_enc, ctx_enc, self.enc_cfg, self.store,
                              self.cfg.max_span_len, mode=self.cfg.decode_mode)

    # ---- controller -------------------------------------------------------
    def state(self, ctx_enc: Encoded, q_enc: Encoded) -> Tensor:
        return build_state(ctx_enc.matrix, q_enc.matrix, self.store,
                           max_state_tokens=self.cfg.max_state_tokens)

    def policy(self, state_seq: Tensor, action_mask: Optional[np.ndarray] = None):
        return actor_policy(state_seq, self.store, self.cfg.gru_size,
                            action_mask=action_mask)

    def value(self, state_seq: Tensor) -> Tensor:
        return critic_value(state_seq, self.store, self.cfg.gru_size)
