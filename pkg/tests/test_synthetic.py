import json

import numpy as np
import pytest

from cfqa.errors import ConfigError
from cfqa.synthetic import SyntheticConfig, gen_synthetic, write_jsonl
from cfqa.text import build_vocab, examples_from_records, find_subsequence


def test_gold_extractable_in_exactly_one_sentence_without_distractors():
    cfg = SyntheticConfig(n_docs=200, sentences_per_doc=(4, 8),
                          tokens_per_sentence=(4, 8), vocab_size=80,
                          distractor_rate=0.0)
    records = gen_synthetic(cfg, seed=3)
    vocab = build_vocab(records)
    for ex in examples_from_records(records, vocab):
        hits = [s for s in ex.doc.sentences
                if find_subsequence(s, ex.gold_answers[0]) is not None]
        assert len(hits) == 1


def test_gold_extractable_even_with_distractors():
    cfg = SyntheticConfig(n_docs=200, sentences_per_doc=(6, 10),
                          tokens_per_sentence=(4, 8), vocab_size=80,
                          distractor_rate=0.7)
    records = gen_synthetic(cfg, seed=4)
    vocab = build_vocab(records)
    for ex in examples_from_records(records, vocab):
        flat = ex.doc.flat_tokens()
        assert find_subsequence(flat, ex.gold_answers[0]) is not None


def test_question_tokens_present_in_answer_sentence():
    cfg = SyntheticConfig(n_docs=100, sentences_per_doc=(3, 6),
                          tokens_per_sentence=(5, 9), vocab_size=90,
                          distractor_rate=0.5)
    records = gen_synthetic(cfg, seed=5)
    vocab = build_vocab(records)
    for ex in examples_from_records(records, vocab):
        combined = ex.question + ex.gold_answers[0]
        hits = [s for s in ex.doc.sentences
                if find_subsequence(s, combined) is not None]
        assert len(hits) == 1


def test_same_seed_byte_identical(tmp_path):
    cfg = SyntheticConfig(n_docs=50, distractor_rate=0.4)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_jsonl(a, gen_synthetic(cfg, seed=9))
    write_jsonl(b, gen_synthetic(cfg, seed=9))
    assert a.read_bytes() == b.read_bytes()


def test_different_seed_differs(tmp_path):
    cfg = SyntheticConfig(n_docs=50)
    assert gen_synthetic(cfg, seed=1) != gen_synthetic(cfg, seed=2)


def test_distractor_fraction_matches_closed_form():
    # fixed sentence count so the per-document probability is exact:
    # P(at least one distractor) = 1 - (1 - rate)^(n_sentences - 1)
    n_sentences, rate = 6, 0.5
    cfg = SyntheticConfig(n_docs=1000, sentences_per_doc=(n_sentences, n_sentences),
                          tokens_per_sentence=(4, 8), vocab_size=80,
                          distractor_rate=rate)
    records = gen_synthetic(cfg, seed=6)
    vocab = build_vocab(records)
    examples = examples_from_records(records, vocab)
    value_ids = {vocab.word_id(f"v{i}") for i in range(16)}

    def has_distractor(ex):
        gold_sent = next(i for i, s in enumerate(ex.doc.sentences)
                         if find_subsequence(s, ex.question + ex.gold_answers[0]) is not None)
        for i, s in enumerate(ex.doc.sentences):
            if i != gold_sent and any(t in value_ids for t in s):
                return True
        return False

    measured = np.mean([has_distractor(ex) for ex in examples])
    expected = 1.0 - (1.0 - rate) ** (n_sentences - 1)
    assert abs(measured - expected) <= 0.03


def test_infeasible_config_rejected():
    with pytest.raises(ConfigError):
        SyntheticConfig(tokens_per_sentence=(2, 4)).validate()
    with pytest.raises(ConfigError):
        SyntheticConfig(vocab_size=20).validate()
    with pytest.raises(ConfigError):
        SyntheticConfig(sentences_per_doc=(5, 3)).validate()


def test_answer_value_never_reused_as_distractor_value():
    cfg = SyntheticConfig(n_docs=300, sentences_per_doc=(5, 8),
                          tokens_per_sentence=(4, 7), vocab_size=70,
                          distractor_rate=0.8)
    records = gen_synthetic(cfg, seed=7)
    vocab = build_vocab(records)
    for ex in examples_from_records(records, vocab):
        gold = ex.gold_answers[0]
        flat = ex.doc.flat_tokens()
        # every occurrence of the first gold token heads a full gold answer
        starts = [i for i, t in enumerate(flat) if t == gold[0]]
        for s in starts:
            assert flat[s:s + len(gold)] == gold


def test_records_match_loader_schema(tmp_path):
    cfg = SyntheticConfig(n_docs=5)
    path = tmp_path / "c.jsonl"
    write_jsonl(path, gen_synthetic(cfg, seed=8))
    for line in path.read_text().splitlines():
        rec = json.loads(line)
        assert set(rec) == {"id", "document", "question", "answers"}
