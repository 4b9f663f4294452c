"""Tokenization, vocabularies and JSONL dataset I/O.

The tokenizer is a deliberately plain heuristic (lowercase, sentence split
on terminal punctuation, whitespace/punctuation word split) and is isolated
behind this module so it can be swapped without touching the models.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import DataError

PAD_ID = 0
UNK_ID = 1
SEP_ID = 2

_SENT_SPLIT = re.compile(r"[.!?]+(?:\s+|$)")
_WORD_SPLIT = re.compile(r"[a-z0-9_']+|[^\sa-z0-9_']")


def split_sentences(text: str) -> list[list[str]]:
    """Lowercase and split into sentences of word tokens."""
    if not text or not text.strip():
        raise DataError("cannot tokenize empty or whitespace-only text")
    sentences = []
    for chunk in _SENT_SPLIT.split(text.lower()):
        words = _WORD_SPLIT.findall(chunk)
        if words:
            sentences.append(words)
    if not sentences:
        raise DataError(f"no tokens found in text {text!r}")
    return sentences


def split_words(text: str) -> list[str]:
    """Single-sequence variant used for questions and answers."""
    return [w for sent in split_sentences(text) for w in sent]


class Vocab:
    """Word and character index spaces with reserved ids.

    Words reserve PAD=0, UNK=1, SEP=2; characters reserve PAD=0, UNK=1.
    Non-reserved ids are contiguous and bijective with their strings.
    """

    WORD_RESERVED = ("<pad>", "<unk>", "<sep>")
    CHAR_RESERVED = ("<pad>", "<unk>")

    def __init__(self, words: Iterable[str], chars: Iterable[str], char_width: int = 16):
        self.words = list(self.WORD_RESERVED)
        self.word_to_id: dict[str, int] = {w: i for i, w in enumerate(self.words)}
        for w in words:
            if w not in self.word_to_id:
                self.word_to_id[w] = len(self.words)
                self.words.append(w)
        self.chars = list(self.CHAR_RESERVED)
        self.char_to_id: dict[str, int] = {c: i for i, c in enumerate(self.chars)}
        for c in chars:
            if c not in self.char_to_id:
                self.char_to_id[c] = len(self.chars)
                self.chars.append(c)
        self.char_width = char_width

    @classmethod
    def build(cls, token_lists: Iterable[list[str]], char_width: int = 16) -> "Vocab":
        words: list[str] = []
        seen = set()
        chars: list[str] = []
        seen_chars = set()
        for tokens in token_lists:
            for w in tokens:
                if w not in seen:
                    seen.add(w)
                    words.append(w)
                for c in w:
                    if c not in seen_chars:
                        seen_chars.add(c)
                        chars.append(c)
        return cls(words, chars, char_width=char_width)

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def n_chars(self) -> int:
        return len(self.chars)

    def word_id(self, w: str) -> int:
        return self.word_to_id.get(w, UNK_ID)

    def word(self, i: int) -> str:
        return self.words[i]

    def char_ids(self, w: str) -> list[int]:
        ids = [self.char_to_id.get(c, UNK_ID) for c in w[: self.char_width]]
        ids.extend([PAD_ID] * (self.char_width - len(ids)))
        return ids

    def encode_words(self, words: list[str]) -> tuple[list[int], list[list[int]]]:
        return [self.word_id(w) for w in words], [self.char_ids(w) for w in words]


@dataclass
class TokenDoc:
    """A document as sentences of token ids, with provenance.

    ``source_spans`` maps every surviving token back to its
    (sentence, token) position in the original document, which narrowing
    and excision preserve.
    """

    sentences: list[list[int]]
    char_ids: list[list[list[int]]]
    source_spans: list[list[tuple[int, int]]]

    def __post_init__(self):
        if not self.sentences or any(not s for s in self.sentences):
            raise DataError("a document needs at least one non-empty sentence")

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def flat_tokens(self) -> list[int]:
        return [t for s in self.sentences for t in s]

    def flat_char_ids(self) -> list[list[int]]:
        return [c for s in self.char_ids for c in s]

    def flat_spans(self) -> list[tuple[int, int]]:
        return [p for s in self.source_spans for p in s]

    def sentence_bounds(self) -> list[tuple[int, int]]:
        """Half-open [start, stop) token offsets of each sentence."""
        bounds = []
        pos = 0
        for s in self.sentences:
            bounds.append((pos, pos + len(s)))
            pos += len(s)
        return bounds

    @classmethod
    def from_words(cls, sentences: list[list[str]], vocab: Vocab) -> "TokenDoc":
        ids, chars, spans = [], [], []
        for si, words in enumerate(sentences):
            w_ids, c_ids = vocab.encode_words(words)
            ids.append(w_ids)
            chars.append(c_ids)
            spans.append([(si, ti) for ti in range(len(words))])
        return cls(ids, chars, spans)


def tokenize(text: str, vocab: Vocab) -> TokenDoc:
    return TokenDoc.from_words(split_sentences(text), vocab)


def detokenize(doc: TokenDoc, vocab: Vocab) -> str:
    return " . ".join(" ".join(vocab.word(t) for t in s) for s in doc.sentences)


def truncate_doc(doc: TokenDoc, max_tokens: int) -> TokenDoc:
    """Drop trailing tokens past ``max_tokens``, keeping sentence structure."""
    if max_tokens <= 0 or doc.n_tokens <= max_tokens:
        return doc
    sentences, chars, spans = [], [], []
    left = max_tokens
    for s, c, p in zip(doc.sentences, doc.char_ids, doc.source_spans):
        if left <= 0:
            break
        take = min(left, len(s))
        sentences.append(s[:take])
        chars.append(c[:take])
        spans.append(p[:take])
        left -= take
    return TokenDoc(sentences, chars, spans)


@dataclass
class QAExample:
    id: str
    doc: TokenDoc
    question: list[int]
    question_chars: list[list[int]]
    gold_answers: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.gold_answers or any(not a for a in self.gold_answers):
            raise DataError(f"example {self.id!r}: gold answers must be non-empty")


_REQUIRED_FIELDS = ("id", "document", "question", "answers")


def read_jsonl(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}: line {lineno}: invalid JSON ({e.msg})") from e
            for fname in _REQUIRED_FIELDS:
                if fname not in obj:
                    raise DataError(f"{path}: line {lineno}: missing field {fname!r}")
            if not isinstance(obj["answers"], list) or not obj["answers"]:
                raise DataError(f"{path}: line {lineno}: answers must be a non-empty list")
            records.append(obj)
    return records


def build_vocab(records: list[dict], char_width: int = 16) -> Vocab:
    """Vocabulary over the documents and questions of a training split."""
    def token_streams():
        for rec in records:
            for sent in split_sentences(rec["document"]):
                yield sent
            yield split_words(rec["question"])
    return Vocab.build(token_streams(), char_width=char_width)


def examples_from_records(records: list[dict], vocab: Vocab,
                          max_doc_tokens: int = 0) -> list[QAExample]:
    examples = []
    for rec in records:
        doc = tokenize(rec["document"], vocab)
        if max_doc_tokens:
            doc = truncate_doc(doc, max_doc_tokens)
        q_ids, q_chars = vocab.encode_words(split_words(rec["question"]))
        answers = [vocab.encode_words(split_words(a))[0] for a in rec["answers"]]
        examples.append(QAExample(str(rec["id"]), doc, q_ids, q_chars, answers))
    return examples


def load_dataset(path, vocab: Optional[Vocab] = None, char_width: int = 16,
                 max_doc_tokens: int = 0) -> tuple[list[QAExample], Vocab]:
    """Load a JSONL dataset; builds the vocab from this file when none given."""
    records = read_jsonl(path)
    if vocab is None:
        vocab = build_vocab(records, char_width=char_width)
    return examples_from_records(records, vocab, max_doc_tokens=max_doc_tokens), vocab


def save_vocab(path, vocab: Vocab) -> None:
    payload = {"words": vocab.words[len(Vocab.WORD_RESERVED):],
               "chars": vocab.chars[len(Vocab.CHAR_RESERVED):],
               "char_width": vocab.char_width}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_vocab(path) -> Vocab:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return Vocab(payload["words"], payload["chars"],
                 char_width=payload["char_width"])


def load_glove(path, vocab: Vocab, dim: int = 300) -> np.ndarray:
    """Read word vectors in the common text format (token then floats).

    Returns a [n_words x dim] matrix; words absent from the file keep
    zero rows. Reserved ids stay zero.
    """
    table = np.zeros((vocab.n_words, dim), dtype=np.float32)
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                continue
            idx = vocab.word_to_id.get(parts[0])
            if idx is not None and idx >= len(Vocab.WORD_RESERVED):
                table[idx] = np.asarray(parts[1:], dtype=np.float32)
    return table


def find_subsequence(haystack: list[int], needle: list[int]) -> Optional[int]:
    """Index of the first occurrence of ``needle`` as a contiguous run."""
    if not needle or len(needle) > len(haystack):
        return None
    first = needle[0]
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i] == first and haystack[i:i + len(needle)] == needle:
            return i
    return None


def contains_any_answer(doc: TokenDoc, gold_answers: list[list[int]]) -> bool:
    flat = doc.flat_tokens()
    return any(find_subsequence(flat, ans) is not None for ans in gold_answers)
