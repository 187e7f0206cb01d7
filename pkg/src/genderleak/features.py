"""Word-level tokenization, vocabularies, count vectors and gender-contrastive TF-IDF."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
from scipy import sparse

from .corpus import FEMALE, MALE, PLACEHOLDERS, Corpus
from .errors import DataError

MASK_TOKEN = "[MASK]"
UNK_TOKEN = "[UNK]"
DEFAULT_RESERVED = frozenset(PLACEHOLDERS + (MASK_TOKEN, UNK_TOKEN))
POS_GROUPS = ("adjective", "noun", "verb")

_WORD = r"[^\W_]+"


@dataclass(frozen=True)
class Tokenizer:
    """Splits on whitespace and punctuation; reserved tokens are kept whole and never lowercased."""

    lowercase: bool = True
    reserved: frozenset = DEFAULT_RESERVED
    max_tokens: int | None = 512

    def with_reserved(self, *tokens: str) -> "Tokenizer":
        return Tokenizer(self.lowercase, frozenset(self.reserved) | set(tokens), self.max_tokens)

    @cached_property
    def _pattern(self) -> re.Pattern:
        alts = []
        for tok in sorted(self.reserved, key=lambda t: (-len(t), t)):
            pre = r"(?<![^\W_])" if re.match(r"[^\W_]", tok[0]) else ""
            post = r"(?![^\W_])" if re.match(r"[^\W_]", tok[-1]) else ""
            alts.append(pre + re.escape(tok) + post)
        if not alts:
            return re.compile(_WORD)
        # Cheap first-character guard so ordinary words skip the reserved alternatives.
        first = "".join(sorted({re.escape(t[0]) for t in self.reserved}))
        return re.compile(f"(?=[{first}])(?:{'|'.join(alts)})|{_WORD}")

    def spans(self, text: str, truncate: bool = True) -> list[tuple[int, int, str]]:
        """(start, end, token) triples in text order."""
        out = []
        limit = self.max_tokens if truncate else None
        for m in self._pattern.finditer(text):
            tok = m.group()
            if self.lowercase and tok not in self.reserved:
                tok = tok.lower()
            out.append((m.start(), m.end(), tok))
            if limit is not None and len(out) >= limit:
                break
        return out

    def __call__(self, text: str) -> list[str]:
        toks = self._pattern.findall(text)
        if self.max_tokens is not None:
            toks = toks[: self.max_tokens]
        if self.lowercase:
            reserved = self.reserved
            toks = [t if t in reserved else t.lower() for t in toks]
        return toks


def tokenize(text: str, tokenizer: Tokenizer | None = None) -> list[str]:
    return (tokenizer or Tokenizer())(text)


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    doc_freq: tuple[int, ...]
    counts: tuple[int, ...]

    @cached_property
    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "doc_freq": list(self.doc_freq), "counts": list(self.counts)}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(tuple(d["tokens"]), tuple(d["doc_freq"]), tuple(d["counts"]))


def build_vocab(corpus: Corpus, tokenizer: Tokenizer | None = None, min_count: int = 1, exclude=()) -> Vocabulary:
    """Tokens with corpus frequency >= min_count, ordered by frequency then lexicographically.

    Tokens in ``exclude`` (typically mask symbols) are left out entirely.
    """
    tokenizer = tokenizer or Tokenizer()
    if len(corpus) == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    counts: Counter = Counter()
    df: Counter = Counter()
    for letter in corpus:
        toks = tokenizer(letter.text)
        counts.update(toks)
        df.update(set(toks))
    exclude = set(exclude)
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in exclude), key=lambda t: (-counts[t], t))
    if not kept:
        raise DataError(f"vocabulary is empty after filtering with min_count={min_count}")
    return Vocabulary(tuple(kept), tuple(df[t] for t in kept), tuple(counts[t] for t in kept))


@dataclass(frozen=True)
class DocVector:
    counts: dict[int, int]
    label: int | None = None

    def dense(self, size: int) -> np.ndarray:
        x = np.zeros(size)
        for i, c in self.counts.items():
            x[i] = c
        return x


def vectorize(text: str, vocab: Vocabulary, tokenizer: Tokenizer | None = None, label=None) -> DocVector:
    tokenizer = tokenizer or Tokenizer()
    index = vocab.index
    c = Counter(index[t] for t in tokenizer(text) if t in index)
    return DocVector(dict(c), label)


def count_matrix(texts: Iterable[str], vocab: Vocabulary, tokenizer: Tokenizer | None = None) -> sparse.csr_matrix:
    """Documents x vocabulary count matrix (float64 CSR)."""
    tokenizer = tokenizer or Tokenizer()
    index = vocab.index
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for text in texts:
        c = Counter(index[t] for t in tokenizer(text) if t in index)
        for i in sorted(c):
            indices.append(i)
            data.append(float(c[i]))
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, len(vocab)),
    )


# --- TF-IDF ---------------------------------------------------------------


def smooth_idf(n_docs: int, df: np.ndarray) -> np.ndarray:
    return np.log((1.0 + n_docs) / (1.0 + df)) + 1.0


def tfidf_scores(doc_counts: list[Counter]) -> tuple[list[str], np.ndarray]:
    """Row-L2-normalized tf-idf over arbitrary documents.

    tf is the raw count divided by the document's token total; idf is the
    smoothed ln((1 + N) / (1 + df)) + 1.  Returns (tokens, scores) with one
    row per document and tokens in lexicographic order.
    """
    tokens = sorted(set().union(*doc_counts)) if doc_counts else []
    col = {t: j for j, t in enumerate(tokens)}
    counts = np.zeros((len(doc_counts), len(tokens)))
    for i, dc in enumerate(doc_counts):
        for t, c in dc.items():
            counts[i, col[t]] = c
    totals = counts.sum(axis=1, keepdims=True)
    tf = np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
    df = (counts > 0).sum(axis=0)
    scores = tf * smooth_idf(len(doc_counts), df)
    norms = np.linalg.norm(scores, axis=1, keepdims=True)
    scores = np.divide(scores, norms, out=np.zeros_like(scores), where=norms > 0)
    return tokens, scores


class TfidfRow(NamedTuple):
    token: str
    pos: str
    score_female: float
    score_male: float
    diff: float


@dataclass
class TfidfReport:
    rows: list[TfidfRow]
    tables: dict[str, dict[str, list[TfidfRow]]]
    k: int = 10
    min_count: int = 20

    def top_tokens(self) -> list[str]:
        """Every token appearing in any table, in table order without repeats."""
        out: list[str] = []
        for direction in ("male", "female"):
            for rows in self.tables[direction].values():
                for r in rows:
                    if r.token not in out:
                        out.append(r.token)
        return out

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "min_count": self.min_count,
            "tables": {
                d: {pos: [r._asdict() for r in rows] for pos, rows in by_pos.items()}
                for d, by_pos in self.tables.items()
            },
            "rows": [r._asdict() for r in self.rows],
        }


def gender_tfidf(
    corpus: Corpus,
    tokenizer: Tokenizer | None = None,
    pos_lexicon: dict[str, str] | None = None,
    k: int = 10,
    min_count: int = 20,
    pos_groups: tuple[str, ...] = POS_GROUPS,
) -> TfidfReport:
    """Contrast the female and male letters as two aggregate documents.

    Scores are computed over every token; ``min_count`` (total occurrences
    across the corpus) only filters which tokens are reported.
    """
    tokenizer = tokenizer or Tokenizer()
    pos_lexicon = pos_lexicon if pos_lexicon is not None else default_pos_lexicon()
    docs = {FEMALE: Counter(), MALE: Counter()}
    for letter in corpus:
        docs[letter.gender].update(tokenizer(letter.text))
    for g, name in ((FEMALE, "female"), (MALE, "male")):
        if not docs[g]:
            raise DataError(f"no tokens in the aggregated {name} document")
    tokens, scores = tfidf_scores([docs[FEMALE], docs[MALE]])
    rows = []
    for j, tok in enumerate(tokens):
        if docs[FEMALE][tok] + docs[MALE][tok] < min_count:
            continue
        f, m = float(scores[0, j]), float(scores[1, j])
        rows.append(TfidfRow(tok, pos_lexicon.get(tok, "other"), f, m, m - f))
    rows.sort(key=lambda r: (-abs(r.diff), r.token))
    tables: dict[str, dict[str, list[TfidfRow]]] = {"male": {}, "female": {}}
    for pos in pos_groups:
        in_pos = [r for r in rows if r.pos == pos]
        tables["male"][pos] = sorted((r for r in in_pos if r.diff > 0), key=lambda r: (-r.diff, r.token))[:k]
        tables["female"][pos] = sorted((r for r in in_pos if r.diff < 0), key=lambda r: (r.diff, r.token))[:k]
    return TfidfReport(rows, tables, k, min_count)


# --- POS lexicon ----------------------------------------------------------


def load_pos_lexicon(path: str | Path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise DataError(f"line {lineno}: expected token<TAB>pos")
            out.setdefault(cols[0].strip().lower(), cols[1].strip())
    return out


def default_pos_lexicon_path() -> Path:
    return Path(str(resources.files("genderleak") / "data" / "pos_lexicon.tsv"))


def default_pos_lexicon() -> dict[str, str]:
    return load_pos_lexicon(default_pos_lexicon_path())
