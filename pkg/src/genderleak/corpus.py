"""Letters, corpora, the JSON-lines format, splitting and class balancing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusError

FEMALE = 0
MALE = 1
LABELS = {FEMALE: "female", MALE: "male"}
SPLITS = ("train", "val", "test")
PROVENANCES = ("real", "edg", "masked", "synthetic")

# Anonymization placeholders that arrive pre-inserted in letters.
PLACEHOLDERS = ("FIRST_NAME", "MIDDLE_NAME", "LAST_NAME", "IDENTIFIER")


@dataclass(frozen=True)
class Letter:
    id: str
    text: str
    gender: int
    split: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise CorpusError(f"letter id must be a nonempty string, got {self.id!r}")
        if not isinstance(self.text, str) or not self.text:
            raise CorpusError(f"letter {self.id!r}: text must be a nonempty string")
        if self.gender not in (FEMALE, MALE) or isinstance(self.gender, bool):
            raise CorpusError(f"letter {self.id!r}: gender must be 0 or 1, got {self.gender!r}")
        if self.split is not None and self.split not in SPLITS:
            raise CorpusError(f"letter {self.id!r}: unknown split {self.split!r}")

    @property
    def label(self) -> str:
        return LABELS[self.gender]

    def to_json(self) -> str:
        obj = {"id": self.id, "text": self.text, "gender": self.gender}
        if self.split is not None:
            obj["split"] = self.split
        if self.meta:
            obj["meta"] = self.meta
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class Corpus:
    letters: tuple[Letter, ...]
    provenance: str = "real"

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(self.letters))
        if self.provenance not in PROVENANCES:
            raise CorpusError(f"unknown provenance {self.provenance!r}")
        seen = set()
        for letter in self.letters:
            if letter.id in seen:
                raise CorpusError(f"duplicate letter id {letter.id!r}")
            seen.add(letter.id)

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __getitem__(self, i):
        return self.letters[i]

    @property
    def ids(self) -> list[str]:
        return [x.id for x in self.letters]

    @property
    def labels(self) -> np.ndarray:
        return np.array([x.gender for x in self.letters], dtype=np.int64)

    def class_counts(self) -> tuple[int, int]:
        """(female, male) counts."""
        n_male = sum(x.gender for x in self.letters)
        return (len(self.letters) - n_male, n_male)

    def split(self, name: str) -> "Corpus":
        return Corpus(tuple(x for x in self.letters if x.split == name), self.provenance)

    def subset(self, ids: Iterable[str]) -> "Corpus":
        keep = set(ids)
        return Corpus(tuple(x for x in self.letters if x.id in keep), self.provenance)

    def by_id(self) -> dict[str, Letter]:
        return {x.id: x for x in self.letters}

    def map_texts(self, fn, provenance: str | None = None) -> "Corpus":
        letters = tuple(replace(x, text=fn(x.text)) for x in self.letters)
        return Corpus(letters, provenance or self.provenance)


def load_corpus(path: str | Path, provenance: str = "real") -> Corpus:
    letters = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"malformed JSON: {e.msg}", line=lineno) from None
            if not isinstance(obj, dict):
                raise CorpusError("expected a JSON object", line=lineno)
            missing = [k for k in ("id", "text", "gender") if k not in obj]
            if missing:
                raise CorpusError(f"missing required field(s) {', '.join(missing)}", line=lineno)
            meta = obj.get("meta") or {}
            if not isinstance(meta, dict):
                raise CorpusError("meta must be an object", line=lineno)
            try:
                letter = Letter(obj["id"], obj["text"], obj["gender"], obj.get("split"), meta)
            except CorpusError as e:
                raise CorpusError(str(e), line=lineno) from None
            if letter.id in seen:
                raise CorpusError(f"duplicate letter id {letter.id!r}", line=lineno)
            seen.add(letter.id)
            letters.append(letter)
    return Corpus(tuple(letters), provenance)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for letter in corpus.letters:
            fh.write(letter.to_json())
            fh.write("\n")


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of n items into len(ratios) bins."""
    raw = [n * r for r in ratios]
    counts = [math.floor(x) for x in raw]
    remainder = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def stratified_split(corpus: Corpus, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> Corpus:
    """Assign train/val/test labels with per-class proportional allocation."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"ratios must be three nonnegative values summing to 1, got {tuple(ratios)}")
    rng = np.random.default_rng(seed)
    assignment = {}
    for gender in (FEMALE, MALE):
        members = sorted(x.id for x in corpus if x.gender == gender)
        if len(members) < 3:
            raise CorpusError(f"class {LABELS[gender]} has {len(members)} letters; need at least 3 to stratify")
        order = rng.permutation(len(members))
        counts = _allocate(len(members), ratios)
        bounds = np.cumsum([0] + counts)
        for k, name in enumerate(SPLITS):
            for j in order[bounds[k]:bounds[k + 1]]:
                assignment[members[j]] = name
    letters = tuple(replace(x, split=assignment[x.id]) for x in corpus)
    return Corpus(letters, corpus.provenance)


def subsample_majority(corpus: Corpus, seed: int = 0) -> Corpus:
    """Downsample the larger class to the size of the smaller one."""
    n_female, n_male = corpus.class_counts()
    if n_female == 0 or n_male == 0:
        raise CorpusError("subsampling needs both classes present")
    if n_female == n_male:
        return corpus
    majority = MALE if n_male > n_female else FEMALE
    target = min(n_female, n_male)
    pool = sorted(x.id for x in corpus if x.gender == majority)
    rng = np.random.default_rng(seed)
    chosen = {pool[i] for i in rng.choice(len(pool), size=target, replace=False)}
    kept = tuple(x for x in corpus if x.gender != majority or x.id in chosen)
    return Corpus(kept, corpus.provenance)
