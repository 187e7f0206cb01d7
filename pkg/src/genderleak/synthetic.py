"""Synthetic letters with planted gender cues and a known Bayes accuracy.

Filler words are drawn i.i.d. from a neutral vocabulary, so the only
class signal is what the cue specification plants.  That makes the optimal
accuracy computable exactly, which is what the downstream classifiers and
interventions are checked against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import FEMALE, MALE, Corpus, Letter
from .errors import DataError

OPENER = "It is my pleasure to recommend FIRST_NAME LAST_NAME."
MAX_ENUMERATION = 1 << 22


@dataclass(frozen=True)
class ImplicitCue:
    """A token included once with probability ``p`` in letters of ``gender``
    and with probability ``p_other`` in letters of the other gender."""

    token: str
    gender: str
    p: float
    p_other: float = 0.0

    def prob(self, label: int) -> float:
        own = MALE if self.gender == "male" else FEMALE
        return self.p if label == own else self.p_other


@dataclass(frozen=True)
class CueSpec:
    explicit_terms: tuple = ()
    implicit_cues: tuple = ()
    base_vocab: tuple | None = None
    letters_per_class: tuple = (500, 500)
    seed: int = 0
    length_range: tuple = (150, 400)
    explicit_repeats: tuple = (2, 6)

    def __post_init__(self):
        object.__setattr__(self, "explicit_terms", tuple(tuple(t) for t in self.explicit_terms))
        object.__setattr__(
            self,
            "implicit_cues",
            tuple(c if isinstance(c, ImplicitCue) else ImplicitCue(**c) for c in self.implicit_cues),
        )
        if self.base_vocab is None:
            object.__setattr__(self, "base_vocab", default_filler(self))
        else:
            object.__setattr__(self, "base_vocab", tuple(self.base_vocab))
        object.__setattr__(self, "letters_per_class", tuple(self.letters_per_class))
        self.validate()

    def validate(self):
        if not self.base_vocab:
            raise DataError("base_vocab is empty")
        if sum(self.letters_per_class) <= 0 or min(self.letters_per_class) < 0:
            raise DataError("letters_per_class must be nonnegative with a positive total")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise DataError(f"invalid length_range {self.length_range}")
        if self.explicit_terms and not 1 <= self.explicit_repeats[0] <= self.explicit_repeats[1]:
            raise DataError(f"invalid explicit_repeats {self.explicit_repeats}")
        for surface, gender in self.explicit_terms:
            if gender not in ("male", "female"):
                raise DataError(f"explicit term {surface!r}: unknown gender {gender!r}")
        explicit = {s.lower() for s, _ in self.explicit_terms}
        filler = set(self.base_vocab)
        seen = set()
        for c in self.implicit_cues:
            if c.gender not in ("male", "female"):
                raise DataError(f"cue {c.token!r}: unknown gender {c.gender!r}")
            if not (0.0 <= c.p <= 1.0 and 0.0 <= c.p_other <= 1.0):
                raise DataError(f"cue {c.token!r}: probabilities must lie in [0, 1]")
            if c.token in explicit or c.token in filler or c.token in seen:
                raise DataError(f"cue token {c.token!r} overlaps explicit terms, filler or another cue")
            seen.add(c.token)
        if explicit & filler:
            raise DataError(f"explicit terms overlap filler vocabulary: {sorted(explicit & filler)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["explicit_terms"] = [list(t) for t in self.explicit_terms]
        d["letters_per_class"] = list(self.letters_per_class)
        d["length_range"] = list(self.length_range)
        d["explicit_repeats"] = list(self.explicit_repeats)
        d["base_vocab"] = list(self.base_vocab)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CueSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown CueSpec field(s): {', '.join(sorted(unknown))}")
        d = dict(d)
        for key in ("letters_per_class", "length_range", "explicit_repeats"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def default_filler(spec: CueSpec | None = None) -> tuple[str, ...]:
    """Words from the shipped POS lexicon minus gendered terms and the spec's cues."""
    from .features import default_pos_lexicon
    from .lexicon import default_lexicon

    excluded = set(default_lexicon()._by_surface)
    if spec is not None:
        excluded |= {s.lower() for s, _ in spec.explicit_terms}
        excluded |= {c.token for c in spec.implicit_cues}
    return tuple(sorted(w for w in default_pos_lexicon() if w not in excluded and w.isalpha()))


def bayes_accuracy(spec: CueSpec) -> float:
    """Accuracy of the likelihood-ratio classifier on cue presence indicators."""
    n_f, n_m = spec.letters_per_class
    total = n_f + n_m
    if n_f == 0 or n_m == 0:
        return 1.0
    prior_f, prior_m = n_f / total, n_m / total
    genders = {g for _, g in spec.explicit_terms}
    if genders:
        # Every letter carries at least one explicit term of its own class.
        return 1.0
    # Cues sharing (p_female, p_male) are exchangeable: enumerate how many of each group appear.
    groups: dict[tuple[float, float], int] = {}
    for c in spec.implicit_cues:
        key = (c.prob(FEMALE), c.prob(MALE))
        if key[0] != key[1]:
            groups[key] = groups.get(key, 0) + 1
    if not groups:
        return max(prior_f, prior_m)
    items = sorted(groups.items())
    if math.prod(k + 1 for _, k in items) > MAX_ENUMERATION:
        raise DataError("too many distinct informative cues for exact Bayes accuracy")
    acc = 0.0
    for present in itertools.product(*(range(k + 1) for _, k in items)):
        lf, lm = prior_f, prior_m
        for ((pf, pm), k), j in zip(items, present):
            ways = math.comb(k, j)
            lf *= ways * pf**j * (1 - pf) ** (k - j)
            lm *= ways * pm**j * (1 - pm) ** (k - j)
        acc += max(lf, lm)
    return acc


def _sentences(words: list[str], rng: np.random.Generator) -> str:
    out = []
    i = 0
    while i < len(words):
        n = int(rng.integers(8, 17))
        chunk = words[i:i + n]
        i += n
        chunk[0] = chunk[0][:1].upper() + chunk[0][1:]
        out.append(" ".join(chunk) + ".")
    return " ".join(out)


def generate_synthetic(spec: CueSpec) -> tuple[Corpus, float]:
    """Draw a corpus from ``spec``; returns it with the analytic Bayes accuracy."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_f, n_m = spec.letters_per_class
    labels = np.array([FEMALE] * n_f + [MALE] * n_m)
    labels = labels[rng.permutation(len(labels))]
    vocab = np.array(spec.base_vocab)
    lo, hi = spec.length_range
    width = len(str(len(labels)))
    letters = []
    for i, label in enumerate(labels):
        label = int(label)
        words = list(vocab[rng.integers(0, len(vocab), size=int(rng.integers(lo, hi + 1)))])
        inserts = []
        gender = "male" if label == MALE else "female"
        for surface, g in spec.explicit_terms:
            if g == gender:
                reps = int(rng.integers(spec.explicit_repeats[0], spec.explicit_repeats[1] + 1))
                inserts += [surface] * reps
        for cue in spec.implicit_cues:
            if rng.random() < cue.prob(label):
                inserts.append(cue.token)
        for tok in inserts:
            words.insert(int(rng.integers(0, len(words) + 1)), tok)
        text = OPENER + " " + _sentences(words, rng)
        letters.append(Letter(f"syn-{i:0{width}d}", text, label, meta={"source": "synthetic"}))
    return Corpus(tuple(letters), "synthetic"), bayes_accuracy(spec)


# Demo cue set used by the CLI and the end-to-end tests.
DEMO_EXPLICIT = (("he", "male"), ("his", "male"), ("mr", "male"), ("she", "female"), ("her", "female"), ("ms", "female"))
DEMO_IMPLICIT = (
    {"token": "leadership", "gender": "male", "p": 0.6, "p_other": 0.3},
    {"token": "research", "gender": "male", "p": 0.55, "p_other": 0.35},
    {"token": "confident", "gender": "male", "p": 0.5, "p_other": 0.3},
    {"token": "compassionate", "gender": "female", "p": 0.6, "p_other": 0.3},
    {"token": "delightful", "gender": "female", "p": 0.5, "p_other": 0.25},
    {"token": "humanitarian", "gender": "female", "p": 0.45, "p_other": 0.25},
)


def demo_spec(n_female: int = 2500, n_male: int = 2500, seed: int = 0, explicit: bool = True) -> CueSpec:
    return CueSpec(
        explicit_terms=DEMO_EXPLICIT if explicit else (),
        implicit_cues=DEMO_IMPLICIT,
        letters_per_class=(n_female, n_male),
        seed=seed,
    )
