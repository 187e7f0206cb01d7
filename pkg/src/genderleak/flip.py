"""Single-token prediction-flip analysis with repeated majority-class subsampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .corpus import Corpus, subsample_majority
from .degender import MaskPlan, apply_mask, mask_corpus
from .errors import DataError
from .features import MASK_TOKEN
from .model import ClassifierModel

logger = logging.getLogger(__name__)

SUBSET_RULES = ("paper_rule", "all_letters")


@dataclass
class FlipConfig:
    candidate_tokens: tuple
    runs: int = 50
    seed: int = 0
    subset_rule: str = "paper_rule"
    mask_symbol: str = MASK_TOKEN

    def __post_init__(self):
        self.candidate_tokens = tuple(dict.fromkeys(t.lower() for t in self.candidate_tokens))
        if not self.candidate_tokens:
            raise ValueError("candidate_tokens must be nonempty")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.subset_rule not in SUBSET_RULES:
            raise ValueError(f"subset_rule must be one of {SUBSET_RULES}")


class FlipRow(NamedTuple):
    token: str
    f_to_m: float
    m_to_f: float
    abs_diff: float


@dataclass
class FlipTable:
    rows: list[FlipRow]
    runs: int
    subset_size: int
    subset_class_counts: tuple = (0, 0)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "subset_size": self.subset_size,
            "subset_class_counts": {"female": self.subset_class_counts[0], "male": self.subset_class_counts[1]},
            "notes": self.notes,
            "rows": [r._asdict() for r in self.rows],
        }


def _aligned(corpus: Corpus, masked) -> Corpus:
    if masked is None:
        return corpus
    if isinstance(masked, MaskPlan):
        return mask_corpus(corpus, masked)
    by_id = masked.by_id()
    missing = [x.id for x in corpus if x.id not in by_id]
    if missing:
        raise DataError(f"masked corpus has no letter {missing[0]!r}")
    return Corpus(tuple(by_id[x.id] for x in corpus), masked.provenance)


def select_subset(
    corpus_edg: Corpus,
    model_edg: ClassifierModel,
    model_masked: ClassifierModel,
    masked: Corpus | MaskPlan | None = None,
) -> Corpus:
    """Letters the EDG model gets right and the masked-data model gets wrong.

    ``masked`` supplies the text model_masked scores: a masked copy of the
    corpus (matched by id) or the plan that produced it.  Without it the
    EDG text is used.
    """
    if len(corpus_edg) == 0:
        return corpus_edg
    y = corpus_edg.labels
    right_before = model_edg.predict_corpus(corpus_edg) == y
    wrong_after = model_masked.predict_corpus(_aligned(corpus_edg, masked)) != y
    keep = right_before & wrong_after
    subset = Corpus(tuple(x for x, k in zip(corpus_edg, keep) if k), corpus_edg.provenance)
    if len(subset) == 0:
        logger.warning("flip subset is empty; the flip table will be empty")
    return subset


def _outcomes(subset: Corpus, model: ClassifierModel, token: str, mask_symbol: str) -> np.ndarray:
    """+1 for a female->male flip, -1 for male->female, 0 otherwise, per letter."""
    plan = MaskPlan(frozenset([token]), mask_symbol)
    tokenizer = model.tokenizer.with_reserved(mask_symbol)
    texts = [x.text for x in subset]
    has = np.array([token in tokenizer(t) for t in texts], dtype=bool)
    out = np.zeros(len(texts), dtype=np.int64)
    if not has.any():
        return out
    idx = np.flatnonzero(has)
    before = model.predict_proba_texts([texts[i] for i in idx]) >= model.threshold
    after = model.predict_proba_texts([apply_mask(texts[i], plan, model.tokenizer) for i in idx]) >= model.threshold
    out[idx] = after.astype(np.int64) - before.astype(np.int64)
    return out


def count_flips(subset: Corpus, model_edg: ClassifierModel, token: str, mask_symbol: str = MASK_TOKEN) -> tuple[int, int]:
    """(female->male, male->female) prediction flips from masking one token."""
    if not token:
        raise ValueError("token must be nonempty")
    o = _outcomes(subset, model_edg, token.lower(), mask_symbol)
    return int(np.sum(o == 1)), int(np.sum(o == -1))


def flip_analysis(
    corpus_edg: Corpus,
    model_edg: ClassifierModel,
    model_masked: ClassifierModel,
    config: FlipConfig,
    masked: Corpus | MaskPlan | None = None,
) -> FlipTable:
    """Mean flip counts per candidate token over ``config.runs`` balanced subsamples."""
    if config.subset_rule == "paper_rule":
        subset = select_subset(corpus_edg, model_edg, model_masked, masked)
    else:
        subset = corpus_edg
    counts = subset.class_counts()
    notes = []
    if len(subset) == 0:
        return FlipTable([], config.runs, 0, counts, ["empty subset"])
    outcomes = {t: _outcomes(subset, model_edg, t, config.mask_symbol) for t in config.candidate_tokens}
    position = {x.id: i for i, x in enumerate(subset)}
    f_to_m = dict.fromkeys(config.candidate_tokens, 0)
    m_to_f = dict.fromkeys(config.candidate_tokens, 0)
    balanced = min(counts) > 0
    if not balanced:
        notes.append("subset holds a single class; runs use it without subsampling")
        logger.warning("flip subset holds a single class; skipping majority subsampling")
    for r in range(config.runs):
        run = subsample_majority(subset, config.seed + r) if balanced else subset
        idx = np.array([position[x.id] for x in run], dtype=np.int64)
        for t in config.candidate_tokens:
            o = outcomes[t][idx]
            f_to_m[t] += int(np.sum(o == 1))
            m_to_f[t] += int(np.sum(o == -1))
    rows = []
    for t in config.candidate_tokens:
        a, b = f_to_m[t] / config.runs, m_to_f[t] / config.runs
        rows.append(FlipRow(t, a, b, abs(a - b)))
    rows.sort(key=lambda r: (-r.abs_diff, r.token))
    return FlipTable(rows, config.runs, len(subset), counts, notes)
