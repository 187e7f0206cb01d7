"""Explicit de-gendering (male terms -> female counterparts) and token masking."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .corpus import Corpus
from .features import MASK_TOKEN, Tokenizer
from .lexicon import Lexicon, apply_casing, casing_of, match_all

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Replacement:
    start: int
    end: int
    original: str
    replacement: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class EdgResult:
    text: str
    replacements: tuple[Replacement, ...] = ()


def apply_replacements(original: str, replacements) -> str:
    """Rebuild a de-gendered text from the original and its replacement log."""
    out = []
    pos = 0
    for r in replacements:
        out.append(original[pos:r.start])
        out.append(r.replacement)
        pos = r.end
    out.append(original[pos:])
    return "".join(out)


def _render(match) -> str:
    target = apply_casing(match.rule.counterpart_variant, casing_of(match.surface))
    if "’" in match.surface:
        target = target.replace("'", "’")
    return target


def apply_edg(text: str, lexicon: Lexicon) -> EdgResult:
    """Replace every male-term variant with the matching female form."""
    reps = []
    for m in match_all(text, lexicon):
        if m.term.gender != "male":
            continue
        if m.rule.fallback:
            logger.warning(
                "no regular counterpart form for %r; using %r", m.surface, m.rule.counterpart_variant
            )
        reps.append(Replacement(m.start, m.end, m.surface, _render(m)))
    if not reps:
        return EdgResult(text, ())
    return EdgResult(apply_replacements(text, reps), tuple(reps))


@dataclass(frozen=True)
class MaskPlan:
    tokens: frozenset
    mask_symbol: str = MASK_TOKEN
    match_casing: bool = False

    def __post_init__(self):
        toks = frozenset(self.tokens)
        if not self.match_casing:
            toks = frozenset(t.lower() for t in toks)
        object.__setattr__(self, "tokens", toks)
        if not toks:
            raise ValueError("MaskPlan needs at least one token")
        if not self.mask_symbol:
            raise ValueError("mask_symbol must be nonempty")
        probe = self.mask_symbol if self.match_casing else self.mask_symbol.lower()
        if probe in toks:
            raise ValueError(f"mask_symbol {self.mask_symbol!r} is itself a masked token")


def apply_mask(text: str, plan: MaskPlan, tokenizer: Tokenizer | None = None) -> str:
    """Replace whole-token occurrences of the plan's tokens with the mask symbol."""
    tokenizer = (tokenizer or Tokenizer()).with_reserved(plan.mask_symbol)
    out = []
    pos = 0
    for start, end, _ in tokenizer.spans(text, truncate=False):
        raw = text[start:end]
        key = raw if plan.match_casing else raw.lower()
        if key in plan.tokens:
            out.append(text[pos:start])
            out.append(plan.mask_symbol)
            pos = end
    if pos == 0:
        return text
    out.append(text[pos:])
    return "".join(out)


@dataclass
class EdgTrace:
    """Per-letter replacement log, emitted as JSON lines by the CLI."""

    entries: list = field(default_factory=list)

    def add(self, letter_id: str, result: EdgResult):
        for r in result.replacements:
            self.entries.append(
                {"id": letter_id, "span": [r.start, r.end], "original": r.original, "replacement": r.replacement}
            )


def degender_corpus(corpus: Corpus, lexicon: Lexicon, trace: EdgTrace | None = None) -> Corpus:
    def fn(letter_id, text):
        res = apply_edg(text, lexicon)
        if trace is not None:
            trace.add(letter_id, res)
        return res.text

    letters = tuple(replace(x, text=fn(x.id, x.text)) for x in corpus)
    return Corpus(letters, "edg")


def mask_corpus(corpus: Corpus, plan: MaskPlan, tokenizer: Tokenizer | None = None) -> Corpus:
    return corpus.map_texts(lambda t: apply_mask(t, plan, tokenizer), provenance="masked")
