"""Gendered-term lexicon: loading, variant expansion and span matching.

Each lexicon term expands into a small set of surface variants (plurals,
possessives, pronoun contractions) in three casings.  All variants of all
terms are compiled into a single alternation ordered longest-first, so a
left-to-right scan yields leftmost-longest, non-overlapping matches.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import LexiconError

logger = logging.getLogger(__name__)

GENDERS = ("male", "female")
CATEGORIES = ("pronoun", "title", "kinship", "role", "other")
POS_TAGS = ("noun", "verb", "adjective", "pronoun", "other")

APOSTROPHES = "'’"
_APOS_CLASS = "['’]"

# Variant kinds.
BARE = "bare"
PLURAL = "plural"
POSSESSIVE = "possessive"
PLURAL_POSSESSIVE = "plural_possessive"
CONTRACTION = "contraction"

PRONOUN_CONTRACTIONS = ("'s", "'d", "'ll")


@dataclass(frozen=True)
class GenderedTerm:
    surface: str
    gender: str
    counterpart: str
    category: str = "other"
    pos: str = "noun"

    def __post_init__(self):
        if not self.surface or self.surface != self.surface.lower() or any(c.isspace() for c in self.surface):
            raise LexiconError(f"invalid surface {self.surface!r}: must be nonempty lowercase without whitespace")
        if self.gender not in GENDERS:
            raise LexiconError(f"term {self.surface!r}: unknown gender {self.gender!r}")
        if self.category not in CATEGORIES:
            raise LexiconError(f"term {self.surface!r}: unknown category {self.category!r}")
        if self.pos not in POS_TAGS:
            raise LexiconError(f"term {self.surface!r}: unknown pos {self.pos!r}")
        if not self.counterpart or self.counterpart != self.counterpart.lower():
            raise LexiconError(f"term {self.surface!r}: invalid counterpart {self.counterpart!r}")


@dataclass(frozen=True)
class VariantRule:
    """One inflected form of a term and the form it maps to on the other side.

    ``variant`` and ``counterpart_variant`` are lowercase with ASCII
    apostrophes; casing and apostrophe style are restored at replacement time.
    ``pattern`` matches the base surface optionally followed by this rule's
    suffix, in lower, Title and UPPER casing.
    """

    base: str
    variant: str
    kind: str
    term: GenderedTerm
    counterpart_variant: str
    fallback: bool = False
    pattern: re.Pattern = field(default=None, compare=False, repr=False)

    @property
    def suffix(self) -> str:
        return self.variant[len(self.base):] if self.variant.startswith(self.base) else ""


class Match(NamedTuple):
    start: int
    end: int
    term: GenderedTerm
    surface: str
    rule: VariantRule

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


def pluralize(word: str) -> str:
    """Regular English plural with the few irregular endings the lexicon needs."""
    if word.endswith("man"):
        return word[:-3] + "men"
    if word.endswith("ife"):
        return word[:-2] + "ves"
    if word.endswith(("s", "x", "z", "ch", "sh")):
        return word + "es"
    if len(word) > 1 and word.endswith("y") and word[-2] not in "aeiou":
        return word[:-1] + "ies"
    return word + "s"


def casings(s: str) -> tuple[str, str, str]:
    """Lower, Title and UPPER forms. Title only touches the first character."""
    return (s.lower(), s[:1].upper() + s[1:].lower(), s.upper())


def casing_of(s: str) -> str:
    if s == s.lower():
        return "lower"
    if s == s.upper() and len([c for c in s if c.isalpha()]) > 1:
        return "upper"
    return "title"


def apply_casing(s: str, casing: str) -> str:
    if casing == "upper":
        return s.upper()
    if casing == "title":
        return s[:1].upper() + s[1:]
    return s


def _literal(s: str) -> str:
    return "".join(_APOS_CLASS if c == "'" else re.escape(c) for c in s)


def _rule_pattern(base: str, suffix: str) -> re.Pattern:
    alts = []
    for b, sfx in zip(casings(base), (suffix.lower(), suffix.lower(), suffix.upper())):
        alts.append(_literal(b) + (f"(?:{_literal(sfx)})?" if sfx else ""))
    return re.compile(r"(?<!\w)(?:" + "|".join(alts) + r")(?!\w)")


def _variant_forms(term: GenderedTerm) -> list[tuple[str, str]]:
    """(kind, variant) pairs for a term, bare form first."""
    s = term.surface
    forms = [(BARE, s)]
    if term.category == "pronoun" or term.pos == "pronoun":
        forms += [(CONTRACTION, s + c) for c in PRONOUN_CONTRACTIONS]
    elif term.category == "title":
        forms.append((POSSESSIVE, s + "'s"))
    else:
        plural = pluralize(s)
        forms += [(PLURAL, s + "s"), (PLURAL, s + "es")]
        if plural not in (s + "s", s + "es"):
            forms.append((PLURAL, plural))
        forms.append((POSSESSIVE, s + "'s"))
        forms.append((PLURAL_POSSESSIVE, plural + ("'" if plural.endswith("s") else "'s")))
    seen = set()
    out = []
    for kind, v in forms:
        if v not in seen:
            seen.add(v)
            out.append((kind, v))
    return out


def expand_variants(term: GenderedTerm) -> list[VariantRule]:
    """All variant rules for one term, with the counterpart form each maps to."""
    cp = term.counterpart
    rules = []
    for kind, variant in _variant_forms(term):
        fallback = False
        if kind == BARE:
            target = cp
        elif kind == PLURAL:
            if variant == pluralize(term.surface):
                target = pluralize(cp)
            else:
                # Not the canonical plural of the base (e.g. "mans"); keep the suffix as written.
                target = cp + variant[len(term.surface):]
                fallback = True
        elif kind == PLURAL_POSSESSIVE:
            p = pluralize(cp)
            target = p + ("'" if p.endswith("s") else "'s")
        else:
            target = cp + variant[len(term.surface):]
        suffix = variant[len(term.surface):] if variant.startswith(term.surface) else ""
        if variant.startswith(term.surface):
            pattern = _rule_pattern(term.surface, suffix)
        else:
            pattern = _rule_pattern(variant, "")
        rules.append(VariantRule(term.surface, variant, kind, term, target, fallback, pattern))
    return rules


class Lexicon:
    """An immutable, closure-checked set of gendered terms."""

    def __init__(self, terms: Iterable[GenderedTerm] = (), version: str = "unversioned"):
        self.terms = tuple(terms)
        self.version = version
        self._by_surface: dict[str, GenderedTerm] = {}
        for t in self.terms:
            if t.surface in self._by_surface:
                raise LexiconError(f"duplicate surface {t.surface!r}")
            self._by_surface[t.surface] = t
        for t in self.terms:
            other = self._by_surface.get(t.counterpart)
            if other is None:
                raise LexiconError(f"orphan term {t.surface!r}: counterpart {t.counterpart!r} not in lexicon")
            if other.gender == t.gender:
                raise LexiconError(
                    f"term {t.surface!r}: counterpart {t.counterpart!r} has the same gender {t.gender!r}"
                )

    def __len__(self):
        return len(self.terms)

    def __contains__(self, surface):
        return surface in self._by_surface

    def __getitem__(self, surface) -> GenderedTerm:
        return self._by_surface[surface]

    def counterpart(self, term: GenderedTerm | str) -> GenderedTerm:
        surface = term if isinstance(term, str) else term.surface
        return self._by_surface[self._by_surface[surface].counterpart]

    def by_gender(self, gender: str) -> list[GenderedTerm]:
        return [t for t in self.terms if t.gender == gender]

    @cached_property
    def rules(self) -> dict[str, VariantRule]:
        """Variant string -> rule. Bare surfaces win collisions with derived variants."""
        table: dict[str, VariantRule] = {}
        expanded = [expand_variants(t) for t in self.terms]
        for rules in expanded:
            table[rules[0].variant] = rules[0]
        for rules in expanded:
            for r in rules[1:]:
                if r.variant in table:
                    if table[r.variant].term != r.term:
                        logger.debug("variant %r of %r shadowed by %r", r.variant, r.base, table[r.variant].base)
                    continue
                table[r.variant] = r
        return table

    @cached_property
    def _matcher(self) -> re.Pattern | None:
        if not self.terms:
            return None
        alts = set()
        for variant in self.rules:
            for cased in (variant.lower(), variant[:1].upper() + variant[1:], variant.upper()):
                alts.add(cased)
        ordered = sorted(alts, key=lambda s: (-len(s), s))
        return re.compile(r"(?<!\w)(?:" + "|".join(_literal(a) for a in ordered) + r")(?!\w)")

    def match_all(self, text: str) -> list[Match]:
        return match_all(text, self)


def _normalize(surface: str) -> str:
    return surface.lower().replace("’", "'")


def match_all(text: str, lexicon: Lexicon) -> list[Match]:
    """Leftmost-longest, non-overlapping lexicon matches in ``text``.

    Spans are character offsets into ``text``.
    """
    matcher = lexicon._matcher
    if matcher is None or not text:
        return []
    out = []
    for m in matcher.finditer(text):
        rule = lexicon.rules[_normalize(m.group())]
        out.append(Match(m.start(), m.end(), rule.term, m.group(), rule))
    return out


def load_lexicon(path: str | Path) -> Lexicon:
    """Read a lexicon TSV (surface, gender, counterpart, category, pos)."""
    terms = []
    version = Path(path).stem
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if line.startswith("#"):
                m = re.match(r"#\s*version\s*:\s*(\S+)", line)
                if m:
                    version = m.group(1)
                continue
            cols = line.split("\t")
            if len(cols) != 5:
                raise LexiconError(f"expected 5 tab-separated columns, got {len(cols)}", line=lineno)
            try:
                terms.append(GenderedTerm(*(c.strip() for c in cols)))
            except LexiconError as e:
                raise LexiconError(str(e), line=lineno) from None
    return Lexicon(terms, version=version)


def default_lexicon_path() -> Path:
    return Path(str(resources.files("genderleak") / "data" / "lexicon.tsv"))


def default_lexicon() -> Lexicon:
    return load_lexicon(default_lexicon_path())
