"""Shapley-value token attribution.

Players are the distinct in-vocabulary tokens of a letter.  A coalition is
scored by the model's male probability on the letter with every token
outside the coalition replaced by the mask symbol.  For the linear
reference models this value is sigmoid(c + sum of per-token terms), which
makes exact enumeration over 2^n coalitions and prefix sums along sampled
permutations cheap.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .corpus import Corpus, Letter
from .degender import MaskPlan, apply_mask
from .errors import UsageError
from .features import MASK_TOKEN, POS_GROUPS, default_pos_lexicon
from .model import ClassifierModel

EXACT_CAP = 20
DEFAULT_SAMPLES = 2000
BACKGROUND_SIZE = 100


# --- value functions ------------------------------------------------------


class ValueFunction:
    """Maps boolean coalition rows of shape (k, n) to k real values."""

    def __init__(self, n: int):
        self.n = n

    def __call__(self, coalitions: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, members: Sequence[int]) -> float:
        row = np.zeros((1, self.n), dtype=bool)
        row[0, list(members)] = True
        return float(self(row)[0])

    def all_subsets(self) -> np.ndarray:
        """Values of every coalition, indexed by bitmask (bit i set = player i present)."""
        size = 1 << self.n
        out = np.empty(size)
        bits = 1 << np.arange(self.n)
        chunk = 1 << 14
        for start in range(0, size, chunk):
            masks = np.arange(start, min(size, start + chunk))
            out[start:start + masks.size] = self((masks[:, None] & bits) != 0)
        return out

    def permutation_values(self, perms: np.ndarray) -> np.ndarray:
        """Values of the n + 1 prefixes of each permutation; shape (k, n + 1)."""
        k, n = perms.shape
        rows = np.zeros((k, n + 1, n), dtype=bool)
        for j in range(n):
            rows[np.arange(k), j + 1:, perms[:, j]] = True
        return self(rows.reshape(k * (n + 1), n)).reshape(k, n + 1)


class TableValueFunction(ValueFunction):
    """Values given explicitly for all 2^n coalitions (bitmask order)."""

    def __init__(self, table):
        table = np.asarray(table, dtype=np.float64)
        n = int(round(math.log2(table.size)))
        if 1 << n != table.size:
            raise ValueError("table size must be a power of two")
        super().__init__(n)
        self.table = table

    def __call__(self, coalitions):
        masks = (np.asarray(coalitions, dtype=np.int64) << np.arange(self.n)).sum(axis=1)
        return self.table[masks]

    def all_subsets(self):
        return self.table.copy()


class CallableValueFunction(ValueFunction):
    """Wraps ``fn(frozenset_of_player_indices) -> float``."""

    def __init__(self, n: int, fn: Callable[[frozenset], float]):
        super().__init__(n)
        self.fn = fn

    def __call__(self, coalitions):
        return np.array([self.fn(frozenset(np.flatnonzero(row).tolist())) for row in coalitions], dtype=np.float64)


class LogitValueFunction(ValueFunction):
    """v(S) = sigmoid(offset + sum_{i in S} contrib_i)."""

    def __init__(self, offset: float, contrib):
        contrib = np.asarray(contrib, dtype=np.float64)
        super().__init__(contrib.size)
        self.offset = float(offset)
        self.contrib = contrib

    def __call__(self, coalitions):
        return expit(self.offset + np.asarray(coalitions, dtype=np.float64) @ self.contrib)

    def all_subsets(self):
        logits = np.array([self.offset])
        for a in self.contrib:
            logits = np.concatenate([logits, logits + a])
        return expit(logits)

    def permutation_values(self, perms):
        steps = self.contrib[perms]
        logits = np.concatenate([np.zeros((perms.shape[0], 1)), np.cumsum(steps, axis=1)], axis=1)
        return expit(self.offset + logits)


class MaskedTextValueFunction(ValueFunction):
    """Scores coalitions by masking the letter text and re-running the model.

    Works for any model that can score raw texts; slower than the closed form
    used for linear models, and used to cross-check it.
    """

    def __init__(self, model: ClassifierModel, text: str, players: Sequence[str], mask_symbol: str = MASK_TOKEN):
        super().__init__(len(players))
        self.model = model
        self.text = text
        self.players = list(players)
        self.mask_symbol = mask_symbol

    def masked_text(self, row) -> str:
        hidden = {p for p, keep in zip(self.players, row) if not keep}
        if not hidden:
            return self.text
        return apply_mask(self.text, MaskPlan(frozenset(hidden), self.mask_symbol), self.model.tokenizer)

    def __call__(self, coalitions):
        return self.model.predict_proba_texts([self.masked_text(row) for row in coalitions])


@dataclass
class AttributionInstance:
    letter_id: str
    players: list[str]
    value_fn: ValueFunction
    background_value: float | None = None

    def __post_init__(self):
        if len(self.players) != self.value_fn.n:
            raise ValueError("player list and value function disagree on n")


def masked_value_function(
    model: ClassifierModel,
    letter: Letter | str,
    background: Corpus | None = None,
    mask_symbol: str = MASK_TOKEN,
) -> AttributionInstance:
    """Attribution instance whose coalitions keep their tokens and mask the rest."""
    text = letter.text if isinstance(letter, Letter) else letter
    letter_id = letter.id if isinstance(letter, Letter) else ""
    tokenizer = model.tokenizer.with_reserved(mask_symbol)
    index = model.vocab.index
    counts: dict[str, int] = {}
    for tok in tokenizer(text):
        if tok in index:
            counts[tok] = counts.get(tok, 0) + 1
    players = sorted(t for t in counts if t != mask_symbol)
    bg = None
    if background is not None and len(background):
        bg = float(np.mean(model.predict_proba_corpus(background)))
    try:
        w, b = model.linear_weights()
    except UsageError:
        return AttributionInstance(letter_id, players, MaskedTextValueFunction(model, text, players, mask_symbol), bg)
    w_mask = w[index[mask_symbol]] if mask_symbol in index else 0.0
    player_total = sum(counts[p] for p in players)
    fixed = sum(w[index[t]] * c for t, c in counts.items() if t not in players)
    offset = b + fixed + w_mask * player_total
    contrib = np.array([counts[p] * (w[index[p]] - w_mask) for p in players])
    return AttributionInstance(letter_id, players, LogitValueFunction(offset, contrib), bg)


# --- estimators -----------------------------------------------------------


@dataclass
class ShapResult:
    letter_id: str
    players: list[str]
    values: np.ndarray
    base_value: float  # value of the empty coalition
    output: float  # value of the full coalition
    method: str
    n_samples: int | None = None
    seed: int | None = None
    std_errors: np.ndarray | None = None
    background_value: float | None = None

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.players, self.values.tolist()))

    def to_dict(self) -> dict:
        return {
            "letter_id": self.letter_id,
            "method": self.method,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "base_value": self.base_value,
            "output": self.output,
            "background_value": self.background_value,
            "values": self.as_dict(),
            "std_errors": None if self.std_errors is None else dict(zip(self.players, self.std_errors.tolist())),
        }


def _size_weights(n: int) -> np.ndarray:
    """|S|! (n - |S| - 1)! / n! for |S| = 0 .. n-1."""
    return np.array(
        [math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)], dtype=np.float64
    )


def _popcount(masks: np.ndarray, n: int) -> np.ndarray:
    counts = np.zeros(masks.shape, dtype=np.int64)
    for i in range(n):
        counts += (masks >> i) & 1
    return counts


def shapley_exact(instance: AttributionInstance, exact_cap: int = EXACT_CAP) -> ShapResult:
    """Shapley values by enumerating every coalition."""
    n = len(instance.players)
    if n > exact_cap:
        raise ValueError(f"{n} players exceeds exact_cap={exact_cap}; use shapley_sampled instead")
    v = instance.value_fn.all_subsets()
    phi = np.zeros(n)
    if n:
        masks = np.arange(1 << n, dtype=np.int64)
        weights = _size_weights(n)[np.minimum(_popcount(masks, n), n - 1)]
        for i in range(n):
            without = masks[((masks >> i) & 1) == 0]
            phi[i] = np.sum(weights[without] * (v[without | (1 << i)] - v[without]))
    return ShapResult(
        instance.letter_id,
        list(instance.players),
        phi,
        float(v[0]),
        float(v[-1]),
        "exact",
        background_value=instance.background_value,
    )


def shapley_sampled(
    instance: AttributionInstance, n_samples: int = DEFAULT_SAMPLES, seed: int = 0, chunk: int = 500
) -> ShapResult:
    """Monte-Carlo permutation estimator with per-player standard errors."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n = len(instance.players)
    rng = np.random.default_rng(seed)
    total = np.zeros(n)
    total_sq = np.zeros(n)
    empty = full = None
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        perms = np.argsort(rng.random((k, n)), axis=1) if n else np.zeros((k, 0), dtype=np.int64)
        vals = instance.value_fn.permutation_values(perms)
        if empty is None:
            empty, full = float(vals[0, 0]), float(vals[0, -1])
        marg = np.diff(vals, axis=1)
        contrib = np.empty_like(marg)
        np.put_along_axis(contrib, perms, marg, axis=1)
        total += contrib.sum(axis=0)
        total_sq += (contrib**2).sum(axis=0)
        done += k
    mean = total / n_samples
    if n_samples > 1:
        var = np.maximum(total_sq - n_samples * mean**2, 0.0) / (n_samples - 1)
        se = np.sqrt(var / n_samples)
    else:
        se = np.full(n, np.nan)
    return ShapResult(
        instance.letter_id,
        list(instance.players),
        mean,
        empty,
        full,
        "permutation",
        n_samples=n_samples,
        seed=seed,
        std_errors=se,
        background_value=instance.background_value,
    )


def explain(instance: AttributionInstance, exact_cap=EXACT_CAP, n_samples=DEFAULT_SAMPLES, seed=0) -> ShapResult:
    if len(instance.players) <= exact_cap:
        return shapley_exact(instance, exact_cap)
    return shapley_sampled(instance, n_samples, seed)


# --- rankings -------------------------------------------------------------


def derive_seed(seed: int, *tags) -> int:
    h = hashlib.sha256(repr((seed,) + tags).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


class RankRow(NamedTuple):
    token: str
    pos: str
    mean_shap: float
    support: int
    n_letters: int


@dataclass
class TokenRanking:
    direction: str  # "male" (positive mean SHAP) or "female" (negative)
    tables: dict[str, list[RankRow]]
    min_support: int = 20
    k: int = 10

    def tokens(self) -> list[str]:
        out = []
        for rows in self.tables.values():
            out.extend(r.token for r in rows if r.token not in out)
        return out

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "min_support": self.min_support,
            "k": self.k,
            "tables": {pos: [r._asdict() for r in rows] for pos, rows in self.tables.items()},
        }


@dataclass
class RankingRun:
    male: TokenRanking
    female: TokenRanking
    results: list[ShapResult] = field(default_factory=list)

    def __iter__(self):
        return iter((self.male, self.female))


def _background(corpus: Corpus, size: int, seed: int) -> Corpus:
    letters = sorted(corpus, key=lambda x: x.id)
    if len(letters) <= size:
        return Corpus(tuple(letters), corpus.provenance)
    idx = np.sort(np.random.default_rng(seed).choice(len(letters), size=size, replace=False))
    return Corpus(tuple(letters[i] for i in idx), corpus.provenance)


def rank_tokens(
    corpus: Corpus,
    model: ClassifierModel,
    pos_lexicon: dict[str, str] | None = None,
    min_support: int = 20,
    k: int = 10,
    sample_size: int | None = None,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    exact_cap: int = EXACT_CAP,
    background: Corpus | None = None,
    pos_groups: Sequence[str] = POS_GROUPS,
    mask_symbol: str = MASK_TOKEN,
) -> RankingRun:
    """Mean Shapley value per token, split into male/female tables per POS.

    ``support`` is the number of occurrences of the token across the
    attributed letters; tokens below ``min_support`` are dropped.
    """
    pos_lexicon = pos_lexicon if pos_lexicon is not None else default_pos_lexicon()
    letters = sorted(corpus, key=lambda x: x.id)
    if sample_size is not None and sample_size < len(letters):
        idx = np.sort(np.random.default_rng(derive_seed(seed, "letters")).choice(len(letters), sample_size, replace=False))
        letters = [letters[i] for i in idx]
    if background is None:
        background = _background(corpus, BACKGROUND_SIZE, derive_seed(seed, "background"))
    bg_value = float(np.mean(model.predict_proba_corpus(background))) if len(background) else None
    tokenizer = model.tokenizer.with_reserved(mask_symbol)

    sums: dict[str, float] = {}
    n_letters: dict[str, int] = {}
    support: dict[str, int] = {}
    results = []
    for letter in letters:
        inst = masked_value_function(model, letter, None, mask_symbol)
        inst.background_value = bg_value
        for tok in tokenizer(letter.text):
            if tok in model.vocab.index and tok != mask_symbol:
                support[tok] = support.get(tok, 0) + 1
        if not inst.players:
            continue
        res = explain(inst, exact_cap, n_samples, derive_seed(seed, letter.id))
        results.append(res)
        for tok, phi in zip(res.players, res.values):
            sums[tok] = sums.get(tok, 0.0) + float(phi)
            n_letters[tok] = n_letters.get(tok, 0) + 1

    rows = [
        RankRow(t, pos_lexicon.get(t, "other"), sums[t] / n_letters[t], support[t], n_letters[t])
        for t in sorted(sums)
        if support[t] >= min_support
    ]
    male: dict[str, list[RankRow]] = {}
    female: dict[str, list[RankRow]] = {}
    for pos in pos_groups:
        in_pos = [r for r in rows if r.pos == pos]
        male[pos] = sorted((r for r in in_pos if r.mean_shap > 0), key=lambda r: (-r.mean_shap, r.token))[:k]
        female[pos] = sorted((r for r in in_pos if r.mean_shap < 0), key=lambda r: (r.mean_shap, r.token))[:k]
    return RankingRun(
        TokenRanking("male", male, min_support, k),
        TokenRanking("female", female, min_support, k),
        results,
    )
