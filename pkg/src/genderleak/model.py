"""Gender classifiers over bag-of-words counts, and the evaluation metric suite.

Both reference models are linear in token counts: the logistic model
directly, multinomial naive Bayes through its log-likelihood ratio.  The
``external`` kind wraps per-letter probabilities computed elsewhere (for
example by a fine-tuned transformer) so they can be evaluated and used for
subset selection like any other model.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.special import expit

from .corpus import FEMALE, LABELS, MALE, Corpus, Letter
from .errors import DataError, TrainingError, UsageError
from .features import MASK_TOKEN, UNK_TOKEN, Tokenizer, Vocabulary, count_matrix

logger = logging.getLogger(__name__)

KINDS = ("logistic", "naive_bayes", "external")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 40
    l2: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    patience: int = 8
    class_weight: bool = False
    min_count: int = 2
    threshold: float = 0.5

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise UsageError("learning_rate, epochs and batch_size must be positive")
        if self.l2 < 0 or self.patience < 1:
            raise UsageError("l2 must be >= 0 and patience >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown training option(s): {', '.join(sorted(unknown))}")
        return cls(**d)


# --- metrics --------------------------------------------------------------


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    per_class: dict[str, ClassMetrics]
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: list[list[int]]  # confusion[true][pred], index 0 = female, 1 = male

    @property
    def n(self) -> int:
        return sum(map(sum, self.confusion))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n"] = self.n
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d.pop("n", None)
        d["per_class"] = {k: ClassMetrics(**v) for k, v in d["per_class"].items()}
        return cls(**d)


def _div(a: float, b: float) -> float:
    return a / b if b else 0.0


def metrics_from_predictions(y_true, y_pred) -> EvalReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise DataError("need equally sized, nonempty label and prediction vectors")
    conf = [[int(np.sum((y_true == t) & (y_pred == p))) for p in (FEMALE, MALE)] for t in (FEMALE, MALE)]
    n = y_true.size
    per_class = {}
    for c in (FEMALE, MALE):
        tp = conf[c][c]
        predicted = conf[0][c] + conf[1][c]
        support = conf[c][0] + conf[c][1]
        p, r = _div(tp, predicted), _div(tp, support)
        per_class[LABELS[c]] = ClassMetrics(p, r, _div(2 * p * r, p + r), support)
    rows = [per_class["female"], per_class["male"]]
    macro = [sum(getattr(m, k) for m in rows) / 2 for k in ("precision", "recall", "f1")]
    weighted = [sum(getattr(m, k) * m.support for m in rows) / n for k in ("precision", "recall", "f1")]
    return EvalReport(
        per_class=per_class,
        accuracy=(conf[0][0] + conf[1][1]) / n,
        macro_precision=macro[0],
        macro_recall=macro[1],
        macro_f1=macro[2],
        weighted_precision=weighted[0],
        weighted_recall=weighted[1],
        weighted_f1=weighted[2],
        confusion=conf,
    )


def macro_f1(y_true, y_pred) -> float:
    return metrics_from_predictions(y_true, y_pred).macro_f1


# --- models ---------------------------------------------------------------


def vocab_hash(vocab: Vocabulary) -> str:
    return hashlib.sha256("\n".join(vocab.tokens).encode("utf-8")).hexdigest()[:16]


class ClassifierModel:
    kind = "base"

    def __init__(self, vocab: Vocabulary | None, config: TrainConfig | None = None, tokenizer: Tokenizer | None = None):
        self.vocab = vocab
        self.config = config or TrainConfig()
        self.tokenizer = tokenizer or Tokenizer()
        self.history: list[dict] = []

    @property
    def threshold(self) -> float:
        return self.config.threshold

    def linear_weights(self) -> tuple[np.ndarray, float]:
        """(per-token weights, bias) such that proba = sigmoid(counts @ w + b)."""
        raise UsageError(f"{self.kind} models are not linear in token counts")

    def features(self, texts) -> sparse.csr_matrix:
        return count_matrix(texts, self.vocab, self.tokenizer)

    def proba_from_counts(self, X) -> np.ndarray:
        w, b = self.linear_weights()
        return expit(np.asarray(X @ w).ravel() + b)

    def predict_proba_texts(self, texts) -> np.ndarray:
        return self.proba_from_counts(self.features(list(texts)))

    def predict_proba_corpus(self, corpus: Corpus) -> np.ndarray:
        return self.predict_proba_texts(x.text for x in corpus)

    def predict_corpus(self, corpus: Corpus) -> np.ndarray:
        return (self.predict_proba_corpus(corpus) >= self.threshold).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "vocab_hash": vocab_hash(self.vocab) if self.vocab is not None else None,
            "vocab": self.vocab.to_dict() if self.vocab is not None else None,
            "tokenizer": {
                "lowercase": self.tokenizer.lowercase,
                "reserved": sorted(self.tokenizer.reserved),
                "max_tokens": self.tokenizer.max_tokens,
            },
            "config": asdict(self.config),
            "history": self.history,
        }


class LogisticModel(ClassifierModel):
    kind = "logistic"

    def __init__(self, vocab, weights, bias=0.0, config=None, tokenizer=None):
        super().__init__(vocab, config, tokenizer)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        if vocab is not None and self.weights.shape != (len(vocab),):
            raise DataError(f"weight vector has length {self.weights.size}, vocabulary {len(vocab)}")

    def linear_weights(self):
        return self.weights, self.bias

    def to_dict(self):
        d = super().to_dict()
        d["weights"] = self.weights.tolist()
        d["bias"] = self.bias
        return d


class NaiveBayesModel(ClassifierModel):
    kind = "naive_bayes"

    def __init__(self, vocab, log_likelihoods, log_priors, config=None, tokenizer=None):
        super().__init__(vocab, config, tokenizer)
        self.log_likelihoods = np.asarray(log_likelihoods, dtype=np.float64)  # (2, V), row 0 female
        self.log_priors = np.asarray(log_priors, dtype=np.float64)

    def linear_weights(self):
        return self.log_likelihoods[MALE] - self.log_likelihoods[FEMALE], float(
            self.log_priors[MALE] - self.log_priors[FEMALE]
        )

    def to_dict(self):
        d = super().to_dict()
        d["log_likelihoods"] = self.log_likelihoods.tolist()
        d["log_priors"] = self.log_priors.tolist()
        return d


class ExternalModel(ClassifierModel):
    """Probabilities produced outside this package, looked up by letter id."""

    kind = "external"

    def __init__(self, probas: dict[str, float], config=None):
        super().__init__(None, config)
        for k, p in probas.items():
            if not 0.0 <= p <= 1.0:
                raise DataError(f"letter {k!r}: proba_male {p} outside [0, 1]")
        self.probas = dict(probas)

    def predict_proba_corpus(self, corpus):
        missing = [x.id for x in corpus if x.id not in self.probas]
        if missing:
            raise DataError(f"no external probability for letter {missing[0]!r}")
        return np.array([self.probas[x.id] for x in corpus])

    def predict_proba_texts(self, texts):
        raise UsageError("external models only score letters by id")

    def to_dict(self):
        d = super().to_dict()
        d["probas"] = self.probas
        return d


def load_external(path: str | Path, config: TrainConfig | None = None) -> ExternalModel:
    probas = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                probas[str(obj["id"])] = float(obj["proba_male"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise DataError(f"line {lineno}: expected {{\"id\": ..., \"proba_male\": ...}}") from None
    return ExternalModel(probas, config)


def save_model(model: ClassifierModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)
        fh.write("\n")


def model_from_dict(d: dict) -> ClassifierModel:
    kind = d.get("kind")
    config = TrainConfig.from_dict(d.get("config") or {})
    if kind == "external":
        m = ExternalModel(d["probas"], config)
        m.history = d.get("history", [])
        return m
    vocab = Vocabulary.from_dict(d["vocab"])
    if d.get("vocab_hash") and d["vocab_hash"] != vocab_hash(vocab):
        raise DataError("model vocabulary does not match its recorded hash")
    tk = d.get("tokenizer") or {}
    tokenizer = Tokenizer(tk.get("lowercase", True), frozenset(tk.get("reserved", Tokenizer().reserved)), tk.get("max_tokens", 512))
    if kind == "logistic":
        m = LogisticModel(vocab, d["weights"], d["bias"], config, tokenizer)
    elif kind == "naive_bayes":
        m = NaiveBayesModel(vocab, d["log_likelihoods"], d["log_priors"], config, tokenizer)
    else:
        raise DataError(f"unknown model kind {kind!r}")
    m.history = d.get("history", [])
    return m


def load_model(path: str | Path) -> ClassifierModel:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataError(f"model file is not valid JSON: {e.msg}") from None
    return model_from_dict(d)


# --- training -------------------------------------------------------------


def logistic_loss_and_grad(w, b, X, y, l2=0.0, sample_weight=None):
    """Weighted mean log loss plus (l2 / 2) * ||w||^2, with its gradient in (w, b)."""
    y = np.asarray(y, dtype=np.float64)
    s = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    z = np.asarray(X @ w).ravel() + b
    total = s.sum()
    loss = float(np.sum(s * (np.logaddexp(0.0, z) - y * z)) / total + 0.5 * l2 * np.dot(w, w))
    r = s * (expit(z) - y) / total
    grad_w = np.asarray(X.T @ r).ravel() + l2 * w
    return loss, grad_w, float(r.sum())


def _sample_weights(y: np.ndarray, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.ones(y.size)
    counts = np.bincount(y, minlength=2)
    return y.size / (2.0 * counts[y])


def train(
    train_corpus: Corpus,
    val_corpus: Corpus | None,
    config: TrainConfig | None = None,
    vocab: Vocabulary | None = None,
    kind: str = "logistic",
    tokenizer: Tokenizer | None = None,
    ignore=(MASK_TOKEN, UNK_TOKEN),
) -> ClassifierModel:
    """Fit a reference classifier; logistic training keeps the best-validation epoch.

    Tokens in ``ignore`` never enter a freshly built vocabulary, so mask
    symbols carry no weight: otherwise the mask itself would mark where a
    removed token used to be.
    """
    from .features import build_vocab

    config = config or TrainConfig()
    tokenizer = tokenizer or Tokenizer()
    n_f, n_m = train_corpus.class_counts()
    if n_f == 0 or n_m == 0:
        raise TrainingError("training corpus must contain both classes")
    if vocab is None:
        vocab = build_vocab(train_corpus, tokenizer, config.min_count, exclude=ignore)
    if len(vocab) == 0:
        raise TrainingError("vocabulary is empty")
    X = count_matrix((x.text for x in train_corpus), vocab, tokenizer)
    y = train_corpus.labels
    if kind == "naive_bayes":
        return _train_nb(X, y, vocab, config, tokenizer)
    if kind != "logistic":
        raise UsageError(f"cannot train a model of kind {kind!r}")
    return _train_logistic(X, y, val_corpus, vocab, config, tokenizer)


def _train_nb(X, y, vocab, config, tokenizer) -> NaiveBayesModel:
    ll = np.zeros((2, X.shape[1]))
    priors = np.zeros(2)
    for c in (FEMALE, MALE):
        rows = X[y == c]
        counts = np.asarray(rows.sum(axis=0)).ravel()
        ll[c] = np.log(counts + 1.0) - np.log(counts.sum() + X.shape[1])
        priors[c] = np.log(rows.shape[0] / X.shape[0])
    return NaiveBayesModel(vocab, ll, priors, config, tokenizer)


def _train_logistic(X, y, val_corpus, vocab, config, tokenizer) -> LogisticModel:
    rng = np.random.default_rng(config.seed)
    n, d = X.shape
    s = _sample_weights(y, config.class_weight)
    w = np.zeros(d)
    b = 0.0
    if val_corpus is not None and len(val_corpus):
        Xv = count_matrix((x.text for x in val_corpus), vocab, tokenizer)
        yv = val_corpus.labels
    else:
        Xv, yv = X, y
    best = (-1.0, w.copy(), b, 0)
    history = []
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        Xe, ye, se = X[order], y[order], s[order]
        for start in range(0, n, config.batch_size):
            sl = slice(start, start + config.batch_size)
            _, gw, gb = logistic_loss_and_grad(w, b, Xe[sl], ye[sl], config.l2, se[sl])
            w -= config.learning_rate * gw
            b -= config.learning_rate * gb
        loss, _, _ = logistic_loss_and_grad(w, b, X, y, config.l2, s)
        if not np.isfinite(loss) or not np.all(np.isfinite(w)) or not np.isfinite(b):
            raise TrainingError(f"training diverged at epoch {epoch} (non-finite loss)")
        pred = (expit(np.asarray(Xv @ w).ravel() + b) >= config.threshold).astype(np.int64)
        score = macro_f1(yv, pred)
        history.append({"epoch": epoch, "loss": loss, "val_macro_f1": score})
        if score > best[0]:
            best = (score, w.copy(), b, epoch)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    model = LogisticModel(vocab, best[1], best[2], config, tokenizer)
    model.history = history
    logger.debug("logistic: best epoch %d, val macro-F1 %.4f", best[3], best[0])
    return model


# --- prediction and evaluation ------------------------------------------


def _text(letter) -> str:
    return letter.text if isinstance(letter, Letter) else letter


def predict_proba(model: ClassifierModel, letter: Letter | str) -> float:
    """Probability that the letter is about a male applicant."""
    if isinstance(model, ExternalModel):
        if not isinstance(letter, Letter):
            raise UsageError("external models need a Letter with an id")
        return float(model.predict_proba_corpus(Corpus((letter,)))[0])
    return float(model.predict_proba_texts([_text(letter)])[0])


def predict(model: ClassifierModel, letter: Letter | str) -> int:
    """1 (male) iff the probability reaches the threshold; ties go to male."""
    return int(predict_proba(model, letter) >= model.threshold)


def evaluate(model: ClassifierModel, test: Corpus) -> EvalReport:
    if len(test) == 0:
        raise DataError("cannot evaluate on an empty corpus")
    return metrics_from_predictions(test.labels, model.predict_corpus(test))
