"""Auditing gender leakage in de-gendered text classifiers."""

__version__ = "0.1.0"

from .corpus import Corpus, Letter, load_corpus, save_corpus, stratified_split, subsample_majority
from .degender import MaskPlan, apply_edg, apply_mask, degender_corpus, mask_corpus
from .errors import DataError, GenderLeakError, InvariantError, TrainingError, UsageError
from .features import Tokenizer, Vocabulary, build_vocab, gender_tfidf
from .lexicon import Lexicon, default_lexicon, load_lexicon, match_all
from .model import TrainConfig, evaluate, load_model, predict, predict_proba, save_model, train

__all__ = [
    "__version__",
    "Corpus", "Letter", "load_corpus", "save_corpus", "stratified_split", "subsample_majority",
    "MaskPlan", "apply_edg", "apply_mask", "degender_corpus", "mask_corpus",
    "DataError", "GenderLeakError", "InvariantError", "TrainingError", "UsageError",
    "Tokenizer", "Vocabulary", "build_vocab", "gender_tfidf",
    "Lexicon", "default_lexicon", "load_lexicon", "match_all",
    "TrainConfig", "evaluate", "load_model", "predict", "predict_proba", "save_model", "train",
]
