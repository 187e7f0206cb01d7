"""End-to-end audit: baseline, explicit de-gendering, attribution, masking, flips."""

from __future__ import annotations

import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .attribution import DEFAULT_SAMPLES, EXACT_CAP, derive_seed, rank_tokens
from .corpus import Corpus, save_corpus, stratified_split
from .degender import MaskPlan, degender_corpus, mask_corpus
from .errors import InvariantError, UsageError
from .features import MASK_TOKEN, UNK_TOKEN, Tokenizer, gender_tfidf, load_pos_lexicon, default_pos_lexicon
from .flip import FlipConfig, flip_analysis
from .lexicon import Lexicon, default_lexicon, match_all
from .model import TrainConfig, evaluate, save_model, train
from . import report as rpt

logger = logging.getLogger(__name__)

CONDITIONS = ("original", "edg", "edg_minus_shap", "edg_minus_tfidf")
CONDITION_TITLES = {
    "original": "Original (non-EDG)",
    "edg": "EDG (baseline)",
    "edg_minus_shap": "EDG w/o SHAP Tokens",
    "edg_minus_tfidf": "EDG w/o TF-IDF Tokens",
}


@dataclass
class AuditConfig:
    seed: int = 0
    kind: str = "logistic"
    ratios: tuple = (0.8, 0.1, 0.1)
    # classifier
    learning_rate: float = 0.01
    epochs: int = 40
    l2: float = 1e-3
    batch_size: int = 32
    patience: int = 8
    class_weight: bool = False
    min_count: int = 2
    # attribution and selection
    top_k: int = 10
    min_support: int = 20
    tfidf_min_count: int = 20
    shap_samples: int = DEFAULT_SAMPLES
    shap_letters: int | None = 500
    exact_cap: int = EXACT_CAP
    analysis_split: str = "train"
    mask_symbol: str = MASK_TOKEN
    pos_lexicon: str | None = None
    # flips
    flip_runs: int = 50
    flip_split: str = "test"

    def __post_init__(self):
        self.ratios = tuple(self.ratios)
        if self.analysis_split not in ("train", "val", "test", "all"):
            raise UsageError(f"analysis_split must be train, val, test or all, not {self.analysis_split!r}")
        if self.flip_split not in ("train", "val", "test", "all"):
            raise UsageError(f"flip_split must be train, val, test or all, not {self.flip_split!r}")
        if self.shap_letters is not None and self.shap_letters <= 0:
            self.shap_letters = None

    def stage_seed(self, tag: str) -> int:
        return derive_seed(self.seed, tag) % (2**32)

    def train_config(self, tag: str) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            l2=self.l2,
            batch_size=self.batch_size,
            seed=self.stage_seed("train:" + tag),
            patience=self.patience,
            class_weight=self.class_weight,
            min_count=self.min_count,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "AuditConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)


def load_config(path: str | Path | None, **overrides) -> AuditConfig:
    """Flat key = value TOML; every key optional.  Non-None overrides win."""
    d = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                d = tomllib.load(fh)
            except tomllib.TOMLDecodeError as e:
                raise UsageError(f"config {path}: {e}") from None
        nested = [k for k, v in d.items() if isinstance(v, dict)]
        if nested:
            raise UsageError(f"config must be flat; found table(s) {', '.join(nested)}")
    d.update({k: v for k, v in overrides.items() if v is not None})
    return AuditConfig.from_dict(d)


def _pick(corpus: Corpus, split: str) -> Corpus:
    return corpus if split == "all" else corpus.split(split)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class _Outputs:
    """Tracks written artifacts so a failed run leaves an honest manifest."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: list[dict] = []

    def path(self, name: str) -> Path:
        return self.dir / name

    def record(self, name: str, stage: str):
        self.files.append({"file": name, "stage": stage})

    def write_json(self, name: str, obj, stage: str):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(obj, fh, indent=2, ensure_ascii=False)
            fh.write("\n")
        self.record(name, stage)

    def manifest(self, status: str, error: str | None = None, timestamp: str | None = None):
        entries = [dict(f, sha256=_sha256(self.path(f["file"]))) for f in self.files]
        obj = {"status": status, "error": error, "generated_at": timestamp, "files": entries}
        with open(self.path("manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")


def run_audit(
    corpus: Corpus,
    out_dir: str | Path,
    lexicon: Lexicon | None = None,
    config: AuditConfig | None = None,
    timestamp: str | None = None,
) -> dict:
    """Run every stage, write artifacts under ``out_dir`` and return the report dict."""
    config = config or AuditConfig()
    lexicon = lexicon if lexicon is not None else default_lexicon()
    pos_lexicon = load_pos_lexicon(config.pos_lexicon) if config.pos_lexicon else default_pos_lexicon()
    out = _Outputs(Path(out_dir))
    out.dir.mkdir(parents=True, exist_ok=True)
    timestamp = timestamp or datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    try:
        result = _run(corpus, lexicon, pos_lexicon, config, out, timestamp)
    except Exception as e:
        out.manifest("partial", f"{type(e).__name__}: {e}", timestamp)
        raise
    out.manifest("complete", None, timestamp)
    return result


def _run(corpus, lexicon, pos_lexicon, config: AuditConfig, out: _Outputs, timestamp: str) -> dict:
    t0 = time.perf_counter()
    tokenizer = Tokenizer().with_reserved(config.mask_symbol)
    stages = {}

    # 1. corpus construction
    raw = stratified_split(corpus, config.ratios, config.stage_seed("split"))
    save_corpus(raw, out.path("corpus_split.jsonl"))
    out.record("corpus_split.jsonl", "split")

    # 2. baseline on raw text, then explicit de-gendering
    edg = degender_corpus(raw, lexicon)
    residual = sum(1 for x in edg for m in match_all(x.text, lexicon) if m.term.gender == "male")
    if residual:
        raise InvariantError(f"{residual} male-term matches remain after de-gendering")
    save_corpus(edg, out.path("corpus_edg.jsonl"))
    out.record("corpus_edg.jsonl", "degender")

    models = {}
    reports = {}

    def fit(tag: str, data: Corpus):
        m = train(
            data.split("train"), data.split("val"), config.train_config(tag), kind=config.kind, tokenizer=tokenizer,
            ignore=(MASK_TOKEN, UNK_TOKEN, config.mask_symbol),
        )
        save_model(m, out.path(f"model_{tag}.json"))
        out.record(f"model_{tag}.json", "train")
        models[tag] = m
        reports[tag] = evaluate(m, data.split("test"))
        stages[tag] = {"provenance": data.provenance, "train": len(data.split("train")), "test": len(data.split("test"))}

    fit("original", raw)
    fit("edg", edg)

    # 3. interpretability audit on the EDG data
    analysis = _pick(edg, config.analysis_split)
    tfidf = gender_tfidf(analysis, tokenizer, pos_lexicon, config.top_k, config.tfidf_min_count)
    out.write_json("tfidf_report.json", tfidf.to_dict(), "tfidf")
    ranking = rank_tokens(
        analysis,
        models["edg"],
        pos_lexicon,
        min_support=config.min_support,
        k=config.top_k,
        sample_size=config.shap_letters,
        n_samples=config.shap_samples,
        seed=config.stage_seed("shap"),
        exact_cap=config.exact_cap,
        background=None,
        mask_symbol=config.mask_symbol,
    )
    out.write_json(
        "shap_ranking.json",
        {"male": ranking.male.to_dict(), "female": ranking.female.to_dict(), "letters_attributed": len(ranking.results)},
        "shap",
    )

    # 4. implicit de-gendering with each token set, then re-training
    token_sets = {"shap": ranking.male.tokens() + ranking.female.tokens(), "tfidf": tfidf.top_tokens()}
    plans = {}
    for name, tokens in token_sets.items():
        tag = f"edg_minus_{name}"
        tokens = [t for t in tokens if t.lower() != config.mask_symbol.lower()]
        if not tokens:
            logger.warning("no %s tokens selected; masked corpus equals EDG", name)
            masked = Corpus(edg.letters, "masked")
            plans[name] = None
        else:
            plans[name] = MaskPlan(frozenset(tokens), config.mask_symbol)
            masked = mask_corpus(edg, plans[name], tokenizer)
        save_corpus(masked, out.path(f"corpus_{tag}.jsonl"))
        out.record(f"corpus_{tag}.jsonl", "mask")
        fit(tag, masked)

    # 5. flip analysis per token source
    flips = {}
    flip_corpus = _pick(edg, config.flip_split)
    for name, tokens in token_sets.items():
        if not tokens:
            flips[name] = None
            continue
        table = flip_analysis(
            flip_corpus,
            models["edg"],
            models[f"edg_minus_{name}"],
            FlipConfig(tuple(tokens), config.flip_runs, config.stage_seed(f"flip:{name}"), mask_symbol=config.mask_symbol),
            masked=plans[name],
        )
        flips[name] = table
        out.write_json(f"flips_{name}.json", table.to_dict(), "flips")

    deltas = {}
    for tag in ("edg", "edg_minus_shap", "edg_minus_tfidf"):
        ref = "original" if tag == "edg" else "edg"
        deltas[tag] = {
            "reference": ref,
            "accuracy": reports[tag].accuracy - reports[ref].accuracy,
            "macro_precision": reports[tag].macro_precision - reports[ref].macro_precision,
            "macro_recall": reports[tag].macro_recall - reports[ref].macro_recall,
            "macro_f1": reports[tag].macro_f1 - reports[ref].macro_f1,
        }

    report = {
        "tool": "genderleak",
        "tool_version": __version__,
        "generated_at": timestamp,
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(config).items()},
        "seeds": {
            "global": config.seed,
            "split": config.stage_seed("split"),
            "shap": config.stage_seed("shap"),
            **{f"train:{t}": config.stage_seed("train:" + t) for t in CONDITIONS},
            **{f"flip:{n}": config.stage_seed(f"flip:{n}") for n in token_sets},
        },
        "lexicon_version": lexicon.version,
        "corpus": {
            "provenance": corpus.provenance,
            "letters": len(corpus),
            "class_counts": dict(zip(("female", "male"), corpus.class_counts())),
        },
        "stages": stages,
        "evaluations": {tag: reports[tag].to_dict() for tag in CONDITIONS},
        "macro_f1_deltas": {k: v["macro_f1"] for k, v in deltas.items()},
        "deltas": deltas,
        "tfidf": tfidf.to_dict()["tables"],
        "shap_rankings": {"male": ranking.male.to_dict(), "female": ranking.female.to_dict()},
        "masked_tokens": {k: sorted(v) for k, v in token_sets.items()},
        "flips": {k: (v.to_dict() if v is not None else None) for k, v in flips.items()},
    }
    check_report(report)
    out.write_json("audit_report.json", report, "report")
    with open(out.path("audit_report.md"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_markdown(report, reports, tfidf, ranking, flips))
    out.record("audit_report.md", "report")
    logger.info("audit finished in %.1fs", time.perf_counter() - t0)
    return report


def check_report(report: dict, tol: float = 1e-9) -> None:
    """Deltas must be recomputable from the contained evaluations."""
    ev = report["evaluations"]
    for tag, d in report["deltas"].items():
        for key in ("accuracy", "macro_precision", "macro_recall", "macro_f1"):
            expected = ev[tag][key] - ev[d["reference"]][key]
            if abs(expected - d[key]) > tol:
                raise InvariantError(f"delta {tag}.{key} inconsistent with evaluations")
        if abs(report["macro_f1_deltas"][tag] - d["macro_f1"]) > tol:
            raise InvariantError(f"macro_f1_deltas[{tag}] inconsistent")
    for tag in ev:
        if tag not in report["stages"] or "provenance" not in report["stages"][tag]:
            raise InvariantError(f"stage {tag} has no input provenance")


def render_markdown(report, reports, tfidf, ranking, flips) -> str:
    titled = {CONDITION_TITLES[t]: reports[t] for t in CONDITIONS}
    parts = [
        "# Gender leakage audit",
        f"Tool version {report['tool_version']}, seed {report['seeds']['global']}, "
        f"{report['corpus']['letters']} letters "
        f"({report['corpus']['class_counts']['female']} female / {report['corpus']['class_counts']['male']} male).",
        "## Classification on EDG test data",
        rpt.eval_markdown({"EDG (baseline)": reports["edg"]}),
        "## Dataset comparison",
        rpt.comparison_markdown(titled, "EDG (baseline)"),
        "## SHAP token rankings",
        rpt.ranking_sections(ranking.male, ranking.female),
        "## TF-IDF tokens",
        rpt.tfidf_sections(tfidf),
    ]
    for name, title in (("tfidf", "TF-IDF derived tokens"), ("shap", "SHAP derived tokens")):
        parts.append(f"## Prediction flips: {title}")
        table = flips.get(name)
        parts.append(rpt.flip_markdown(table) if table is not None and table.rows else "_No letters in the flip subset._")
    return "\n\n".join(parts) + "\n"
