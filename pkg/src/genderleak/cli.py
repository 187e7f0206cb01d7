"""Command-line entry point: ``genderleak <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from . import report as rpt
from .attribution import DEFAULT_SAMPLES, EXACT_CAP, rank_tokens
from .audit import load_config, run_audit
from .corpus import load_corpus, save_corpus, stratified_split
from .degender import EdgTrace, MaskPlan, degender_corpus, mask_corpus
from .errors import DataError, GenderLeakError, UsageError
from .features import MASK_TOKEN, UNK_TOKEN, Tokenizer, default_pos_lexicon, gender_tfidf, load_pos_lexicon
from .flip import FlipConfig, flip_analysis
from .lexicon import default_lexicon, load_lexicon
from .model import TrainConfig, evaluate, load_external, load_model, save_model, train
from .synthetic import CueSpec, demo_spec, generate_synthetic

logger = logging.getLogger("genderleak")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON: {e.msg}") from None


def _lexicon(path):
    return load_lexicon(path) if path else default_lexicon()


def _pos(path):
    return load_pos_lexicon(path) if path else default_pos_lexicon()


def _model(path):
    """A saved model, or precomputed probabilities when the file is JSON lines."""
    if str(path).endswith(".jsonl"):
        return load_external(path)
    return load_model(path)


def _train_config(path) -> TrainConfig:
    if not path:
        return TrainConfig()
    from .audit import tomllib

    with open(path, "rb") as fh:
        try:
            d = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise UsageError(f"config {path}: {e}") from None
    keys = set(TrainConfig.__dataclass_fields__)
    return TrainConfig.from_dict({k: v for k, v in d.items() if k in keys})


def tokens_from(path) -> list[str]:
    """Tokens from a plain list (one per line) or any JSON report with token tables."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        return [t.strip() for t in text.splitlines() if t.strip() and not t.lstrip().startswith("#")]
    out: list[str] = []

    def walk(o):
        if isinstance(o, dict):
            if "token" in o and isinstance(o["token"], str):
                out.append(o["token"])
                return
            for key, v in o.items():
                if key != "rows" or "tables" not in o:
                    walk(v)
        elif isinstance(o, list):
            for v in o:
                if isinstance(v, str):
                    out.append(v)
                else:
                    walk(v)

    walk(obj)
    tokens = list(dict.fromkeys(out))
    if not tokens:
        raise DataError(f"{path}: no tokens found")
    return tokens


# --- commands -------------------------------------------------------------


def cmd_degender(args):
    corpus = load_corpus(args.input)
    trace = EdgTrace() if args.trace else None
    out = degender_corpus(corpus, _lexicon(args.lexicon), trace)
    save_corpus(out, args.output)
    if trace is not None:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as fh:
            for entry in trace.entries:
                fh.write(json.dumps(entry, ensure_ascii=False, separators=(",", ":")) + "\n")
    logger.info("de-gendered %d letters", len(out))


def cmd_synth(args):
    if args.spec == "demo":
        spec = demo_spec(seed=args.seed if args.seed is not None else 0)
    else:
        d = _read_json(args.spec)
        if args.seed is not None:
            d["seed"] = args.seed
        spec = CueSpec.from_dict(d)
    corpus, bayes = generate_synthetic(spec)
    save_corpus(corpus, args.output)
    print(json.dumps({"letters": len(corpus), "bayes_accuracy": bayes}))


def cmd_split(args):
    ratios = tuple(float(x) for x in args.ratios.split(","))
    corpus = stratified_split(load_corpus(args.input), ratios, args.seed)
    save_corpus(corpus, args.output)


def cmd_train(args):
    corpus = load_corpus(args.input)
    config = _train_config(args.config)
    if args.seed is not None:
        config = TrainConfig.from_dict({**config.__dict__, "seed": args.seed})
    tokenizer = Tokenizer().with_reserved(args.mask_symbol)
    ignore = (MASK_TOKEN, UNK_TOKEN, args.mask_symbol)
    model = train(corpus.split("train"), corpus.split("val"), config, kind=args.kind, tokenizer=tokenizer, ignore=ignore)
    save_model(model, args.model_out)


def cmd_eval(args):
    model = _model(args.model)
    corpus = load_corpus(args.input)
    test = corpus.split(args.split) if args.split != "all" else corpus
    report = evaluate(model, test)
    _write_json(args.report_out, report.to_dict())
    print(rpt.text_table(rpt.EVAL_HEADER, rpt.eval_rows(args.name, report), color=rpt.use_color()))


def cmd_tfidf(args):
    corpus = load_corpus(args.input)
    corpus = corpus.split(args.split) if args.split != "all" else corpus
    report = gender_tfidf(corpus, Tokenizer().with_reserved(MASK_TOKEN), _pos(args.pos_lexicon), args.top_k, args.min_count)
    _write_json(args.report_out, report.to_dict())
    print(rpt.tfidf_sections(report, markdown=False))


def cmd_shap(args):
    model = load_model(args.model)
    corpus = load_corpus(args.input)
    corpus = corpus.split(args.split) if args.split != "all" else corpus
    run = rank_tokens(
        corpus,
        model,
        _pos(args.pos_lexicon),
        min_support=args.min_support,
        k=args.top_k,
        sample_size=args.sample_letters,
        n_samples=args.samples,
        seed=args.seed,
        exact_cap=args.exact_cap,
        mask_symbol=args.mask_symbol,
    )
    obj = {"male": run.male.to_dict(), "female": run.female.to_dict()}
    if args.per_letter:
        obj["letters"] = [r.to_dict() for r in run.results]
    _write_json(args.report_out, obj)
    print(rpt.ranking_sections(run.male, run.female, markdown=False))


def cmd_mask(args):
    corpus = load_corpus(args.input)
    plan = MaskPlan(frozenset(tokens_from(args.tokens_from)), args.mask_symbol)
    out = mask_corpus(corpus, plan, Tokenizer().with_reserved(args.mask_symbol))
    save_corpus(out, args.output)


def cmd_flips(args):
    corpus = load_corpus(args.edg_corpus, provenance="edg")
    corpus = corpus.split(args.split) if args.split != "all" else corpus
    model_edg = load_model(args.edg_model)
    model_masked = _model(args.masked_model)
    if args.tokens_from:
        tokens = tokens_from(args.tokens_from)
    else:
        tokens = list(model_edg.vocab.tokens[: args.top_vocab])
    masked = None
    if args.masked_corpus:
        masked = load_corpus(args.masked_corpus, provenance="masked")
    elif args.tokens_from:
        masked = MaskPlan(frozenset(tokens), args.mask_symbol)
    config = FlipConfig(tuple(tokens), args.runs, args.seed, args.subset_rule, args.mask_symbol)
    table = flip_analysis(corpus, model_edg, model_masked, config, masked)
    _write_json(args.report_out, table.to_dict())
    print(rpt.text_table(rpt.FLIP_HEADER, rpt.flip_rows(table, None), digits=2, color=rpt.use_color()))


def cmd_audit(args):
    config = load_config(args.config, seed=args.seed, shap_letters=args.sample_letters, flip_runs=args.runs)
    corpus = load_corpus(args.input)
    report = run_audit(corpus, args.out_dir, _lexicon(args.lexicon), config)
    summary = {k: v["macro_f1"] for k, v in report["evaluations"].items()}
    print(json.dumps({"out_dir": str(args.out_dir), "macro_f1": summary}))


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="genderleak", description="Measure and mitigate gender leakage in evaluative text.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("degender", help="replace male terms with female counterparts")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--lexicon", help="gendered-term lexicon TSV (default: shipped lexicon)")
    s.add_argument("--trace", help="write replacements as JSON lines to this file")
    s.set_defaults(func=cmd_degender)

    s = sub.add_parser("synth", help="generate a synthetic corpus from a cue spec")
    s.add_argument("spec", help="CueSpec JSON file, or 'demo'")
    s.add_argument("output")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", help="assign stratified train/val/test splits")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--ratios", default="0.8,0.1,0.1")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train a classifier on the train split")
    s.add_argument("input")
    s.add_argument("model_out")
    s.add_argument("--kind", choices=("logistic", "naive_bayes"), default="logistic")
    s.add_argument("--config", help="flat TOML file with training options")
    s.add_argument("--seed", type=int)
    s.add_argument("--mask-symbol", default=MASK_TOKEN)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a model on a split")
    s.add_argument("model", help="model JSON, or JSON lines of precomputed probabilities")
    s.add_argument("input")
    s.add_argument("report_out")
    s.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    s.add_argument("--name", default="model")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("tfidf", help="gender-discriminative tokens by TF-IDF")
    s.add_argument("input")
    s.add_argument("report_out")
    s.add_argument("--pos-lexicon")
    s.add_argument("--top-k", type=int, default=10)
    s.add_argument("--min-count", type=int, default=20)
    s.add_argument("--split", default="train", choices=("train", "val", "test", "all"))
    s.set_defaults(func=cmd_tfidf)

    s = sub.add_parser("shap", help="mean Shapley value token rankings")
    s.add_argument("model")
    s.add_argument("input")
    s.add_argument("report_out")
    s.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    s.add_argument("--min-support", type=int, default=20)
    s.add_argument("--sample-letters", type=int)
    s.add_argument("--top-k", type=int, default=10)
    s.add_argument("--exact-cap", type=int, default=EXACT_CAP)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pos-lexicon")
    s.add_argument("--split", default="train", choices=("train", "val", "test", "all"))
    s.add_argument("--mask-symbol", default=MASK_TOKEN)
    s.add_argument("--per-letter", action="store_true", help="include every letter's attribution")
    s.set_defaults(func=cmd_shap)

    s = sub.add_parser("mask", help="mask tokens throughout a corpus")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--tokens-from", required=True, help="token list (one per line) or a tfidf/shap report")
    s.add_argument("--mask-symbol", default=MASK_TOKEN)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("flips", help="single-token prediction-flip analysis")
    s.add_argument("edg_corpus")
    s.add_argument("edg_model")
    s.add_argument("masked_model")
    s.add_argument("report_out")
    s.add_argument("--tokens-from", help="candidate tokens; also defines the masking for subset selection")
    s.add_argument("--masked-corpus", help="masked copy of the corpus scored by the masked model")
    s.add_argument("--top-vocab", type=int, default=50, help="candidates when --tokens-from is absent")
    s.add_argument("--runs", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--subset-rule", choices=("paper_rule", "all_letters"), default="paper_rule")
    s.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    s.add_argument("--mask-symbol", default=MASK_TOKEN)
    s.set_defaults(func=cmd_flips)

    s = sub.add_parser("audit", help="run the full pipeline and write all reports")
    s.add_argument("input")
    s.add_argument("out_dir")
    s.add_argument("--lexicon")
    s.add_argument("--seed", type=int)
    s.add_argument("--config", help="flat TOML file; keys mirror the audit options")
    s.add_argument("--sample-letters", type=int, help="letters attributed with SHAP (0 = all)")
    s.add_argument("--runs", type=int, help="flip-analysis runs")
    s.set_defaults(func=cmd_audit)
    return p


def _fail(exc: BaseException, code: int, kind: str) -> int:
    msg = " ".join(str(exc).split()) or kind
    sys.stderr.write(json.dumps({"error": kind, "message": msg, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail(e, e.exit_code, "UsageError")
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except GenderLeakError as e:
        return _fail(e, e.exit_code, type(e).__name__)
    except FileNotFoundError as e:
        return _fail(e, 2, "DataError")
    except (IsADirectoryError, PermissionError) as e:
        return _fail(e, 1, "UsageError")
    except ValueError as e:
        return _fail(e, 1, "UsageError")
    except Exception as e:  # pragma: no cover - last-resort guard
        return _fail(e, 3, type(e).__name__)
    return 0


if __name__ == "__main__":
    sys.exit(main())
