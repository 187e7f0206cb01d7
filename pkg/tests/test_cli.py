import json

import pytest

from genderleak.audit import AuditConfig, check_report, load_config, run_audit
from genderleak.cli import main, tokens_from
from genderleak.corpus import load_corpus, save_corpus
from genderleak.errors import InvariantError, UsageError
from genderleak.model import metrics_from_predictions
from genderleak.report import comparison_markdown, eval_markdown, markdown_table, text_table, use_color
from genderleak.synthetic import demo_spec, generate_synthetic

SMALL = dict(shap_letters=60, shap_samples=200, flip_runs=5, epochs=15, min_support=5, tfidf_min_count=5)


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    corpus, _ = generate_synthetic(demo_spec(150, 150, seed=2))
    path = tmp_path_factory.mktemp("data") / "raw.jsonl"
    save_corpus(corpus, path)
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_pipeline_commands(tmp_path, small_corpus, capsys):
    d = tmp_path
    assert run(["split", small_corpus, d / "s.jsonl", "--seed", 1], capsys)[0] == 0
    assert run(["degender", d / "s.jsonl", d / "e.jsonl", "--trace", d / "t.jsonl"], capsys)[0] == 0
    trace = [json.loads(x) for x in (d / "t.jsonl").read_text().splitlines()]
    assert trace and set(trace[0]) == {"id", "span", "original", "replacement"}
    assert run(["train", d / "e.jsonl", d / "m.json"], capsys)[0] == 0
    code, out, _ = run(["eval", d / "m.json", d / "e.jsonl", d / "ev.json"], capsys)
    assert code == 0 and "Macro F1" in out
    assert json.loads((d / "ev.json").read_text())["n"] == 30
    assert run(["tfidf", d / "e.jsonl", d / "tf.json", "--min-count", 5], capsys)[0] == 0
    code, out, _ = run(["shap", d / "m.json", d / "e.jsonl", d / "sh.json", "--sample-letters", 30, "--samples", 100,
                        "--min-support", 3], capsys)
    assert code == 0 and "Mean SHAP" in out
    assert run(["mask", d / "e.jsonl", d / "mk.jsonl", "--tokens-from", d / "sh.json"], capsys)[0] == 0
    assert "[MASK]" in (d / "mk.jsonl").read_text()
    assert run(["train", d / "mk.jsonl", d / "mm.json", "--kind", "naive_bayes"], capsys)[0] == 0
    code, out, _ = run(["flips", d / "e.jsonl", d / "m.json", d / "mm.json", d / "fl.json", "--tokens-from",
                        d / "sh.json", "--runs", 3], capsys)
    assert code == 0 and "F → M Count" in out
    assert json.loads((d / "fl.json").read_text())["runs"] == 3


def test_synth_command(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"implicit_cues": [{"token": "leadership", "gender": "male", "p": 0.8, "p_other": 0.2}],
                                "letters_per_class": [5, 5]}))
    code, out, _ = run(["synth", spec, tmp_path / "c.jsonl"], capsys)
    assert code == 0 and json.loads(out)["bayes_accuracy"] == pytest.approx(0.8)
    assert len(load_corpus(tmp_path / "c.jsonl")) == 10


def test_deterministic_commands(tmp_path, small_corpus, capsys):
    for name in ("a", "b"):
        run(["split", small_corpus, tmp_path / f"s{name}.jsonl", "--seed", 4], capsys)
        run(["train", tmp_path / f"s{name}.jsonl", tmp_path / f"m{name}.json"], capsys)
    assert (tmp_path / "sa.jsonl").read_bytes() == (tmp_path / "sb.jsonl").read_bytes()
    assert (tmp_path / "ma.json").read_bytes() == (tmp_path / "mb.json").read_bytes()


def error_of(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.mark.parametrize(
    "argv, code",
    [
        (["nope"], 1),
        (["split"], 1),
        (["degender", "/nonexistent/in.jsonl", "out.jsonl"], 2),
        (["split", "{bad}", "x", "--ratios", "0.5,0.5,0.5"], 2),
    ],
)
def test_error_exit_codes(argv, code, capsys, tmp_path, small_corpus):
    argv = [str(small_corpus) if a == "{bad}" else a for a in argv]
    got, _, err = run(argv, capsys)
    assert got == code
    assert error_of(err)["exit_code"] == code


def test_bad_corpus_line_is_data_error(tmp_path, capsys):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "a", "text": "x", "gender": 1}\n{oops\n')
    code, _, err = run(["degender", p, tmp_path / "o.jsonl"], capsys)
    assert code == 2 and "line 2" in error_of(err)["message"]


def test_tokens_from_formats(tmp_path):
    (tmp_path / "a.txt").write_text("# tokens\nkind\n\nteam\n")
    assert tokens_from(tmp_path / "a.txt") == ["kind", "team"]
    (tmp_path / "b.json").write_text(json.dumps({"male": {"tables": {"noun": [{"token": "lead", "mean_shap": 1}]}},
                                                 "female": {"tables": {"noun": [{"token": "kind"}]}}}))
    assert tokens_from(tmp_path / "b.json") == ["lead", "kind"]
    (tmp_path / "c.json").write_text(json.dumps({"tables": {"male": {"noun": [{"token": "x"}]}}, "rows": [{"token": "y"}]}))
    assert tokens_from(tmp_path / "c.json") == ["x"]


def test_version(capsys):
    assert main(["--version"]) == 0


def test_config_loading(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("seed = 5\nflip_runs = 7\n")
    cfg = load_config(p, seed=9)
    assert cfg.seed == 9 and cfg.flip_runs == 7
    p.write_text("bogus = 1\n")
    with pytest.raises(UsageError):
        load_config(p)
    p.write_text("[table]\nx = 1\n")
    with pytest.raises(UsageError):
        load_config(p)


def test_report_tables():
    r = metrics_from_predictions([0, 0, 1, 1], [0, 1, 1, 1])
    md = eval_markdown({"EDG": r})
    assert md.splitlines()[0].startswith("| Model | Gender | Precision")
    assert "| EDG | Female |" in md and "|  | Male |" in md
    cmp = comparison_markdown({"EDG (baseline)": r, "EDG w/o SHAP Tokens": metrics_from_predictions([0, 0, 1, 1], [1, 1, 1, 1])}, "EDG (baseline)")
    assert "↓" in cmp
    assert markdown_table(["a"], [[0.5]]) == "| a |\n|---|\n| 0.500 |"
    assert "\033" not in text_table(["a", "b"], [["x", 1.0]])


def test_no_color(monkeypatch):
    import io

    class Tty(io.StringIO):
        def isatty(self):
            return True

    monkeypatch.setenv("NO_COLOR", "1")
    assert not use_color(Tty())
    monkeypatch.delenv("NO_COLOR")
    assert use_color(Tty())


def _strip_time(obj):
    obj = dict(obj)
    obj.pop("generated_at", None)
    return obj


def test_audit_small(tmp_path, small_corpus):
    corpus = load_corpus(small_corpus)
    config = AuditConfig(seed=1, **SMALL)
    a = run_audit(corpus, tmp_path / "a", config=config, timestamp="2000-01-01T00:00:00Z")
    run_audit(corpus, tmp_path / "b", config=config, timestamp="2001-01-01T00:00:00Z")
    ja = json.loads((tmp_path / "a" / "audit_report.json").read_text())
    jb = json.loads((tmp_path / "b" / "audit_report.json").read_text())
    assert ja["generated_at"] != jb["generated_at"]
    assert _strip_time(ja) == _strip_time(jb)
    assert set(a["evaluations"]) == {"original", "edg", "edg_minus_shap", "edg_minus_tfidf"}
    assert a["evaluations"]["original"]["accuracy"] >= 0.99
    for tag, delta in a["deltas"].items():
        ev = a["evaluations"]
        assert delta["macro_f1"] == pytest.approx(ev[tag]["macro_f1"] - ev[delta["reference"]]["macro_f1"], abs=1e-9)
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    names = {f["file"] for f in manifest["files"]}
    assert {"audit_report.json", "audit_report.md", "tfidf_report.json", "shap_ranking.json", "flips_shap.json",
            "flips_tfidf.json", "model_edg.json"} <= names
    md = (tmp_path / "a" / "audit_report.md").read_text()
    for heading in ("Dataset comparison", "SHAP token rankings", "TF-IDF tokens", "Prediction flips"):
        assert heading in md


def test_check_report_catches_inconsistency():
    ev = {"a": {"accuracy": 0.5, "macro_precision": 0.5, "macro_recall": 0.5, "macro_f1": 0.5},
          "b": {"accuracy": 0.6, "macro_precision": 0.6, "macro_recall": 0.6, "macro_f1": 0.6}}
    report = {
        "evaluations": ev,
        "deltas": {"b": {"reference": "a", "accuracy": 0.1, "macro_precision": 0.1, "macro_recall": 0.1, "macro_f1": 0.2}},
        "macro_f1_deltas": {"b": 0.2},
        "stages": {"a": {"provenance": "real"}, "b": {"provenance": "edg"}},
    }
    with pytest.raises(InvariantError):
        check_report(report)


def test_audit_failure_writes_partial_manifest(tmp_path, small_corpus, monkeypatch):
    import genderleak.audit

    def boom(*args, **kwargs):
        raise InvariantError("simulated")

    monkeypatch.setattr(genderleak.audit, "gender_tfidf", boom)
    with pytest.raises(InvariantError):
        run_audit(load_corpus(small_corpus), tmp_path / "x", config=AuditConfig(**SMALL))
    manifest = json.loads((tmp_path / "x" / "manifest.json").read_text())
    assert manifest["status"] == "partial" and "simulated" in manifest["error"]
    assert {f["file"] for f in manifest["files"]} >= {"corpus_edg.jsonl", "model_edg.json"}
    assert not (tmp_path / "x" / "audit_report.json").exists()


def test_audit_command(tmp_path, small_corpus, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("\n".join(f"{k} = {v}" for k, v in SMALL.items()) + "\n")
    code, out, _ = run(["audit", small_corpus, tmp_path / "out", "--seed", 3, "--config", cfg], capsys)
    assert code == 0
    assert set(json.loads(out)["macro_f1"]) == {"original", "edg", "edg_minus_shap", "edg_minus_tfidf"}
