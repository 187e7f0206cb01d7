import pytest
from hypothesis import given, settings, strategies as st

from genderleak.corpus import Corpus, Letter
from genderleak.degender import EdgTrace, MaskPlan, apply_edg, apply_mask, apply_replacements, degender_corpus, mask_corpus
from genderleak.features import Tokenizer
from genderleak.lexicon import match_all
from genderleak.synthetic import CueSpec, generate_synthetic


@pytest.mark.parametrize(
    "src, expected",
    [
        ("He is the father of two.", "She is the mother of two."),
        ("She was the president of her sorority.", "She was the president of her sorority."),
        ("Mr. Smith's brothers arrived.", "Ms. Smith's sisters arrived."),
        ("HIS BROTHER'S fraternity", "HER SISTER'S sorority"),
        ("I met him; he’d left his sons' keys.", "I met her; she’d left her daughters' keys."),
        ("The men's team and the man.", "The women's team and the woman."),
        ("theorem, shell, hence", "theorem, shell, hence"),
    ],
)
def test_apply_edg_examples(lexicon, src, expected):
    assert apply_edg(src, lexicon).text == expected


def test_irregular_plural_falls_back_with_warning(lexicon, caplog):
    out = apply_edg("two gentlemans", lexicon).text
    assert out == "two ladys"
    assert "no regular counterpart" in caplog.text


def test_replacements_reproduce_output(lexicon):
    src = "He told his father that Mr. Lee's son is the best."
    res = apply_edg(src, lexicon)
    assert apply_replacements(src, res.replacements) == res.text
    for r in res.replacements:
        assert src[r.start:r.end] == r.original


pieces = st.sampled_from(
    ["he", "He", "HIS", "him", "father", "Fathers", "brother's", "Mr.", "mrs", "sons'", "men", "king", "she", "her",
     "theorem", "x", "himself", "husbands", "boyfriend", "grandfathers", "MEN'S", "he'll", "spokesman"]
)
texts = st.lists(st.tuples(pieces, st.sampled_from([" ", ". ", ", ", "!\n", "—"])), max_size=15).map(
    lambda ps: "".join(a + b for a, b in ps)
)


@settings(max_examples=200, deadline=None)
@given(texts)
def test_edg_complete_idempotent_local(lexicon, text):
    res = apply_edg(text, lexicon)
    assert not [m for m in match_all(res.text, lexicon) if m.term.gender == "male"]
    assert apply_edg(res.text, lexicon).text == res.text
    # locality: every character outside the replacement spans survives untouched
    pos = 0
    rebuilt = []
    for r in res.replacements:
        rebuilt.append(text[pos:r.start])
        rebuilt.append(r.replacement)
        pos = r.end
    rebuilt.append(text[pos:])
    assert "".join(rebuilt) == res.text


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=80))
def test_edg_complete_on_arbitrary_text(lexicon, text):
    out = apply_edg(text, lexicon).text
    assert not [m for m in match_all(out, lexicon) if m.term.gender == "male"]


def test_mask_example():
    plan = MaskPlan(frozenset({"leadership", "impressed"}))
    assert apply_mask("her leadership impressed everyone", plan) == "her [MASK] [MASK] everyone"


def test_mask_whole_word_only():
    assert apply_mask("leaderships", MaskPlan(frozenset({"leadership"}))) == "leaderships"


def test_mask_case_insensitive_by_default():
    assert apply_mask("Leadership, LEADERSHIP.", MaskPlan(frozenset({"leadership"}))) == "[MASK], [MASK]."


def test_mask_match_casing():
    plan = MaskPlan(frozenset({"Leadership"}), match_casing=True)
    assert apply_mask("Leadership leadership", plan) == "[MASK] leadership"


def test_mask_plan_invariants():
    with pytest.raises(ValueError):
        MaskPlan(frozenset())
    with pytest.raises(ValueError):
        MaskPlan(frozenset({"[mask]"}))
    with pytest.raises(ValueError):
        MaskPlan(frozenset({"a"}), mask_symbol="")


def test_unk_symbol():
    assert apply_mask("kind words", MaskPlan(frozenset({"kind"}), "[UNK]")) == "[UNK] words"


@settings(max_examples=150, deadline=None)
@given(st.lists(st.sampled_from(["kind", "Kind", "team", "the", "a,", "FIRST_NAME", "x.y", "kindness"]), max_size=20))
def test_mask_preserves_token_count(words):
    text = " ".join(words)
    tok = Tokenizer(max_tokens=None).with_reserved("[MASK]")
    out = apply_mask(text, MaskPlan(frozenset({"kind", "team"})))
    assert len(tok(out)) == len(tok(text))
    assert "kind" not in tok(out) and "team" not in tok(out)


def _corpus():
    return Corpus((Letter("a", "He is kind.", 1), Letter("b", "She is her mother's pride.", 0)))


def test_degender_corpus_provenance_ids_and_idempotence(lexicon):
    c = _corpus()
    trace = EdgTrace()
    edg = degender_corpus(c, lexicon, trace)
    assert edg.provenance == "edg" and edg.ids == c.ids
    assert edg[0].text == "She is kind."
    assert trace.entries == [{"id": "a", "span": [0, 2], "original": "He", "replacement": "She"}]
    assert degender_corpus(edg, lexicon).letters == edg.letters


def test_mask_corpus_absent_tokens_identity():
    c = _corpus()
    m = mask_corpus(c, MaskPlan(frozenset({"zebra"})))
    assert m.provenance == "masked"
    assert [x.text for x in m] == [x.text for x in c]


def test_synthetic_explicit_corpus_is_fully_degendered(lexicon):
    spec = CueSpec(explicit_terms=(("he", "male"), ("his", "male"), ("she", "female")), letters_per_class=(30, 30))
    corpus, _ = generate_synthetic(spec)
    edg = degender_corpus(corpus, lexicon)
    assert all(m.term.gender != "male" for x in edg for m in match_all(x.text, lexicon))
