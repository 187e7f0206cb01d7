import pytest
from hypothesis import given, settings, strategies as st

from flip_fixtures import WEIGHTS, brute_force, crafted, masked_model, model, score
from genderleak.corpus import Corpus, Letter
from genderleak.degender import MaskPlan
from genderleak.flip import FlipConfig, count_flips, flip_analysis, select_subset
from genderleak.model import ExternalModel


def test_crafted_subset_membership_by_hand():
    c = crafted()
    me, mm = model(), masked_model()
    expected = [
        x.id for x in c
        if (score(x.text, WEIGHTS) >= 0.5) == bool(x.gender)
        and (score(x.text, {**WEIGHTS, "research": -2.0, "team": 2.5}) >= 0.5) != bool(x.gender)
    ]
    assert select_subset(c, me, mm).ids == expected
    f, m = select_subset(c, me, mm).class_counts()
    assert f > 0 and m > 0 and f != m


def test_flip_analysis_matches_brute_force():
    c = crafted()
    tokens = tuple(WEIGHTS)
    cfg = FlipConfig(tokens, runs=4, seed=9)
    table = flip_analysis(c, model(), masked_model(), cfg)
    subset = select_subset(c, model(), masked_model())
    oracle = brute_force(subset, WEIGHTS, tokens, 4, 9)
    assert {r.token: (r.f_to_m, r.m_to_f) for r in table.rows} == oracle
    assert table.subset_size == len(subset)
    for r in table.rows:
        assert abs(r.abs_diff - abs(r.f_to_m - r.m_to_f)) <= 1e-9
    assert [r.abs_diff for r in table.rows] == sorted((r.abs_diff for r in table.rows), reverse=True)


def test_positive_weights_only_flip_male_to_female():
    c = crafted()
    table = flip_analysis(c, model(), masked_model(), FlipConfig(tuple(WEIGHTS), runs=6, seed=1, subset_rule="all_letters"))
    for r in table.rows:
        if WEIGHTS[r.token] > 0:
            assert r.f_to_m == 0
        else:
            assert r.m_to_f == 0


def test_deterministic():
    c = crafted()
    cfg = FlipConfig(tuple(WEIGHTS), runs=5, seed=3)
    assert flip_analysis(c, model(), masked_model(), cfg) == flip_analysis(c, model(), masked_model(), cfg)


def test_runs_one_on_balanced_subset_gives_integer_counts():
    balanced = Corpus(crafted().letters[4:], "edg")
    assert balanced.class_counts() == (8, 8)
    cfg = FlipConfig(tuple(WEIGHTS), runs=1, subset_rule="all_letters")
    for r in flip_analysis(balanced, model(), masked_model(), cfg).rows:
        assert r.f_to_m == int(r.f_to_m) and r.m_to_f == int(r.m_to_f)
        assert (r.f_to_m, r.m_to_f) == count_flips(balanced, model(), r.token)


def test_select_subset_trivial_cases():
    c = crafted()
    truth = {x.id: float(x.gender) for x in c}
    perfect = ExternalModel(truth)
    wrong = ExternalModel({k: 1.0 - v for k, v in truth.items()})
    assert len(select_subset(c, perfect, perfect)) == 0
    assert select_subset(c, perfect, wrong).ids == c.ids


def test_empty_subset_gives_empty_table(caplog):
    c = crafted()
    perfect = ExternalModel({x.id: float(x.gender) for x in c})
    table = flip_analysis(c, model(), perfect, FlipConfig(("team",)))
    assert table.rows == [] and table.subset_size == 0


def test_masked_corpus_or_plan_feeds_masked_model():
    c = crafted()
    me = model()
    mm = model({"team": 0.0}, bias=0.0)  # scores every letter as male unless a masked token matters
    plan = MaskPlan(frozenset({"leadership"}))
    via_plan = select_subset(c, me, mm, plan)
    from genderleak.degender import mask_corpus

    via_corpus = select_subset(c, me, mm, mask_corpus(c, plan))
    assert via_plan.ids == via_corpus.ids


def test_count_flips_examples():
    m = model({"leadership": 3.0, "caring": -2.5})
    near = Corpus((Letter("a", "leadership caring", 1),), "edg")
    assert count_flips(near, m, "leadership") == (0, 1)
    assert count_flips(near, m, "zebra") == (0, 0)
    far = Corpus((Letter("b", "leadership team team caring", 1),), "edg")
    assert count_flips(far, model({"leadership": 3.0, "team": 2.0, "caring": -1.0}), "leadership") == (0, 0)
    with pytest.raises(ValueError):
        count_flips(near, m, "")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(list(WEIGHTS) + ["x"]), min_size=1, max_size=6), st.sampled_from(list(WEIGHTS)))
def test_flip_count_bounded_by_letters_with_token(words, token):
    c = Corpus((Letter("a", " ".join(words), 1), Letter("b", " ".join(reversed(words)) + " caring", 0)), "edg")
    a, b = count_flips(c, model(), token)
    assert a + b <= sum(token in x.text.split() for x in c)


def test_config_validation():
    with pytest.raises(ValueError):
        FlipConfig(())
    with pytest.raises(ValueError):
        FlipConfig(("a",), runs=0)
    with pytest.raises(ValueError):
        FlipConfig(("a",), subset_rule="other")
    assert FlipConfig(("A", "a", "b")).candidate_tokens == ("a", "b")


def test_table_row_shape():
    table = flip_analysis(crafted(), model(), masked_model(), FlipConfig(tuple(WEIGHTS), runs=3))
    row = table.to_dict()["rows"][0]
    assert list(row) == ["token", "f_to_m", "m_to_f", "abs_diff"]
