import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import onehot_adoc
from weakseq.corpus import CONLL_MAPPING, LabelScheme, Span, tags_to_spans
from weakseq.evaluation import (
    REPORT_SCHEMA,
    Counts,
    cross_entropy_error,
    entity_metrics,
    evaluate,
    map_labels,
    pairwise_agreement,
    token_counts,
    token_metrics,
)
from weakseq.exceptions import SchemeError


def test_token_hand_count():
    c = token_metrics(["B-PER", "B-LOC", "O"], ["B-PER", "O", "B-ORG"])
    assert (c.tp, c.fp, c.fn) == (1, 1, 1)
    assert (c.precision, c.recall, c.f1) == (0.5, 0.5, 0.5)


def test_token_perfect_and_all_outside():
    gold = ["B-PER", "I-PER", "B-ORG"]
    c = token_metrics(gold, gold)
    assert (c.precision, c.recall, c.f1) == (1.0, 1.0, 1.0)
    c = token_metrics(["O"] * 3, gold)
    assert (c.precision, c.recall, c.f1) == (0.0, 0.0, 0.0)


def test_token_modes():
    pred, gold = ["B-PER", "B-PER"], ["B-PER", "I-PER"]
    assert token_metrics(pred, gold).f1 == 1.0
    c = token_metrics(pred, gold, mode="tag")
    assert (c.tp, c.fp, c.fn) == (1, 1, 1)
    with pytest.raises(ValueError):
        token_metrics(pred, gold, mode="span")
    with pytest.raises(ValueError, match="tokens"):
        token_metrics(["O"], gold)


def test_entity_hand_count():
    c = entity_metrics([Span(0, 2, "PER"), Span(3, 4, "ORG")], [Span(0, 2, "PER")])
    assert c.precision == 0.5 and c.recall == 1.0
    assert c.f1 == 2 / 3


def test_entity_exact_match():
    c = entity_metrics([Span(0, 3, "PER")], [Span(0, 2, "PER")])
    assert (c.tp, c.fp, c.fn) == (0, 1, 1)
    c = entity_metrics([Span(0, 2, "ORG")], [Span(0, 2, "PER")])
    assert (c.tp, c.fp, c.fn) == (0, 1, 1)


def test_cee_examples(conll):
    gold = ["O", "B-PER", "I-PER"]
    onehot = np.eye(9)[conll.encode(gold)]
    assert cross_entropy_error(onehot, gold, conll) == 0.0
    uniform = np.full((3, 9), 1 / 9)
    assert abs(cross_entropy_error(uniform, gold, conll) - math.log(9)) <= 1e-12
    half = np.zeros((1, 9))
    half[0, :2] = 0.5
    assert abs(cross_entropy_error(half, ["O"], conll) - math.log(2)) <= 1e-12
    assert cross_entropy_error(half, ["B-ORG"], conll) == pytest.approx(-math.log(1e-12))
    with pytest.raises(ValueError, match="tokens"):
        cross_entropy_error(uniform, ["O"], conll)


@pytest.mark.parametrize("n_tags", [3, 5, 9, 37])
def test_cee_uniform_is_log_t(n_tags):
    rng = np.random.default_rng(n_tags)
    gold = rng.integers(0, n_tags, size=50)
    scheme = LabelScheme(tuple(f"L{k}" for k in range((n_tags - 1) // 2)))
    assert abs(cross_entropy_error(np.full((50, n_tags), 1 / n_tags), gold, scheme) - math.log(n_tags)) <= 1e-12


def test_map_labels(conll):
    assert map_labels(["B-GPE", "I-GPE", "O"], CONLL_MAPPING) == ["B-LOC", "I-LOC", "O"]
    assert map_labels([Span(0, 1, "PRODUCT")], CONLL_MAPPING) == [Span(0, 1, "MISC")]
    tags = ["B-PER", "O", "B-LOC"]
    assert map_labels(tags, {}) == tags
    # adjacent spans stay separate after relabelling
    assert map_labels(["B-GPE", "B-LOC"], CONLL_MAPPING) == ["B-LOC", "B-LOC"]
    assert map_labels(["B-MONEY"], {"MONEY": "O"}) == ["O"]
    with pytest.raises(SchemeError, match="DATE"):
        map_labels(["B-DATE"], CONLL_MAPPING, conll)


tag_lists = st.lists(st.sampled_from(["O", "B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC"]), min_size=1, max_size=12)


@given(st.lists(st.tuples(tag_lists, tag_lists), min_size=1, max_size=4))
def test_symmetry_and_micro_average(pairs):
    pairs = [(a[:len(b)], b[:len(a)]) for a, b in pairs]
    preds, golds = [p for p, _ in pairs], [g for _, g in pairs]
    for mode in ("label", "tag"):
        fwd, bwd = token_metrics(preds, golds, mode), token_metrics(golds, preds, mode)
        assert (fwd.precision, fwd.recall) == (bwd.recall, bwd.precision)
        per_doc = sum((token_metrics(p, g, mode) for p, g in pairs), Counts())
        assert per_doc == fwd
    ps = [tags_to_spans(p) for p in preds]
    gs = [tags_to_spans(g) for g in golds]
    fwd, bwd = entity_metrics(ps, gs), entity_metrics(gs, ps)
    assert (fwd.precision, fwd.recall) == (bwd.recall, bwd.precision)
    assert sum((entity_metrics(p, g) for p, g in zip(ps, gs)), Counts()) == fwd
    same = entity_metrics(gs, gs)
    if same.tp:
        assert (same.precision, same.recall, same.f1) == (1.0, 1.0, 1.0)


def test_per_label_counts_sum_to_total():
    pred, gold = ["B-PER", "B-LOC", "O", "B-ORG"], ["B-PER", "O", "B-ORG", "B-LOC"]
    per = token_counts(pred, gold)
    assert sum(per.values(), Counts()) == token_metrics(pred, gold)


def test_evaluate_report(conll):
    gold = [["B-PER", "I-PER", "O", "B-LOC"], ["B-ORG", "O"]]
    pred = [["B-PER", "I-PER", "O", "B-GPE"], ["B-ORG", "B-MISC"]]
    report = evaluate(pred, gold, conll, mapping=CONLL_MAPPING)
    assert report.token.tp == 4 and report.token.fp == 1 and report.token.fn == 0
    assert report.per_label["LOC"]["entity"].tp == 1
    assert report.cee is None
    data = json.loads(report.to_json())
    assert data["schema"] == REPORT_SCHEMA and data["token_mode"] == "label"
    assert data["entity"]["precision"] == pytest.approx(3 / 4)
    text = report.to_text()
    assert text.splitlines()[0].split() == ["tok", "P", "tok", "R", "tok", "F1", "ent", "P", "ent", "R", "ent", "F1",
                                            "CEE"]
    assert text.splitlines()[1].startswith("all")
    marg = [np.eye(9)[conll.encode(g)] for g in gold]
    assert evaluate(gold, gold, conll, marginals=marg).cee == 0.0


def test_evaluate_perfect(conll):
    gold = [["B-PER", "I-PER", "O", "B-LOC"]]
    r = evaluate(gold, gold, conll)
    assert (r.token.f1, r.entity.f1) == (1.0, 1.0)


def test_agreement_examples():
    # 10 co-labelled tokens: 8 equal, 2 conflicting non-O predictions
    a = [1, 1, 1, 0, 0, 0, 0, 3, 3, 5]
    b = [1, 1, 1, 0, 0, 0, 0, 3, 5, 3]
    adoc = onehot_adoc("d", [a, b], 9)
    m = pairwise_agreement([adoc], 9)
    assert m.agreement[0, 1] == 0.8 and m.disagreement[0, 1] == 0.2
    np.testing.assert_array_equal(np.diag(m.agreement), [1.0, 1.0])
    np.testing.assert_array_equal(np.diag(m.disagreement), [0.0, 0.0])
    np.testing.assert_array_equal(m.agreement, m.agreement.T)


def test_agreement_disjoint_and_outside_conflicts():
    adoc = onehot_adoc("d", [[1, 2, None, None], [None, None, 3, 4]], 9)
    m = pairwise_agreement([adoc], 9)
    assert m.agreement[0, 1] == 0.0 and m.disagreement[0, 1] == 0.0 and m.co_labelled[0, 1] == 0
    # O against an entity is neither agreement nor a non-O conflict
    m = pairwise_agreement([onehot_adoc("d", [[0], [1]], 9)], 9)
    assert m.agreement[0, 1] == 0.0 and m.disagreement[0, 1] == 0.0


def test_agreement_csv():
    adoc = onehot_adoc("d", [[1, 0], [1, 3]], 9, names=["x", "y"])
    rows = pairwise_agreement([adoc], 9).to_csv().splitlines()
    assert rows[0] == "function_a,function_b,agreement,disagreement,co_labelled"
    assert len(rows) == 5
    assert rows[2] == "x,y,0.5,0.0,2"
