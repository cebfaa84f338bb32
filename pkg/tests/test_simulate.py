import numpy as np
import pytest

from weakseq.corpus import repair_bio
from weakseq.simulate import (
    DEFAULT_FUNCTIONS,
    SimulatedFunction,
    sample_confusion_model,
    sample_dirichlet_hmm,
    synthetic_ner,
)


def test_dirichlet_hmm_shapes_and_determinism():
    initial = [0.6, 0.4]
    transition = [[0.9, 0.1], [0.3, 0.7]]
    alphas = np.array([[[8.0, 2.0], [2.0, 8.0]], [[5.0, 5.0], [1.0, 9.0]]])
    states, adocs = sample_dirichlet_hmm(initial, transition, alphas, n_docs=4, length=25, seed=1)
    assert len(states) == len(adocs) == 4
    for s, a in zip(states, adocs):
        assert len(s) == a.n_tokens == 25 and a.functions == ["f0", "f1"]
        for ann in a.annotations.values():
            assert sorted(ann.entries) == list(range(25))
            for v in ann.entries.values():
                assert abs(v.sum() - 1) < 1e-12 and v.min() > 0
    again = sample_dirichlet_hmm(initial, transition, alphas, n_docs=4, length=25, seed=1)
    for a, b in zip(states, again[0]):
        np.testing.assert_array_equal(a, b)


def test_dirichlet_hmm_moments():
    alphas = np.array([[[8.0, 2.0], [2.0, 8.0]]])
    states, adocs = sample_dirichlet_hmm([0.5, 0.5], [[0.8, 0.2], [0.2, 0.8]], alphas, 40, 100, seed=2)
    s = np.concatenate(states)
    v = np.concatenate([np.stack([a.annotations["f0"].entries[i] for i in range(100)]) for a in adocs])
    for k in (0, 1):
        np.testing.assert_allclose(v[s == k].mean(axis=0), alphas[0, k] / 10, atol=0.02)
    # empirical self-transition rate
    stay = np.mean([np.mean(x[1:] == x[:-1]) for x in states])
    assert abs(stay - 0.8) < 0.02


def test_confusion_model_frequencies():
    sigma = [0.5, 0.3, 0.2]
    confusion = np.array([[[0.8, 0.1, 0.1], [0.2, 0.7, 0.1], [0.1, 0.1, 0.8]]])
    states, adocs = sample_confusion_model(sigma, confusion, n_tokens=30000, doc_length=70, seed=0)
    assert sum(a.n_tokens for a in adocs) == 30000 and adocs[-1].n_tokens == 30000 % 70
    s = np.concatenate(states)
    out = np.concatenate([[int(np.argmax(a.annotations["f0"].entries[i])) for i in range(a.n_tokens)]
                          for a in adocs])
    np.testing.assert_allclose(np.bincount(s) / len(s), sigma, atol=0.01)
    for k in range(3):
        np.testing.assert_allclose(np.bincount(out[s == k], minlength=3) / np.sum(s == k), confusion[0, k],
                                   atol=0.02)


@pytest.fixture(scope="module")
def corpus():
    return synthetic_ner(seed=0, n_docs=60)


def test_synthetic_ner_structure(corpus):
    assert len(corpus.docs) == len(corpus.annotations) == 60
    assert corpus.reliable == "ner_model"
    names = [f.name for f in DEFAULT_FUNCTIONS]
    for doc, adoc in zip(corpus.docs, corpus.annotations):
        assert adoc.doc_id == doc.id and adoc.n_tokens == len(doc)
        assert list(doc.tags) == repair_bio(list(doc.tags))
        assert sorted(adoc.functions) == sorted(names)
        for ann in adoc.annotations.values():
            for v in ann.entries.values():
                assert abs(v.sum() - 1) < 1e-9 and v.min() >= 0


def test_abstention_and_label_restrictions(corpus):
    scheme = corpus.scheme
    per_tags = {scheme.begin("PER"), scheme.inside("PER")}
    for adoc, doc in zip(corpus.annotations, corpus.docs):
        # non-abstaining functions cover every token
        assert sorted(adoc.annotations["ner_model"].entries) == list(range(len(doc)))
        for name in ("gaz_wide", "gaz_narrow", "per_names", "org_suffix"):
            for v in adoc.annotations[name].entries.values():
                assert np.count_nonzero(v[1:]) > 0
        for v in adoc.annotations["per_names"].entries.values():
            assert set(np.flatnonzero(v[1:]) + 1) <= per_tags


def test_synthetic_ner_is_deterministic():
    a, b = synthetic_ner(seed=5, n_docs=5), synthetic_ner(seed=5, n_docs=5)
    assert [d.words for d in a.docs] == [d.words for d in b.docs]
    for x, y in zip(a.annotations, b.annotations):
        for name in x.functions:
            ex, ey = x.annotations[name].entries, y.annotations[name].entries
            assert sorted(ex) == sorted(ey)
            for i in ex:
                np.testing.assert_array_equal(ex[i], ey[i])
    assert [d.words for d in synthetic_ner(seed=6, n_docs=5).docs] != [d.words for d in a.docs]


def test_perfect_function_reproduces_gold():
    oracle = SimulatedFunction("oracle", coverage=1.0, accuracy=1.0, false_positive=0.0, confidence=1.0,
                               token_noise=0.0, jitter=0.0)
    c = synthetic_ner(seed=1, n_docs=20, functions=(oracle,), ambiguity=0.0)
    for doc, adoc in zip(c.docs, c.annotations):
        entries = adoc.annotations["oracle"].entries
        pred = [int(np.argmax(entries[i])) for i in range(len(doc))]
        assert c.scheme.decode(pred) == list(doc.tags)


def test_estimates(corpus):
    recall, precision = corpus.estimates()
    assert recall["gaz_narrow"] == 0.35 and precision["per_names"] == 0.97
    assert set(recall) == {f.name for f in DEFAULT_FUNCTIONS}
