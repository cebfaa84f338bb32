import io
import json

import numpy as np
import pytest
from sklearn.base import clone

from cases import ONE_LABEL, deterministic_adoc, fb_instance, random_model, simulate_hmm
from conftest import random_adoc
from weakseq.annotations import AnnotatedDocument, ProbAnnotation
from weakseq.corpus import LabelScheme
from weakseq.exceptions import InvariantError, SchemaVersionError
from weakseq.hmm import (
    HMMAggregator,
    HmmModel,
    decode_map,
    forward_backward,
    init_emissions,
    init_priors,
)


@pytest.mark.parametrize("seed", range(40))
def test_forward_backward_matches_enumeration(seed):
    got, oracle, ll, oracle_ll, _ = fb_instance(seed)
    np.testing.assert_allclose(got, oracle, atol=1e-8, rtol=0)
    if ll is not None:
        assert ll == pytest.approx(oracle_ll, abs=1e-8)


def test_uniform_model_gives_uniform_marginals():
    rng = np.random.default_rng(0)
    adoc = random_adoc(rng, 6, 2, 3, abstain=0.0, sparse=0.0)
    model = HmmModel(ONE_LABEL, ["f0", "f1"], np.full(3, 1 / 3), np.full((3, 3), 1 / 3), np.ones((2, 3, 3)))
    np.testing.assert_allclose(forward_backward(model, adoc), 1 / 3, atol=1e-12)


def test_support_constraint_is_exact():
    rng = np.random.default_rng(5)
    initial, transition, alphas = random_model(rng, 3, 2)
    model = HmmModel(ONE_LABEL, ["f0", "f1"], initial, transition, alphas)
    for k in range(20):
        adoc = random_adoc(rng, 12, 2, 3, doc_id=f"d{k}", abstain=0.4, sparse=0.5)
        marg = forward_backward(model, adoc)
        probs, mask = adoc.stack(["f0", "f1"], 3)
        supported = np.any((probs > 0) & mask[:, :, None], axis=1)
        silent = ~mask.any(axis=1)
        supported[silent] = False
        supported[silent, 0] = True
        assert np.all(marg[~supported] == 0.0)
        np.testing.assert_allclose(marg.sum(axis=1), 1.0, atol=1e-9)


def test_only_outside_supported_gives_onehot_outside():
    adoc = AnnotatedDocument("d", 3, {"f": ProbAnnotation("f", {1: [1.0, 0.0, 0.0]})})
    model = HmmModel(ONE_LABEL, ["f"], np.full(3, 1 / 3), np.full((3, 3), 1 / 3), np.full((1, 3, 3), 2.0))
    marg = forward_backward(model, adoc)
    np.testing.assert_array_equal(marg, np.tile([1.0, 0.0, 0.0], (3, 1)))


def test_long_sequence_does_not_underflow():
    rng = np.random.default_rng(1)
    initial, transition, alphas = random_model(rng, 3, 3)
    adoc = random_adoc(rng, 10_000, 3, 3, abstain=0.1, sparse=0.0)
    est = HMMAggregator.from_model(HmmModel(ONE_LABEL, ["f0", "f1", "f2"], initial, transition, alphas))
    assert np.isfinite(est.score([adoc]))
    marg = est.predict_proba([adoc])[0]
    assert np.all(np.isfinite(marg))
    np.testing.assert_allclose(marg.sum(axis=1), 1.0, atol=1e-9)


def test_init_priors_examples():
    always_o = deterministic_adoc("d", [0] * 10, name="rel")
    delta, kappa = init_priors([always_o], "rel", 3)
    np.testing.assert_array_equal(delta, [11, 1, 1])
    assert kappa[0, 0] == 10  # 9 transitions plus smoothing
    delta, kappa = init_priors([], "rel", 3)
    np.testing.assert_array_equal(delta, np.ones(3))
    _, kappa = init_priors([deterministic_adoc("d", [0, 1], name="rel")], "rel", 3)
    np.testing.assert_array_equal(kappa, [[1, 2, 1], [1, 1, 1], [1, 1, 1]])
    with pytest.raises(ValueError, match="reliable"):
        init_priors([always_o], "missing", 3)


def test_init_priors_abstain_counts_as_outside():
    adoc = AnnotatedDocument("d", 3, {"rel": ProbAnnotation("rel", {1: [0.0, 1.0, 0.0]})})
    delta, _ = init_priors([adoc], "rel", 3)
    np.testing.assert_array_equal(delta, [3, 2, 1])


def test_init_emissions_examples():
    r = np.full((2, 3), 0.5)
    alphas = init_emissions(r, r, np.ones(3), concentration=10.0)
    np.testing.assert_allclose(alphas.sum(axis=2), 10.0, atol=1e-12)
    for s in range(3):
        off = np.delete(alphas[0, s], s)
        assert off[0] == pytest.approx(off[1])
        assert alphas[0, s, s] > off[0]
    sharp = init_emissions(np.full((1, 3), 1 - 1e-9), np.full((1, 3), 0.5), np.ones(3))
    assert np.all(sharp[0, np.arange(3), np.arange(3)] > 10 - 1e-6)
    two = init_emissions(np.full((1, 2), 0.3), np.full((1, 2), 0.6), np.ones(2), concentration=10.0)
    np.testing.assert_allclose(two.sum(axis=2), 10.0, atol=1e-12)
    with pytest.raises(ValueError):
        init_emissions(np.ones((1, 3)), r[:1], np.ones(3))


def test_init_emissions_offdiagonal_reading():
    recall = np.array([[0.9, 0.6, 0.3]])
    precision = np.array([[0.8, 0.5, 0.4]])
    delta = np.array([2.0, 1.0, 1.0])
    alphas = init_emissions(recall, precision, delta, concentration=1.0)
    d = delta / delta.sum()
    raw = np.array([[recall[0, s] if s == k else (1 - recall[0, s]) * (1 - precision[0, k]) * d[k]
                     for k in range(3)] for s in range(3)])
    np.testing.assert_allclose(alphas[0], raw / raw.sum(axis=1, keepdims=True), rtol=1e-12)


def _empirical_transitions(tag_seqs, n_tags, kappa):
    counts = np.array(kappa, dtype=float)
    for tags in tag_seqs:
        for a, b in zip(tags, tags[1:]):
            counts[a, b] += 1
    return counts / counts.sum(axis=1, keepdims=True)


def test_single_deterministic_function_recovers_smoothed_transitions():
    rng = np.random.default_rng(3)
    seqs = [list(rng.choice([0, 1], size=15, p=[0.7, 0.3])) for _ in range(20)]
    adocs = [deterministic_adoc(f"d{k}", s) for k, s in enumerate(seqs)]
    flat = HMMAggregator(ONE_LABEL, max_iter=5).fit(adocs).model_
    np.testing.assert_allclose(flat.transition, _empirical_transitions(seqs, 3, np.ones((3, 3))), atol=1e-6)
    informed = HMMAggregator(ONE_LABEL, reliable="f0", max_iter=5).fit(adocs)
    _, kappa = informed.priors_
    np.testing.assert_allclose(informed.model_.transition, _empirical_transitions(seqs, 3, kappa), atol=1e-6)


def test_max_iter_zero_returns_initialisation():
    rng = np.random.default_rng(4)
    adocs = [random_adoc(rng, 10, 2, 3, doc_id=f"d{k}") for k in range(5)]
    est = HMMAggregator(ONE_LABEL, reliable="f0", max_iter=0).fit(adocs)
    delta, kappa = est.priors_
    m = est.model_
    np.testing.assert_allclose(m.initial, delta / delta.sum())
    np.testing.assert_allclose(m.transition, kappa / kappa.sum(axis=1, keepdims=True))
    np.testing.assert_allclose(m.alphas, init_emissions(np.full((2, 3), 0.5), np.full((2, 3), 0.5), delta))
    assert m.n_iter == 0 and not m.converged and len(m.fit_log) == 1


def test_parameter_recovery_on_simulated_data():
    (initial, transition, alphas), _, adocs = simulate_hmm()
    est = HMMAggregator(ONE_LABEL, max_iter=50, tol=1e-6).fit(adocs)
    assert np.abs(est.model_.transition - transition).max() < 0.05
    np.testing.assert_allclose(est.model_.alphas, alphas, rtol=0.15)


@pytest.mark.parametrize("seed", range(5))
def test_em_is_monotone(seed):
    rng = np.random.default_rng(100 + seed)
    adocs = [random_adoc(rng, int(rng.integers(3, 15)), 3, 5, doc_id=f"d{k}") for k in range(15)]
    est = HMMAggregator(LabelScheme(("A", "B")), reliable="f0", max_iter=30, tol=0.0).fit(adocs)
    log = np.array(est.model_.fit_log)
    assert np.all(np.diff(log) >= -1e-9 * np.maximum(1.0, np.abs(log[:-1])))


def test_model_invariants_after_fit():
    rng = np.random.default_rng(6)
    adocs = [random_adoc(rng, 8, 2, 3, doc_id=f"d{k}") for k in range(10)]
    m = HMMAggregator(ONE_LABEL, max_iter=10).fit(adocs).model_
    np.testing.assert_allclose(m.transition.sum(axis=1), 1.0, atol=1e-9)
    assert abs(m.initial.sum() - 1.0) < 1e-9
    assert np.all(m.alphas > 0)


def test_decreasing_objective_is_an_invariant_error(monkeypatch):
    rng = np.random.default_rng(7)
    adocs = [random_adoc(rng, 8, 2, 3, doc_id=f"d{k}") for k in range(5)]
    est = HMMAggregator(ONE_LABEL, max_iter=5, tol=0.0)

    def worse(model, data, gamma, xi, first, delta, kappa):
        bad = np.tile([[0.01, 0.01, 0.98]], (3, 1))
        return HmmModel(model.scheme, model.functions, model.initial, bad, model.alphas * 3.0,
                        fit_log=model.fit_log, n_iter=model.n_iter, clamp=model.clamp)

    monkeypatch.setattr(est, "_m_step", worse)
    with pytest.raises(InvariantError, match="decreased"):
        est.fit(adocs)


def test_fully_abstained_document_is_skipped_with_warning():
    rng = np.random.default_rng(8)
    adocs = [random_adoc(rng, 8, 2, 3, doc_id=f"d{k}") for k in range(4)]
    adocs.append(AnnotatedDocument("empty", 5, {"f0": ProbAnnotation("f0", {})}))
    with pytest.warns(UserWarning, match="skipping 1"):
        est = HMMAggregator(ONE_LABEL, max_iter=3).fit(adocs)
    marg = est.predict_proba(adocs[-1:])[0]
    np.testing.assert_array_equal(marg[:, 0], 1.0)


def test_per_function_estimates():
    rng = np.random.default_rng(9)
    adocs = [random_adoc(rng, 8, 2, 3, doc_id=f"d{k}") for k in range(4)]
    est = HMMAggregator(ONE_LABEL, max_iter=0, recall={"f0": 0.9, "f1": 0.2}, precision=0.5).fit(adocs)
    a = est.model_.alphas
    assert a[0, 1, 1] / a[0, 1].sum() > a[1, 1, 1] / a[1, 1].sum()
    with pytest.raises(ValueError):
        HMMAggregator(ONE_LABEL, recall={"f0": 1.0}).fit(adocs)


def test_model_serialisation_roundtrip_is_exact():
    rng = np.random.default_rng(10)
    adocs = [random_adoc(rng, 8, 2, 3, doc_id=f"d{k}") for k in range(6)]
    m = HMMAggregator(ONE_LABEL, max_iter=4).fit(adocs).model_
    text = m.dumps()
    back = HmmModel.loads(text)
    for name in ("initial", "transition", "alphas"):
        np.testing.assert_array_equal(getattr(back, name), getattr(m, name))
    assert back.fit_log == m.fit_log and back.converged == m.converged and back.dumps() == text
    data = json.loads(text)
    data["schema"] = "weakseq.hmm/0"
    with pytest.raises(SchemaVersionError) as exc:
        HmmModel.from_dict(data)
    assert "weakseq.hmm/0" in str(exc.value) and "weakseq.hmm/1" in str(exc.value)


def test_decode_map_examples():
    scheme = LabelScheme(("PER", "LOC"))
    onehot = np.eye(5)[[1, 2, 0, 3]]
    assert decode_map(onehot, scheme) == ["B-PER", "I-PER", "O", "B-LOC"]
    assert decode_map(np.array([[0.5, 0.5, 0, 0, 0]]), scheme) == ["O"]
    assert decode_map(np.eye(5)[[0, 4]], scheme) == ["O", "B-LOC"]
    assert decode_map(np.zeros((0, 5)), scheme) == []


def test_sklearn_api():
    est = HMMAggregator(ONE_LABEL, tol=1e-3)
    assert clone(est).get_params()["tol"] == 1e-3
    with pytest.raises(ValueError):
        HMMAggregator(ONE_LABEL, clamp=0.7).fit([deterministic_adoc("d", [0, 1])])
    rng = np.random.default_rng(11)
    adocs = [random_adoc(rng, 8, 2, 3, doc_id=f"d{k}") for k in range(4)]
    tags = HMMAggregator(ONE_LABEL, max_iter=3).fit_predict(adocs)
    assert [len(t) for t in tags] == [8] * 4
