"""Synthetic corpora with known generating processes.

Three samplers:

* :func:`sample_dirichlet_hmm` draws tag sequences from a Markov chain and
  labelling-function vectors from per-tag Dirichlet distributions.
* :func:`sample_confusion_model` draws independent latent classes and hard
  labels from per-function confusion matrices.
* :func:`synthetic_ner` builds a small NER corpus with entity names,
  context cue words and simulated labelling functions whose errors are
  systematic per entity name, much like gazetteers and heuristics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annotations import AnnotatedDocument, ProbAnnotation
from .corpus import LabelScheme, make_document


def _markov_chain(rng, initial, transition, length):
    states = np.empty(length, dtype=int)
    states[0] = rng.choice(len(initial), p=initial)
    for i in range(1, length):
        states[i] = rng.choice(len(initial), p=transition[states[i - 1]])
    return states


def sample_dirichlet_hmm(initial, transition, alphas, n_docs, length, seed=0):
    """Sample documents from a Dirichlet-emission HMM without abstention.

    Returns
    -------
    states : list of ndarray
    adocs : list of AnnotatedDocument
        Functions are named ``f0 .. f{J-1}``.
    """
    rng = np.random.default_rng(seed)
    alphas = np.asarray(alphas, dtype=float)
    states, adocs = [], []
    for d in range(n_docs):
        s = _markov_chain(rng, np.asarray(initial), np.asarray(transition), length)
        anns = {}
        for j in range(alphas.shape[0]):
            vecs = np.stack([rng.dirichlet(alphas[j, k]) for k in s])
            vecs = np.clip(vecs, 1e-12, None)
            vecs /= vecs.sum(axis=1, keepdims=True)
            anns[f"f{j}"] = ProbAnnotation(f"f{j}", dict(enumerate(vecs)))
        states.append(s)
        adocs.append(AnnotatedDocument(f"doc{d}", length, anns))
    return states, adocs


def sample_confusion_model(sigma, confusion, n_tokens, doc_length=50, seed=0):
    """Sample one-hot annotations from independent classes and confusion matrices.

    ``confusion[j, s, k]`` is the probability that function ``j`` outputs
    ``k`` when the latent class is ``s``.
    """
    rng = np.random.default_rng(seed)
    confusion = np.asarray(confusion, dtype=float)
    n_funcs, n_classes, _ = confusion.shape
    classes = rng.choice(n_classes, size=n_tokens, p=sigma)
    # inverse-CDF sampling of every function's label at once
    cdf = np.cumsum(confusion[:, classes, :], axis=2)
    labels = (rng.random((n_funcs, n_tokens, 1)) > cdf).sum(axis=2)
    labels = np.minimum(labels, n_classes - 1)
    eye = np.eye(n_classes)
    states, adocs = [], []
    for d, start in enumerate(range(0, n_tokens, doc_length)):
        stop = min(start + doc_length, n_tokens)
        anns = {
            f"f{j}": ProbAnnotation(f"f{j}", dict(enumerate(eye[labels[j, start:stop]])))
            for j in range(n_funcs)
        }
        states.append(classes[start:stop])
        adocs.append(AnnotatedDocument(f"doc{d}", stop - start, anns))
    return states, adocs


# -- synthetic NER corpus ------------------------------------------------------------


@dataclass(frozen=True)
class SimulatedFunction:
    """Behaviour of one simulated labelling function.

    Parameters
    ----------
    name : str
    coverage : float
        Probability that an entity name is known to the function.
    accuracy : float
        Probability that a known name gets its most common label rather
        than a systematically wrong one.
    false_positive : float
        Probability that an ordinary word outside the most frequent eighth
        of the vocabulary is systematically tagged as an entity.
    confidence : float
        Mean probability mass on the predicted tag.
    labels : tuple of str, optional
        Labels the function can output; names of other labels are unknown to it.
    abstain : bool
        Abstain instead of predicting ``O``.
    token_noise : float
        Per-occurrence probability of dropping a prediction.
    jitter : float
        Standard deviation of the per-occurrence predicted mass.
    generic : bool
        Spread the predicted mass over all allowed labels with weights drawn
        once per name from a symmetric Dirichlet, like a detector that finds
        entities without typing them.
    generic_spread : float
        Concentration of that Dirichlet; large values approach uniform weights.
    soft_miss : float
        Mean mass a non-abstaining function still puts on the label of a
        name it does not know. Zero gives hard misses.
    background : float
        Mean mass spread over the entity tags at every token, as in the
        softmax output of a statistical tagger.
    """

    name: str
    coverage: float
    accuracy: float
    false_positive: float
    confidence: float = 0.85
    labels: tuple | None = None
    abstain: bool = False
    token_noise: float = 0.02
    jitter: float = 0.03
    generic: bool = False
    generic_spread: float = 5.0
    soft_miss: float = 0.0
    background: float = 0.0


DEFAULT_FUNCTIONS = (
    SimulatedFunction("ner_model", coverage=0.6, accuracy=0.85, false_positive=0.03, confidence=0.85,
                      soft_miss=0.3, background=0.04),
    SimulatedFunction("gaz_wide", coverage=0.5, accuracy=0.85, false_positive=0.05, confidence=0.8,
                      abstain=True),
    SimulatedFunction("gaz_narrow", coverage=0.35, accuracy=0.95, false_positive=0.01, confidence=0.9,
                      abstain=True),
    SimulatedFunction("per_names", coverage=0.7, accuracy=0.97, false_positive=0.005, confidence=0.9,
                      labels=("PER",), abstain=True),
    SimulatedFunction("org_suffix", coverage=0.6, accuracy=0.95, false_positive=0.005, confidence=0.9,
                      labels=("ORG",), abstain=True),
)

SYNTHETIC_LABELS = ("PER", "ORG", "LOC", "MISC")


@dataclass
class SyntheticCorpus:
    scheme: LabelScheme
    docs: list
    annotations: list
    reliable: str
    functions: tuple = ()

    def estimates(self):
        """Rough per-function ``(recall, precision)`` guesses from the configuration.

        These play the part of the estimates a practitioner supplies for the
        starting emissions: coverage stands in for recall, accuracy for precision.
        """
        recall = {f.name: f.coverage for f in self.functions}
        precision = {f.name: f.accuracy for f in self.functions}
        return recall, precision


_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "kl")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ou")


def _word_forms(rng, n, taken):
    """``n`` new pronounceable lowercase strings that carry no label information."""
    out = []
    while len(out) < n:
        n_syll = 2 + rng.binomial(2, 0.4)
        word = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                       for _ in range(n_syll))
        if word not in taken:
            taken.add(word)
            out.append(word)
    return out


def _entity_names(rng, vocab, n_names):
    names = set()
    while len(names) < n_names:
        length = 1 + rng.binomial(2, 0.3)
        names.add(tuple(rng.choice(vocab, size=length, replace=False)))
    return sorted(names)


def synthetic_ner(seed=0, n_docs=500, doc_length=30, functions=DEFAULT_FUNCTIONS,
                  names_per_label=80, n_common=400, entity_rate=0.12, ambiguity=0.1,
                  cue_rate=0.6):
    """Sample a labelled corpus and simulated labelling-function outputs.

    Entity mentions are drawn from per-label pools of names; a fraction
    ``ambiguity`` of names is shared by two labels, in which case a
    preceding cue word often reveals the label. Each function decides once
    per name (and once per ordinary word) what it predicts, so its errors
    repeat across the corpus.
    """
    rng = np.random.default_rng(seed)
    scheme = LabelScheme(SYNTHETIC_LABELS)
    labels = list(SYNTHETIC_LABELS)
    taken = set()
    vocab = {lab: [w.title() for w in _word_forms(rng, 2 * names_per_label, taken)] for lab in labels}
    pools = {lab: _entity_names(rng, vocab[lab], names_per_label) for lab in labels}
    # shared names: copy some names into a second label's pool
    name_labels = {}
    for lab in labels:
        for name in pools[lab]:
            name_labels.setdefault(name, []).append(lab)
    for lab in labels:
        n_shared = int(ambiguity * names_per_label)
        others = [o for o in labels if o != lab]
        for idx in rng.choice(len(pools[lab]), size=n_shared, replace=False):
            name = pools[lab][idx]
            other = others[rng.integers(len(others))]
            if other not in name_labels[name]:
                pools[other].append(name)
                name_labels[name].append(other)
    cues = {lab: _word_forms(rng, 3, taken) for lab in labels}
    common = _word_forms(rng, n_common, taken)
    zipf = 1.0 / np.arange(1, n_common + 1)
    zipf /= zipf.sum()

    # systematic behaviour of each function per name and per ordinary word:
    # a weight vector over the labels, one-hot unless the function is generic
    def label_weights(f, allowed, main):
        if f.generic:
            w = rng.dirichlet(np.full(len(allowed), f.generic_spread))
        else:
            if rng.random() < f.accuracy:
                if main not in allowed:
                    return None
                pick = main
            else:
                wrong = [l for l in allowed if l != main]
                if not wrong:
                    return None
                pick = wrong[rng.integers(len(wrong))]
            w = np.array([lab == pick for lab in allowed], dtype=float)
        return dict(zip(allowed, w))

    behaviour = []
    for f in functions:
        allowed = labels if f.labels is None else list(f.labels)
        per_name = {}
        for name, labs in sorted(name_labels.items()):
            if rng.random() < f.coverage:
                weights = label_weights(f, allowed, labs[0])
                if weights is not None:
                    per_name[name] = (weights, f.confidence)
            elif f.soft_miss > 0 and labs[0] in allowed:
                # an unknown name still gets some mass on its label
                per_name[name] = ({labs[0]: 1.0}, rng.uniform(0.5, 1.5) * f.soft_miss)
        per_word = {}
        for w in common[n_common // 8:]:
            if rng.random() < f.false_positive:
                weights = label_weights(f, allowed, allowed[rng.integers(len(allowed))])
                if weights is not None:
                    per_word[w] = (weights, f.confidence)
        behaviour.append((per_name, per_word))

    docs, adocs = [], []
    n_tags = scheme.n_tags
    for d in range(n_docs):
        words, tags, mentions = [], [], []
        while len(words) < doc_length:
            if rng.random() < entity_rate:
                lab = labels[rng.integers(len(labels))]
                name = pools[lab][rng.integers(len(pools[lab]))]
                if (len(name_labels[name]) > 1 or rng.random() < 0.5) and rng.random() < cue_rate:
                    words.append(cues[lab][rng.integers(3)])
                    tags.append("O")
                mentions.append((len(words), name))
                words.extend(name)
                tags.extend([f"B-{lab}"] + [f"I-{lab}"] * (len(name) - 1))
            else:
                words.append(common[rng.choice(n_common, p=zipf)])
                tags.append("O")
        starts = {i: name for i, name in mentions}
        doc = make_document(f"doc{d}", [words], tags=tags)
        anns = {}
        for f, (per_name, per_word) in zip(functions, behaviour):
            # (weights, position inside the predicted span) per token
            pred = [None] * len(words)
            i = 0
            while i < len(words):
                name = starts.get(i)
                if name is not None:
                    weights = per_name.get(name)
                    if weights is not None:
                        for k in range(len(name)):
                            pred[i + k] = (weights, k)
                    i += len(name)
                    continue
                weights = per_word.get(words[i])
                if weights is not None:
                    pred[i] = (weights, 0)
                i += 1
            entries = {}
            for i, p in enumerate(pred):
                if p is not None and rng.random() < f.token_noise:
                    p = None
                if p is None and f.abstain:
                    continue
                vec = np.zeros(n_tags)
                if f.background > 0:
                    bg = rng.uniform(0.5, 1.5) * f.background
                    vec[1:] = bg * rng.dirichlet(np.full(n_tags - 1, 5.0))
                vec[0] = 1.0 - vec.sum()
                if p is not None:
                    (weights, mass), k = p
                    # the predicted mass is taken from O, so hard functions stay sparse
                    mass = np.clip(rng.normal(mass, f.jitter), 0.02, vec[0])
                    vec[0] -= mass
                    for lab, w in weights.items():
                        vec[scheme.begin(lab) if k == 0 else scheme.inside(lab)] += mass * w
                entries[i] = vec
            anns[f.name] = ProbAnnotation(f.name, entries)
        docs.append(doc)
        adocs.append(AnnotatedDocument(doc.id, len(words), anns))
    reliable = max((f for f in functions if not f.abstain), key=lambda f: f.coverage * f.accuracy).name
    return SyntheticCorpus(scheme, docs, adocs, reliable, tuple(functions))
