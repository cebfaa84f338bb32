"""Baseline aggregators: thresholded majority voting and mixtures of multinomials.

The multinomial family works on hard labels: the argmax tag of every
labelling function at every token, with abstention read as ``O``. Latent
classes are anonymous, so after fitting they are matched to tags through
their correlation with a reference labelling.

Variants (``K`` latent classes, ``J`` functions):

ACC
    One accuracy per function; errors are spread uniformly,
    ``p(k | s) = pi_j`` if ``k == s`` else ``(1 - pi_j) / (K - 1)``.
CV
    One accuracy per function and latent class, ``pi_js``.
CM
    A full confusion matrix per function.
SEQ
    ``p(k | s, prev) = softmax_k(mu_jsk + beta_jsk * [prev == k])``, where
    ``prev`` is the function's own previous hard label.
DCM
    CM emissions with Markov dependence between latent classes.

Every multinomial vector gets a symmetric Dirichlet pseudo-count
``smoothing``; SEQ's logistic parameters get an L2 penalty. EM maximises
the resulting penalised log-likelihood, which is what ``fit_log`` records.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import LabelScheme, repair_bio
from .exceptions import InvariantError, SchemaVersionError
from .hmm import MONOTONE_SLACK, decode_map, forward_backward_batch
from .validation import check_annotated_docs, check_positive_int, check_scheme, collect_functions

VARIANTS = ("acc", "cv", "cm", "seq", "dcm")
STRATEGIES = ("reliable-function", "majority-voter", "dirichlet-hmm")
MULTINOMIAL_SCHEMA = "weakseq.multinomial/1"
CORRELATION_THRESHOLD = 0.1


# -- majority voting -----------------------------------------------------------


def hard_labels(adoc, functions, n_tags):
    """``(n, J)`` argmax tag per function; abstention becomes ``O`` (index 0)."""
    return adoc.hard_labels(functions, n_tags)


def vote_tags(adoc, scheme, threshold=1, functions=None):
    """Thresholded majority vote over non-``O`` predictions, as tag indices.

    A token gets the most frequent non-``O`` argmax tag when at least
    ``threshold`` functions predict some non-``O`` tag there; ties go to the
    lower tag index. Other tokens get ``O``.
    """
    functions = sorted(adoc.annotations) if functions is None else functions
    probs, mask = adoc.stack(functions, scheme.n_tags)
    votes = np.zeros((adoc.n_tokens, scheme.n_tags), dtype=int)
    if functions:
        hard = probs.argmax(axis=2)
        rows = np.repeat(np.arange(adoc.n_tokens), len(functions)).reshape(hard.shape)
        np.add.at(votes, (rows[mask], hard[mask]), 1)
    votes[:, 0] = 0
    out = np.argmax(votes, axis=1)
    out[votes.sum(axis=1) < threshold] = 0
    return out


def majority_vote(adoc, scheme, threshold=1, functions=None):
    """Majority-vote tag strings for one document, BIO-repaired."""
    return repair_bio(scheme.decode(vote_tags(adoc, scheme, threshold, functions)))


class MajorityVoter(BaseEstimator):
    """Closed-form baseline; ``fit`` only records the function list."""

    def __init__(self, scheme=None, threshold=1):
        self.scheme = scheme
        self.threshold = threshold

    def fit(self, X=None, y=None):
        check_positive_int(self.threshold, "threshold")
        self.scheme_ = check_scheme(self.scheme)
        self.functions_ = collect_functions(check_annotated_docs(X)) if X is not None else None
        return self

    def predict(self, X):
        if not hasattr(self, "scheme_"):
            self.fit()
        return [majority_vote(d, self.scheme_, self.threshold, self.functions_)
                for d in check_annotated_docs(X, allow_empty=True)]

    def predict_proba(self, X):
        """One-hot marginals of the voted tags."""
        out = []
        for tags in self.predict(X):
            m = np.zeros((len(tags), self.scheme_.n_tags))
            m[np.arange(len(tags)), self.scheme_.encode(tags)] = 1.0
            out.append(m)
        return out


# -- label matching --------------------------------------------------------------


def indicator_correlations(states, reference, n_states, n_tags):
    """Pearson correlation between every state and tag indicator sequence.

    Constant indicators have undefined correlation, reported as 0.
    """
    states = np.asarray(states)
    reference = np.asarray(reference)
    s_ind = (states[:, None] == np.arange(n_states)[None]).astype(float)
    r_ind = (reference[:, None] == np.arange(n_tags)[None]).astype(float)
    s_c = s_ind - s_ind.mean(axis=0)
    r_c = r_ind - r_ind.mean(axis=0)
    cov = s_c.T @ r_c
    norm = np.sqrt((s_c ** 2).sum(axis=0))[:, None] * np.sqrt((r_c ** 2).sum(axis=0))[None]
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(norm > 0, cov / norm, 0.0)
    return corr


def match_states(states, reference, n_states, n_tags, threshold=CORRELATION_THRESHOLD):
    """Tag assigned to each latent state: the most correlated reference tag.

    States whose best correlation is below ``threshold`` are assigned ``O``.
    """
    corr = indicator_correlations(states, reference, n_states, n_tags)
    assignment = np.argmax(corr, axis=1)
    assignment[corr.max(axis=1) < threshold] = 0
    return assignment, corr


# -- the multinomial family --------------------------------------------------------


@dataclass
class MultinomialModel:
    """Parameters of a fitted mixture of multinomials.

    ``emissions[j, s, k]`` is ``p(Y_j = k | s)`` (for SEQ, the probability
    when the previous label differs from ``k``). ``assignment[s]`` is the tag
    index latent class ``s`` stands for.
    """

    variant: str
    scheme: LabelScheme
    functions: list
    sigma: np.ndarray
    emissions: np.ndarray = None
    transition: np.ndarray = None
    accuracy: np.ndarray = None
    mu: np.ndarray = None
    beta: np.ndarray = None
    assignment: np.ndarray = None
    fit_log: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0

    def emission_log_probs(self, labels, prev):
        """``(n, J, S)`` log ``p(Y_ij | s)`` for hard labels and previous labels."""
        n, n_funcs = labels.shape
        j_idx = np.arange(n_funcs)[None, :]
        if self.variant == "seq":
            table = self.seq_log_probs()  # (J, S, K + 1, K)
            out = table[j_idx, :, prev + 1, labels]  # (n, J, S)
            return out
        log_e = np.log(self.emissions)  # (J, S, K)
        return np.transpose(log_e, (0, 2, 1))[j_idx, labels]  # (n, J, S)

    def seq_log_probs(self):
        """SEQ log-probabilities ``[j, s, prev + 1, k]``; ``prev = -1`` is the document start."""
        n_states = self.mu.shape[2]
        repeat = np.zeros((n_states + 1, n_states))
        repeat[1:] = np.eye(n_states)
        logits = self.mu[:, :, None, :] + self.beta[:, :, None, :] * repeat
        return logits - logsumexp(logits, axis=3, keepdims=True)

    def to_dict(self):
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "schema": MULTINOMIAL_SCHEMA,
            "variant": self.variant,
            "scheme": self.scheme.to_dict(),
            "functions": list(self.functions),
            "sigma": arr(self.sigma),
            "emissions": arr(self.emissions),
            "transition": arr(self.transition),
            "accuracy": arr(self.accuracy),
            "mu": arr(self.mu),
            "beta": arr(self.beta),
            "assignment": arr(self.assignment),
            "fit_log": [float(v) for v in self.fit_log],
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("schema") != MULTINOMIAL_SCHEMA:
            raise SchemaVersionError(
                f"model schema {data.get('schema')!r} is not supported (expected {MULTINOMIAL_SCHEMA!r})"
            )

        def arr(key, dtype=float):
            return None if data.get(key) is None else np.array(data[key], dtype=dtype)

        return cls(
            data["variant"], LabelScheme.from_dict(data["scheme"]), list(data["functions"]),
            arr("sigma"), arr("emissions"), arr("transition"), arr("accuracy"), arr("mu"), arr("beta"),
            arr("assignment", int), list(data["fit_log"]), bool(data["converged"]), int(data["n_iter"]),
        )

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1)


def _tied_emissions(accuracy, n_states):
    """Emission tensor for ACC (``accuracy`` shape ``(J,)``) or CV (``(J, S)``)."""
    acc = np.asarray(accuracy, dtype=float)
    if acc.ndim == 1:
        acc = np.repeat(acc[:, None], n_states, axis=1)
    off = (1.0 - acc) / (n_states - 1)
    em = np.repeat(off[:, :, None], n_states, axis=2)
    idx = np.arange(n_states)
    em[:, idx, idx] = acc
    return em


class _HardData:
    def __init__(self, adocs, functions, n_tags):
        labels = [d.hard_labels(functions, n_tags) for d in adocs]
        self.lengths = np.array([len(l) for l in labels], dtype=int)
        self.offsets = np.concatenate([[0], np.cumsum(self.lengths)])
        self.labels = np.concatenate(labels) if labels else np.zeros((0, len(functions)), dtype=int)
        prev = []
        for l in labels:
            p = np.full_like(l, -1)
            p[1:] = l[:-1]
            prev.append(p)
        self.prev = np.concatenate(prev) if prev else self.labels.copy()
        self.starts = self.offsets[:-1]


class MultinomialAggregator(BaseEstimator):
    """EM-fitted mixture-of-multinomials aggregator (ACC, CV, CM, SEQ, DCM).

    Parameters
    ----------
    scheme : LabelScheme
    variant : {"acc", "cv", "cm", "seq", "dcm"}
    max_iter, tol : int, float
        EM stopping rule; hitting ``max_iter`` leaves ``converged`` False.
    smoothing : float
        Dirichlet pseudo-count added to every multinomial vector.
    init : {"reference", "tied"}
        ``"reference"`` starts EM with one M-step on one-hot posteriors taken
        from the reference labelling, so latent classes begin aligned with
        tags; ``"tied"`` starts from emissions with diagonal ``init_accuracy``.
    init_accuracy : float
        Diagonal mass of the tied starting emissions.
    reliable : str, optional
        Function whose tag frequencies initialise ``sigma``; defaults to the
        reference labelling.
    matching : {"reliable-function", "majority-voter", "dirichlet-hmm"}
    threshold : int
        Majority-vote threshold when matching against the majority voter.
    seq_lr, seq_steps, seq_tol, seq_l2 : float, int, float, float
        Gradient-ascent settings for SEQ's logistic M-step.
    """

    def __init__(self, scheme=None, variant="cm", max_iter=50, tol=1e-4, smoothing=0.01,
                 init="reference", init_accuracy=0.7, reliable=None, matching="majority-voter", threshold=1,
                 seq_lr=0.1, seq_steps=100, seq_tol=1e-6, seq_l2=1e-3):
        self.scheme = scheme
        self.variant = variant
        self.max_iter = max_iter
        self.tol = tol
        self.smoothing = smoothing
        self.init = init
        self.init_accuracy = init_accuracy
        self.reliable = reliable
        self.matching = matching
        self.threshold = threshold
        self.seq_lr = seq_lr
        self.seq_steps = seq_steps
        self.seq_tol = seq_tol
        self.seq_l2 = seq_l2

    # fitting

    def fit(self, X, y=None, reference=None):
        """Fit on annotated documents.

        ``reference`` optionally supplies the matching labelling directly
        (one tag-index array per document); otherwise it is derived from
        ``matching``. For ``"dirichlet-hmm"`` pass the HMM output here.
        """
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.matching not in STRATEGIES:
            raise ValueError(f"unknown matching strategy {self.matching!r}; choose from {STRATEGIES}")
        if self.init not in ("reference", "tied"):
            raise ValueError(f"init must be 'reference' or 'tied', got {self.init!r}")
        check_positive_int(self.max_iter, "max_iter", minimum=0)
        if not self.smoothing > 0:
            raise ValueError("smoothing must be positive")
        scheme = check_scheme(self.scheme)
        adocs = check_annotated_docs(X)
        functions = collect_functions(adocs)
        n = scheme.n_tags
        data = _HardData(adocs, functions, n)
        if len(np.unique(data.labels)) < 2:
            raise ValueError("the labelling functions produce fewer than 2 distinct tags")

        if reference is None:
            reference = self.reference_labels(adocs, scheme)
        ref = np.concatenate([np.asarray(r, dtype=int) for r in reference])
        if ref.shape[0] != data.labels.shape[0]:
            raise ValueError("reference labelling does not cover the annotated tokens")
        if self.reliable is not None:
            if self.reliable not in functions:
                raise ValueError(f"reliable function {self.reliable!r} not in annotations")
            sigma_src = data.labels[:, functions.index(self.reliable)]
        else:
            sigma_src = ref
        sigma = np.bincount(sigma_src, minlength=n) + 1.0
        sigma /= sigma.sum()

        model = self._init_model(scheme, functions, sigma)
        if self.init == "reference":
            model = self._reference_init(model, data, ref)
        model = self._em(model, data)
        post = self._posteriors(model, data)[0]
        model.assignment, self.correlations_ = match_states(post.argmax(axis=1), ref, n, n)
        self.model_ = model
        self.functions_ = functions
        return self

    def reference_labels(self, adocs, scheme):
        if self.matching == "majority-voter":
            return [vote_tags(d, scheme, self.threshold) for d in adocs]
        if self.matching == "reliable-function":
            if self.reliable is None:
                raise ValueError("matching on the reliable function needs `reliable`")
            if not any(self.reliable in d.annotations for d in adocs):
                raise ValueError(f"reference function {self.reliable!r} missing from annotations")
            return [d.hard_labels([self.reliable], scheme.n_tags)[:, 0] for d in adocs]
        raise ValueError("matching on the Dirichlet HMM needs its labelling passed as `reference`")

    def _init_model(self, scheme, functions, sigma):
        n = scheme.n_tags
        n_funcs = len(functions)
        a = self.init_accuracy
        model = MultinomialModel(self.variant, scheme, functions, sigma)
        if self.variant == "acc":
            model.accuracy = np.full(n_funcs, a)
            model.emissions = _tied_emissions(model.accuracy, n)
        elif self.variant == "cv":
            model.accuracy = np.full((n_funcs, n), a)
            model.emissions = _tied_emissions(model.accuracy, n)
        else:
            model.emissions = _tied_emissions(np.full(n_funcs, a), n)
        if self.variant == "seq":
            model.mu = np.log(model.emissions)
            model.beta = np.zeros_like(model.mu)
        if self.variant == "dcm":
            model.transition = np.full((n, n), 1.0 / n)
        return model

    def _reference_init(self, model, data, ref):
        n_states = len(model.sigma)
        post = np.eye(n_states)[ref]
        xi = first = None
        if self.variant == "dcm":
            first = np.bincount(ref[data.starts[data.lengths > 0]], minlength=n_states).astype(float)
            inner = np.ones(len(ref), dtype=bool)
            inner[data.starts] = False
            xi = np.zeros((n_states, n_states))
            np.add.at(xi, (ref[np.flatnonzero(inner) - 1], ref[inner]), 1.0)
        new = self._m_step(model, data, post, xi, first)
        new.sigma = model.sigma
        return new

    def _log_prior(self, model):
        a = self.smoothing
        lp = a * np.log(model.sigma).sum()
        if self.variant == "seq":
            lp -= 0.5 * self.seq_l2 * ((model.mu ** 2).sum() + (model.beta ** 2).sum())
        elif self.variant == "acc":
            # one tied row per function: a pseudo-counts on each of its K outcomes
            k = len(model.sigma)
            acc = model.accuracy
            lp += a * (np.log(acc) + (k - 1) * np.log((1.0 - acc) / (k - 1))).sum()
        else:
            lp += a * np.log(model.emissions).sum()
        if self.variant == "dcm":
            lp += a * np.log(model.transition).sum()
        return float(lp)

    def _posteriors(self, model, data):
        """State posteriors ``(N, S)``, log-likelihood and (DCM) transition counts."""
        log_e = model.emission_log_probs(data.labels, data.prev).sum(axis=1)  # (N, S)
        if self.variant != "dcm":
            joint = log_e + np.log(model.sigma)[None]
            norm = logsumexp(joint, axis=1)
            return np.exp(joint - norm[:, None]), float(norm.sum()), None, None
        n_states = len(model.sigma)
        post = np.empty_like(log_e)
        xi = np.zeros((n_states, n_states))
        first = np.zeros(n_states)
        loglik = 0.0
        order = np.argsort(data.lengths, kind="stable")
        for k in range(0, len(order), 256):
            batch = order[k:k + 256]
            max_len = int(data.lengths[batch].max())
            padded = np.zeros((len(batch), max_len, n_states))
            for r, d in enumerate(batch):
                padded[r, :data.lengths[d]] = log_e[data.offsets[d]:data.offsets[d + 1]]
            gamma, ll, x, f = forward_backward_batch(padded, data.lengths[batch], model.sigma, model.transition)
            for r, d in enumerate(batch):
                post[data.offsets[d]:data.offsets[d + 1]] = gamma[r, :data.lengths[d]]
            loglik += ll.sum()
            xi += x
            first += f
        return post, loglik, xi, first

    def _em(self, model, data):
        post, loglik, xi, first = self._posteriors(model, data)
        model.fit_log = [loglik + self._log_prior(model)]
        for it in range(self.max_iter):
            model = self._m_step(model, data, post, xi, first)
            post, loglik, xi, first = self._posteriors(model, data)
            new = loglik + self._log_prior(model)
            prev = model.fit_log[-1]
            if new < prev - MONOTONE_SLACK * max(1.0, abs(prev)):
                raise InvariantError(f"{self.variant} EM objective decreased at iteration {it + 1}")
            model.fit_log.append(new)
            model.n_iter = it + 1
            if abs(new - prev) <= self.tol * max(abs(prev), 1e-300):
                model.converged = True
                break
        return model

    def _m_step(self, model, data, post, xi, first):
        a = self.smoothing
        n_tokens, n_funcs = data.labels.shape
        n_states = post.shape[1]
        new = MultinomialModel(self.variant, model.scheme, model.functions, None,
                               fit_log=model.fit_log, n_iter=model.n_iter)
        if self.variant == "dcm":
            new.sigma = (first + a) / (first.sum() + n_states * a)
            trans = xi + a
            new.transition = trans / trans.sum(axis=1, keepdims=True)
        else:
            new.sigma = (post.sum(axis=0) + a) / (n_tokens + n_states * a)

        # counts[j, s, k] = expected number of times function j says k in state s
        onehot = np.zeros((n_tokens, n_funcs, n_states))
        np.put_along_axis(onehot, data.labels[:, :, None], 1.0, axis=2)
        counts = np.einsum("ns,njk->jsk", post, onehot)
        idx = np.arange(n_states)
        if self.variant == "acc":
            correct = counts[:, idx, idx].sum(axis=1)
            new.accuracy = (correct + a) / (n_tokens + n_states * a)
            new.emissions = _tied_emissions(new.accuracy, n_states)
        elif self.variant == "cv":
            correct = counts[:, idx, idx]
            new.accuracy = (correct + a) / (counts.sum(axis=2) + n_states * a)
            new.emissions = _tied_emissions(new.accuracy, n_states)
        elif self.variant in ("cm", "dcm"):
            em = counts + a
            new.emissions = em / em.sum(axis=2, keepdims=True)
        else:
            new.mu, new.beta = self._seq_m_step(model, data, post)
            new.emissions = np.exp(new.mu - logsumexp(new.mu, axis=2, keepdims=True))
        return new

    def _seq_m_step(self, model, data, post):
        """Gradient ascent on the expected logistic log-likelihood.

        The likelihood only depends on (previous label, label) pairs, so it is
        evaluated on the pair counts ``stats[j, s, prev + 1, k]``.
        """
        n_tokens, n_funcs = data.labels.shape
        n_states = post.shape[1]
        stats = np.zeros((n_funcs, n_states, n_states + 1, n_states))
        for j in range(n_funcs):
            flat = (data.prev[:, j] + 1) * n_states + data.labels[:, j]
            for s in range(n_states):
                stats[j, s] += np.bincount(flat, weights=post[:, s],
                                           minlength=(n_states + 1) * n_states).reshape(n_states + 1, n_states)
        # per-row curvature scale; the penalty keeps it away from 0 for empty states
        weight = stats.sum(axis=(2, 3))[:, :, None] + self.seq_l2  # (J, S, 1)
        repeat = np.zeros((n_states + 1, n_states))
        repeat[1:] = np.eye(n_states)  # row 0 is "no previous label"

        def objective(mu, beta):
            logp = log_softmax(mu[:, :, None, :] + beta[:, :, None, :] * repeat, axis=3)
            ll = (stats * logp).sum()
            return ll - 0.5 * self.seq_l2 * ((mu ** 2).sum() + (beta ** 2).sum()), logp

        mu, beta = model.mu.copy(), model.beta.copy()
        value, logp = objective(mu, beta)
        best = (value, mu, beta)
        row_totals = stats.sum(axis=3, keepdims=True)
        for _ in range(self.seq_steps):
            resid = stats - row_totals * np.exp(logp)
            g_mu = (resid.sum(axis=2) - self.seq_l2 * mu) / weight
            g_beta = ((resid * repeat).sum(axis=2) - self.seq_l2 * beta) / weight
            mu = mu + self.seq_lr * g_mu
            beta = beta + self.seq_lr * g_beta
            value, logp = objective(mu, beta)
            if value > best[0]:
                best = (value, mu, beta)
            if max(np.abs(g_mu).max(), np.abs(g_beta).max()) < self.seq_tol:
                break
        return best[1], best[2]

    # prediction

    def predict_proba(self, X):
        """Tag marginals, one ``(n, T)`` array per document.

        State posteriors are pushed through the state-to-tag assignment.
        """
        check_is_fitted(self, "model_")
        adocs = check_annotated_docs(X, allow_empty=True)
        if not adocs:
            return []
        model = self.model_
        data = _HardData(adocs, model.functions, model.scheme.n_tags)
        post = self._posteriors(model, data)[0]
        tag_post = np.zeros((post.shape[0], model.scheme.n_tags))
        for s, tag in enumerate(model.assignment):
            tag_post[:, tag] += post[:, s]
        return [tag_post[data.offsets[d]:data.offsets[d + 1]] for d in range(len(adocs))]

    def predict(self, X):
        return [decode_map(m, self.model_.scheme) for m in self.predict_proba(X)]

    def state_posteriors(self, X):
        check_is_fitted(self, "model_")
        adocs = check_annotated_docs(X)
        data = _HardData(adocs, self.model_.functions, self.model_.scheme.n_tags)
        post = self._posteriors(self.model_, data)[0]
        return [post[data.offsets[d]:data.offsets[d + 1]] for d in range(len(adocs))]

    @classmethod
    def from_model(cls, model):
        est = cls(scheme=model.scheme, variant=model.variant)
        est.model_ = model
        est.functions_ = list(model.functions)
        return est
