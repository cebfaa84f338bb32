"""Hidden Markov label model with one Dirichlet emission per labelling function.

The latent state at each token is its true tag. Every non-abstaining
labelling function ``j`` emits a probability vector ``P_ij`` drawn from
``Dirichlet(alpha[j, s_i])``; abstentions are left out of the emission
product. A tag is only admissible at a token if some non-abstaining function
gives it non-zero probability (``O`` alone is admissible where every
function abstains).

Parameters are fitted by Baum-Welch. The initial-state and transition rows
get Dirichlet priors whose pseudo-counts come from the most reliable
function, so the fitted objective is the log-posterior

    sum_d log p(P_d | theta) + sum_k delta_k log pi_k + sum_kl kappa_kl log A_kl

and the M-step for ``pi`` and ``A`` adds those pseudo-counts to the expected
counts. Emission concentrations are re-fitted by weighted Dirichlet maximum
likelihood.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import LabelScheme, repair_bio
from .dirichlet import clamp_simplex, dirichlet_expected_loglik, dirichlet_mle
from .exceptions import InvariantError, SchemaVersionError
from .validation import (
    check_annotated_docs,
    check_interval,
    check_positive_int,
    check_scheme,
    collect_functions,
)

MODEL_SCHEMA = "weakseq.hmm/1"
#: Relative slack on the per-iteration objective before EM is declared divergent.
MONOTONE_SLACK = 1e-9


def inv_logit(w):
    """``e^w / (1 + e^w)`` without overflow."""
    return expit(w)


@dataclass
class HmmModel:
    """Fitted parameters of the Dirichlet-emission HMM.

    ``alphas`` has shape ``(J, T, T)``: function, latent tag, emitted tag.
    The transition matrix is stored directly; ``transition_logits`` gives
    the equivalent per-row softmax parameters.
    """

    scheme: LabelScheme
    functions: list
    initial: np.ndarray
    transition: np.ndarray
    alphas: np.ndarray
    fit_log: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    clamp: float = 1e-3

    @property
    def transition_logits(self):
        return np.log(self.transition)

    def to_dict(self):
        return {
            "schema": MODEL_SCHEMA,
            "scheme": self.scheme.to_dict(),
            "functions": list(self.functions),
            "initial": self.initial.tolist(),
            "transition": self.transition.tolist(),
            "alphas": self.alphas.tolist(),
            "fit_log": [float(v) for v in self.fit_log],
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
            "clamp": float(self.clamp),
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("schema") != MODEL_SCHEMA:
            raise SchemaVersionError(
                f"model schema {data.get('schema')!r} is not supported (expected {MODEL_SCHEMA!r})"
            )
        return cls(
            LabelScheme.from_dict(data["scheme"]),
            list(data["functions"]),
            np.array(data["initial"], dtype=float),
            np.array(data["transition"], dtype=float),
            np.array(data["alphas"], dtype=float),
            list(data["fit_log"]),
            bool(data["converged"]),
            int(data["n_iter"]),
            float(data.get("clamp", 1e-3)),
        )

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


# -- priors and initialisation ---------------------------------------------------


def init_priors(adocs, reliable, n_tags):
    """Add-one smoothed tag and transition counts of the reliable function.

    Returns ``(delta, kappa)``: ``delta[k]`` counts tokens the function tags
    ``k`` (abstention counts as ``O``), ``kappa[k, l]`` counts ``k -> l``
    transitions inside documents; every cell starts at one.
    """
    delta = np.ones(n_tags)
    kappa = np.ones((n_tags, n_tags))
    adocs = list(adocs)
    if adocs and not any(reliable in d.annotations for d in adocs):
        raise ValueError(f"reliable function {reliable!r} does not appear in the annotations")
    for adoc in adocs:
        tags = adoc.hard_labels([reliable], n_tags)[:, 0]
        np.add.at(delta, tags, 1)
        np.add.at(kappa, (tags[:-1], tags[1:]), 1)
    return delta, kappa


def init_emissions(recall, precision, delta, concentration=10.0):
    """Starting concentrations from rough recall/precision estimates.

    ``recall`` and ``precision`` are ``(J, T)`` arrays (function, tag).
    For latent tag ``s`` the vector of function ``j`` is proportional to
    ``r[j, k]`` on ``k == s`` and ``(1 - r[j, s]) (1 - p[j, k]) delta_k``
    elsewhere, with ``delta`` normalised to a distribution. Each vector is
    scaled to sum to ``concentration``.
    """
    recall = np.asarray(recall, dtype=float)
    precision = np.asarray(precision, dtype=float)
    if np.any((recall <= 0) | (recall >= 1)) or np.any((precision <= 0) | (precision >= 1)):
        raise ValueError("recall and precision estimates must lie in (0, 1)")
    delta = np.asarray(delta, dtype=float)
    delta = delta / delta.sum()
    n_funcs, n_tags = recall.shape
    alphas = (1.0 - recall)[:, :, None] * (1.0 - precision)[:, None, :] * delta[None, None, :]
    idx = np.arange(n_tags)
    alphas[:, idx, idx] = recall
    alphas *= concentration / alphas.sum(axis=2, keepdims=True)
    return alphas


# -- inference -------------------------------------------------------------------


@dataclass
class _Batch:
    """Padded emission log-likelihoods for a group of documents."""

    doc_index: list
    lengths: np.ndarray
    log_emissions: np.ndarray  # (D, L, T), -inf where a tag is not admissible


def support_mask(probs, mask):
    """``(n, T)`` admissible tags: non-zero mass in some non-abstaining function."""
    support = np.any((probs > 0) & mask[:, :, None], axis=1)
    silent = ~mask.any(axis=1)
    support[silent] = False
    support[silent, 0] = True
    return support


def emission_loglik(log_x, mask, alphas):
    """``(n, T)`` sum over non-abstaining functions of Dirichlet log-densities."""
    log_norm = gammaln(alphas.sum(axis=2)) - gammaln(alphas).sum(axis=2)  # (J, S)
    per_func = np.einsum("njk,jsk->njs", log_x, alphas - 1.0) + log_norm[None]
    return np.einsum("njs,nj->ns", per_func, mask.astype(float))


def forward_backward_batch(log_emissions, lengths, initial, transition):
    """Scaled forward-backward over padded sequences.

    Returns ``(gamma, loglik, xi, first)``: per-token posteriors ``(D, L, T)``,
    per-document log-likelihoods, expected transition counts summed over
    the batch and expected initial-state counts.
    """
    n_docs, max_len, n_states = log_emissions.shape
    lengths = np.asarray(lengths)
    pos = np.arange(max_len)
    valid = pos[None, :] < lengths[:, None]
    log_b = np.where(valid[:, :, None], log_emissions, 0.0)
    shift = log_b.max(axis=2)
    if not np.all(np.isfinite(shift)):
        raise ValueError("a token admits no tag")
    b = np.exp(log_b - shift[:, :, None])

    alpha = np.empty_like(b)
    scale = np.ones((n_docs, max_len))
    a = initial[None, :] * b[:, 0]
    scale[:, 0] = a.sum(axis=1)
    alpha[:, 0] = a / scale[:, 0, None]
    for t in range(1, max_len):
        a = (alpha[:, t - 1] @ transition) * b[:, t]
        c = np.where(valid[:, t], a.sum(axis=1), 1.0)
        alpha[:, t] = np.where(valid[:, t, None], a / c[:, None], alpha[:, t - 1])
        scale[:, t] = c
    if np.any(scale <= 0):
        raise ValueError("sequence has zero likelihood under the model")

    beta = np.ones_like(b)
    for t in range(max_len - 2, -1, -1):
        inner = valid[:, t + 1]
        nxt = (b[:, t + 1] * beta[:, t + 1]) @ transition.T / scale[:, t + 1, None]
        beta[:, t] = np.where(inner[:, None], nxt, 1.0)

    gamma = alpha * beta
    loglik = np.where(valid, np.log(scale) + shift, 0.0).sum(axis=1)
    weighted = np.where(valid[:, 1:, None], b[:, 1:] * beta[:, 1:] / scale[:, 1:, None], 0.0)
    xi = transition * np.einsum("dti,dtj->ij", alpha[:, :-1], weighted)
    first = gamma[:, 0].sum(axis=0)
    return gamma, loglik, xi, first


def _batches(lengths, max_docs=256):
    order = np.argsort(lengths, kind="stable")
    return [order[k:k + max_docs] for k in range(0, len(order), max_docs)]


class _Data:
    """Dense per-token arrays for a list of annotated documents."""

    def __init__(self, adocs, functions, n_tags, clamp):
        self.adocs = adocs
        self.lengths = np.array([d.n_tokens for d in adocs], dtype=int)
        self.offsets = np.concatenate([[0], np.cumsum(self.lengths)])
        n_total = int(self.offsets[-1])
        probs = np.zeros((n_total, len(functions), n_tags))
        mask = np.zeros((n_total, len(functions)), dtype=bool)
        for d, adoc in enumerate(adocs):
            p, m = adoc.stack(functions, n_tags)
            probs[self.offsets[d]:self.offsets[d + 1]] = p
            mask[self.offsets[d]:self.offsets[d + 1]] = m
        self.mask = mask
        self.support = support_mask(probs, mask)
        x = clamp_simplex(np.where(mask[:, :, None], probs, 1.0 / n_tags), clamp)
        self.x = x
        self.log_x = np.log(x)

    def log_emissions(self, alphas):
        out = emission_loglik(self.log_x, self.mask, alphas)
        return np.where(self.support, out, -np.inf)

    def e_step(self, model):
        """Posteriors, log-likelihood and expected counts under ``model``."""
        n_states = model.transition.shape[0]
        log_e = self.log_emissions(model.alphas)
        gamma_all = np.empty((log_e.shape[0], n_states))
        loglik = 0.0
        xi = np.zeros((n_states, n_states))
        first = np.zeros(n_states)
        for batch in _batches(self.lengths):
            max_len = int(self.lengths[batch].max())
            padded = np.zeros((len(batch), max_len, n_states))
            for r, d in enumerate(batch):
                padded[r, :self.lengths[d]] = log_e[self.offsets[d]:self.offsets[d + 1]]
            gamma, ll, x, f = forward_backward_batch(
                padded, self.lengths[batch], model.initial, model.transition
            )
            for r, d in enumerate(batch):
                gamma_all[self.offsets[d]:self.offsets[d + 1]] = gamma[r, :self.lengths[d]]
            loglik += ll.sum()
            xi += x
            first += f
        return gamma_all, loglik, xi, first

    def marginals(self, model):
        gamma, _, _, _ = self.e_step(model)
        return [gamma[self.offsets[d]:self.offsets[d + 1]] for d in range(len(self.adocs))]


def _log_prior(model, delta, kappa):
    return float(delta @ np.log(model.initial) + (kappa * np.log(model.transition)).sum())


def forward_backward(model, adoc):
    """Posterior tag marginals ``(n, T)`` for one annotated document."""
    data = _Data([adoc], model.functions, model.scheme.n_tags, model.clamp)
    return data.marginals(model)[0]


def decode_map(marginals, scheme):
    """Per-token argmax (ties go to the lower tag index), then BIO repair."""
    marginals = np.asarray(marginals)
    if marginals.shape[0] == 0:
        return []
    return repair_bio(scheme.decode(np.argmax(marginals, axis=1)))


# -- estimator ---------------------------------------------------------------------


def _per_function(value, functions, n_tags, name):
    """Expand a scalar or ``{function: scalar}`` setting to a ``(J, T)`` array."""
    out = np.empty((len(functions), n_tags))
    for j, f in enumerate(functions):
        v = value.get(f, value.get("default", 0.5)) if isinstance(value, dict) else value
        out[j] = v
    if np.any((out <= 0) | (out >= 1)):
        raise ValueError(f"{name} estimates must lie in (0, 1)")
    return out


class HMMAggregator(BaseEstimator):
    """Unsupervised aggregation of labelling functions with a Dirichlet HMM.

    Parameters
    ----------
    scheme : LabelScheme
    reliable : str, optional
        Function whose tags define the informative priors. Without it the
        priors are flat (all pseudo-counts one).
    max_iter : int
        EM iterations; 0 returns the initialisation.
    tol : float
        Stop when the relative objective improvement falls below this.
    concentration : float
        Sum of every initial concentration vector.
    clamp : float
        Observed vectors are clipped to ``[clamp, 1]`` and renormalised.
    recall, precision : float or dict
        Rough per-function estimates used for the starting emissions.
    dirichlet_max_iter, dirichlet_tol : int, float
        Inner fixed-point settings of the emission M-step.
    """

    def __init__(self, scheme=None, reliable=None, max_iter=50, tol=1e-4, concentration=10.0,
                 clamp=1e-3, recall=0.5, precision=0.5, dirichlet_max_iter=200, dirichlet_tol=1e-8):
        self.scheme = scheme
        self.reliable = reliable
        self.max_iter = max_iter
        self.tol = tol
        self.concentration = concentration
        self.clamp = clamp
        self.recall = recall
        self.precision = precision
        self.dirichlet_max_iter = dirichlet_max_iter
        self.dirichlet_tol = dirichlet_tol

    def _check_params(self):
        check_positive_int(self.max_iter, "max_iter", minimum=0)
        check_interval(self.tol, "tol", 0.0, 1.0, closed=True)
        check_interval(self.clamp, "clamp", 0.0, 0.5)
        if not self.concentration > 0:
            raise ValueError("concentration must be positive")

    def fit(self, X, y=None, priors=None):
        """Fit on a list of :class:`AnnotatedDocument`.

        ``priors`` optionally overrides the ``(delta, kappa)`` pseudo-counts.
        """
        self._check_params()
        scheme = check_scheme(self.scheme)
        adocs = check_annotated_docs(X)
        functions = collect_functions(adocs)
        if not functions:
            raise ValueError("no labelling function output to aggregate")
        n_tags = scheme.n_tags

        usable = [d for d in adocs if any(len(a) for a in d.annotations.values())]
        skipped = len(adocs) - len(usable)
        if skipped:
            warnings.warn(f"skipping {skipped} document(s) on which every labelling function abstains")
        if not usable:
            raise ValueError("every document is fully abstained; nothing to fit")

        if priors is not None:
            delta, kappa = (np.asarray(p, dtype=float) for p in priors)
        elif self.reliable is not None:
            delta, kappa = init_priors(usable, self.reliable, n_tags)
        else:
            delta, kappa = np.ones(n_tags), np.ones((n_tags, n_tags))
        if delta.shape != (n_tags,) or kappa.shape != (n_tags, n_tags) or delta.min() <= 0 or kappa.min() <= 0:
            raise ValueError("priors must be positive with shapes (T,) and (T, T)")

        recall = _per_function(self.recall, functions, n_tags, "recall")
        precision = _per_function(self.precision, functions, n_tags, "precision")
        model = HmmModel(
            scheme,
            functions,
            delta / delta.sum(),
            kappa / kappa.sum(axis=1, keepdims=True),
            init_emissions(recall, precision, delta, self.concentration),
            clamp=self.clamp,
        )
        data = _Data(usable, functions, n_tags, self.clamp)
        self.model_ = self._em(model, data, delta, kappa)
        self.priors_ = (delta, kappa)
        self.functions_ = functions
        return self

    def _em(self, model, data, delta, kappa):
        gamma, loglik, xi, first = data.e_step(model)
        objective = loglik + _log_prior(model, delta, kappa)
        model.fit_log = [objective]
        for it in range(self.max_iter):
            model = self._m_step(model, data, gamma, xi, first, delta, kappa)
            gamma, loglik, xi, first = data.e_step(model)
            new = loglik + _log_prior(model, delta, kappa)
            prev = model.fit_log[-1]
            if new < prev - MONOTONE_SLACK * max(1.0, abs(prev)):
                raise InvariantError(f"EM objective decreased at iteration {it + 1}: {prev!r} -> {new!r}")
            model.fit_log.append(new)
            model.n_iter = it + 1
            if abs(new - prev) <= self.tol * max(abs(prev), 1e-300):
                model.converged = True
                break
        return model

    def _m_step(self, model, data, gamma, xi, first, delta, kappa):
        initial = first + delta
        initial /= initial.sum()
        transition = xi + kappa
        transition /= transition.sum(axis=1, keepdims=True)

        weights = gamma[:, None, :] * data.mask[:, :, None]  # (n, J, S)
        w = weights.sum(axis=0)
        sum_log = np.einsum("njs,njk->jsk", weights, data.log_x)
        sum_x = np.einsum("njs,njk->jsk", weights, data.x)
        sum_x2 = np.einsum("njs,njk->jsk", weights, data.x ** 2)
        alphas = model.alphas.copy()
        active = w > 1e-8
        if np.any(active):
            fitted = dirichlet_mle(
                w[active], sum_log[active], sum_x[active], sum_x2[active],
                max_iter=self.dirichlet_max_iter, tol=self.dirichlet_tol,
            )
            old_q = dirichlet_expected_loglik(alphas[active], w[active], sum_log[active])
            new_q = dirichlet_expected_loglik(fitted, w[active], sum_log[active])
            # generalised EM: only accept concentration updates that improve Q
            better = new_q > old_q
            block = alphas[active]
            block[better] = fitted[better]
            alphas[active] = block
        return HmmModel(
            model.scheme, model.functions, initial, transition, alphas,
            fit_log=model.fit_log, converged=False, n_iter=model.n_iter, clamp=model.clamp,
        )

    def predict_proba(self, X):
        """Posterior marginals, one ``(n, T)`` array per document."""
        check_is_fitted(self, "model_")
        adocs = check_annotated_docs(X, allow_empty=True)
        if not adocs:
            return []
        data = _Data(adocs, self.model_.functions, self.model_.scheme.n_tags, self.model_.clamp)
        return data.marginals(self.model_)

    def predict(self, X):
        scheme = self.model_.scheme if hasattr(self, "model_") else None
        return [decode_map(m, scheme) for m in self.predict_proba(X)]

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)

    def score(self, X, y=None):
        """Log-likelihood of ``X`` under the fitted model."""
        check_is_fitted(self, "model_")
        data = _Data(check_annotated_docs(X), self.model_.functions, self.model_.scheme.n_tags, self.model_.clamp)
        return float(data.e_step(self.model_)[1])

    @classmethod
    def from_model(cls, model):
        est = cls(scheme=model.scheme, clamp=model.clamp)
        est.model_ = model
        est.functions_ = list(model.functions)
        return est
