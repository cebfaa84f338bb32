"""Distilling aggregated labels into a standalone token classifier.

The classifier is a softmax-linear model over hashed sparse features. It
is trained by minibatch SGD on the expected cross-entropy against the
probabilistic labels, which reduces to ordinary cross-entropy when the
labels are one-hot.
"""
from __future__ import annotations

import json
import re
import struct

import numpy as np
import scipy.sparse as sp
from scipy.special import log_softmax, softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils import murmurhash3_32
from sklearn.utils.validation import check_is_fitted

from .corpus import LabelScheme
from .exceptions import SchemaVersionError
from .hmm import decode_map
from .validation import check_marginals, check_positive_int, check_scheme

CLASSIFIER_SCHEMA = "weakseq.classifier/1"
MAGIC = b"WSQCLF\x00\x01"
BOS, EOS = "<s>", "</s>"
_SHAPE_RUNS = re.compile(r"(.)\1+")


def word_shape(word):
    """Collapsed case/digit pattern, e.g. ``"McDonald's"`` -> ``"XxXx'x"``."""
    shape = "".join("X" if c.isupper() else "x" if c.islower() else "d" if c.isdigit() else c for c in word)
    return _SHAPE_RUNS.sub(r"\1", shape)


def feature_names(doc, i):
    """Feature strings of token ``i``; neighbours do not cross sentence boundaries."""
    if not 0 <= i < len(doc):
        raise IndexError(f"token {i} out of range for a document of {len(doc)} tokens")
    words = doc.words
    lo, hi = next((a, b) for a, b in doc.sentences if a <= i < b)
    word = words[i]
    low = word.lower()
    feats = ["bias", f"w={low}", f"shape={word_shape(word)}"]
    if word.isupper():
        feats.append("upper")
    if word.istitle():
        feats.append("title")
    for k in (1, 2, 3):
        feats.append(f"p{k}={low[:k]}")
        feats.append(f"s{k}={low[-k:]}")
    for off in (-2, -1, 1, 2):
        j = i + off
        neighbour = words[j].lower() if lo <= j < hi else (BOS if j < lo else EOS)
        feats.append(f"w{off:+d}={neighbour}")
    pos = doc.tokens[i].pos
    if pos is not None:
        feats.append(f"pos={pos}")
    return feats


def _hash(feature, seed, dim):
    return murmurhash3_32(feature, seed=seed, positive=True) % dim


def featurize(doc, i, seed=0, dim=2 ** 18):
    """Hashed feature vector of token ``i`` as a ``1 x dim`` sparse row."""
    idx = [_hash(f, seed, dim) for f in feature_names(doc, i)]
    return sp.csr_matrix((np.ones(len(idx)), (np.zeros(len(idx), dtype=int), idx)), shape=(1, dim))


def featurize_document(doc, seed=0, dim=2 ** 18):
    """``(n_tokens, dim)`` sparse feature matrix of a document."""
    rows, cols = [], []
    for i in range(len(doc)):
        idx = [_hash(f, seed, dim) for f in feature_names(doc, i)]
        rows.extend([i] * len(idx))
        cols.extend(idx)
    m = sp.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(len(doc), dim))
    m.sum_duplicates()
    return m


def expected_loss(weights, features, targets, l2=0.0):
    """Summed expected cross-entropy plus ``l2 / 2 * ||W||^2``."""
    logp = log_softmax(features @ weights, axis=1)
    return float(-(targets * logp).sum() + 0.5 * l2 * (weights ** 2).sum())


def expected_loss_grad(weights, features, targets, l2=0.0):
    """Gradient of :func:`expected_loss` with respect to the weights."""
    probs = softmax(features @ weights, axis=1)
    return np.asarray(features.T @ (probs - targets)) + l2 * weights


class TokenClassifier(ClassifierMixin, BaseEstimator):
    """Hashed-feature softmax classifier trained on probabilistic labels.

    Parameters
    ----------
    scheme : LabelScheme
    dim : int
        Hashing dimension, at least 2**10.
    seed : int
        Seeds both the feature hash and the shuffling.
    lr : float
        Initial per-token step size; epoch ``e`` uses ``lr / (1 + e)``.
    epochs, batch_size : int
    l2 : float
        Weight decay coefficient.
    """

    def __init__(self, scheme=None, dim=2 ** 18, seed=0, lr=0.1, epochs=5, batch_size=32, l2=1e-5):
        self.scheme = scheme
        self.dim = dim
        self.seed = seed
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.l2 = l2

    def _targets(self, docs, y, scheme):
        out = []
        for doc, target in zip(docs, y):
            if isinstance(target, np.ndarray) and target.ndim == 2:
                m = check_marginals(target, scheme.n_tags)
            else:
                m = np.zeros((len(target), scheme.n_tags))
                m[np.arange(len(target)), scheme.encode(list(target))] = 1.0
            if m.shape[0] != len(doc):
                raise ValueError(f"{doc.id!r}: {m.shape[0]} label rows for {len(doc)} tokens")
            out.append(m)
        return out

    def fit(self, X, y):
        """Train on documents ``X`` and per-document labels ``y``.

        Each element of ``y`` is either an ``(n, T)`` marginal matrix or a
        sequence of tag strings (treated as one-hot marginals).
        """
        scheme = check_scheme(self.scheme)
        check_positive_int(self.dim, "dim", minimum=2 ** 10)
        check_positive_int(self.epochs, "epochs", minimum=0)
        check_positive_int(self.batch_size, "batch_size")
        docs, y = list(X), list(y)
        if len(docs) != len(y):
            raise ValueError(f"{len(docs)} documents but {len(y)} label sets")
        targets = np.vstack(self._targets(docs, y, scheme)) if docs else np.zeros((0, scheme.n_tags))
        feats = sp.vstack([featurize_document(d, self.seed, self.dim) for d in docs], format="csr") \
            if docs else sp.csr_matrix((0, self.dim))

        rng = np.random.default_rng(self.seed)
        n = feats.shape[0]
        # W = scale * V keeps weight decay O(1) per step
        v = np.zeros((self.dim, scheme.n_tags))
        scale = 1.0
        log = []
        for epoch in range(self.epochs):
            lr = self.lr / (1.0 + epoch)
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, self.batch_size):
                batch = order[start:start + self.batch_size]
                xb = feats[batch]
                qb = targets[batch]
                logits = scale * np.asarray(xb @ v)
                logp = log_softmax(logits, axis=1)
                total += float(-(qb * logp).sum())
                # the objective is a sum over tokens, so batch gradients are sums too
                resid = np.exp(logp) - qb
                scale *= 1.0 - lr * self.l2
                coo = xb.tocoo()
                np.add.at(v, coo.col, -(lr / scale) * coo.data[:, None] * resid[coo.row])
                if scale < 1e-6:
                    v *= scale
                    scale = 1.0
            log.append(total / max(n, 1))
        self.weights_ = v * scale
        self.training_log_ = log
        self.scheme_ = scheme
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "weights_")
        return [softmax(featurize_document(d, self.seed, self.dim) @ self.weights_, axis=1) for d in X]

    def predict(self, X):
        return [decode_map(p, self.scheme_) for p in self.predict_proba(X)]

    def score(self, X, y):
        """Negative mean expected cross-entropy (without the penalty) on labelled documents."""
        docs = list(X)
        targets = np.vstack(self._targets(docs, list(y), self.scheme_))
        feats = sp.vstack([featurize_document(d, self.seed, self.dim) for d in docs], format="csr")
        return -expected_loss(self.weights_, feats, targets) / max(feats.shape[0], 1)

    # serialisation: magic, JSON header, nonzero row ids (uint32), rows (float64)

    def to_bytes(self):
        check_is_fitted(self, "weights_")
        rows = np.flatnonzero(np.any(self.weights_ != 0, axis=1)).astype("<u4")
        header = json.dumps({
            "schema": CLASSIFIER_SCHEMA,
            "scheme": self.scheme_.to_dict(),
            "params": {k: v for k, v in self.get_params().items() if k != "scheme"},
            "training_log": [float(x) for x in self.training_log_],
            "n_rows": int(rows.size),
        }, sort_keys=True).encode()
        return b"".join([
            MAGIC, struct.pack("<I", len(header)), header,
            rows.tobytes(), self.weights_[rows].astype("<f8").tobytes(),
        ])

    @classmethod
    def from_bytes(cls, data):
        if data[:len(MAGIC)] != MAGIC:
            raise SchemaVersionError("not a classifier file (bad magic bytes)")
        pos = len(MAGIC)
        (size,) = struct.unpack("<I", data[pos:pos + 4])
        pos += 4
        header = json.loads(data[pos:pos + size])
        pos += size
        if header.get("schema") != CLASSIFIER_SCHEMA:
            raise SchemaVersionError(
                f"classifier schema {header.get('schema')!r} is not supported (expected {CLASSIFIER_SCHEMA!r})"
            )
        scheme = LabelScheme.from_dict(header["scheme"])
        clf = cls(scheme=scheme, **header["params"])
        n_rows = header["n_rows"]
        rows = np.frombuffer(data[pos:pos + 4 * n_rows], dtype="<u4")
        pos += 4 * n_rows
        values = np.frombuffer(data[pos:pos + 8 * n_rows * scheme.n_tags], dtype="<f8")
        weights = np.zeros((clf.dim, scheme.n_tags))
        weights[rows] = values.reshape(n_rows, scheme.n_tags)
        clf.weights_ = weights
        clf.training_log_ = header["training_log"]
        clf.scheme_ = scheme
        return clf
