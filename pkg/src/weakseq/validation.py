"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numbers

import numpy as np

from .annotations import AnnotatedDocument
from .corpus import LabelScheme


def check_scheme(scheme):
    if scheme is None:
        raise ValueError("a LabelScheme is required")
    if isinstance(scheme, LabelScheme):
        return scheme
    if isinstance(scheme, dict):
        return LabelScheme.from_dict(scheme)
    return LabelScheme(tuple(scheme))


def check_annotated_docs(X, allow_empty=False):
    """Return ``X`` as a list of :class:`AnnotatedDocument`."""
    if isinstance(X, AnnotatedDocument):
        X = [X]
    docs = list(X)
    if not docs and not allow_empty:
        raise ValueError("at least one annotated document is required")
    for d in docs:
        if not isinstance(d, AnnotatedDocument):
            raise TypeError(f"expected AnnotatedDocument, got {type(d).__name__}")
    return docs


def collect_functions(docs):
    names = set()
    for d in docs:
        names.update(d.annotations)
    return sorted(names)


def check_marginals(marginals, n_tags=None, tol=1e-6):
    """Validate an ``(n, T)`` matrix whose rows lie on the probability simplex."""
    m = np.asarray(marginals, dtype=float)
    if m.ndim != 2 or (n_tags is not None and m.shape[1] != n_tags):
        raise ValueError(f"marginals must have shape (n, {n_tags}), got {m.shape}")
    if m.size and (not np.all(np.isfinite(m)) or m.min() < -tol):
        raise ValueError("marginals contain negative or non-finite entries")
    bad = np.abs(m.sum(axis=1) - 1.0) > tol
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0])
        raise ValueError(f"marginal row {row} sums to {m[row].sum()!r}, not 1")
    return m


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_interval(value, name, low, high, closed=False):
    ok = low <= value <= high if closed else low < value < high
    if not ok:
        raise ValueError(f"{name}={value!r} outside {'[' if closed else '('}{low}, {high}{']' if closed else ')'}")
    return float(value)
