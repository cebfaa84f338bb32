"""Shared plumbing for labelling functions."""
from __future__ import annotations

import numpy as np

from ..annotations import ProbAnnotation


def span_entries(start, end, distribution, scheme, entries=None):
    """Expand a label distribution over ``[start, end)`` into BIO vectors.

    ``distribution`` maps scheme labels to probabilities summing to one. The
    first token receives the mass on ``B-`` tags, the others on ``I-`` tags.
    """
    entries = {} if entries is None else entries
    first = np.zeros(scheme.n_tags)
    rest = np.zeros(scheme.n_tags)
    for label, p in distribution.items():
        first[scheme.begin(label)] += p
        rest[scheme.inside(label)] += p
    entries[start] = first
    for i in range(start + 1, end):
        entries[i] = rest.copy()
    return entries


def project_distribution(distribution, scheme):
    """Map foreign labels into ``scheme`` and renormalise; ``None`` if nothing is left."""
    out = {}
    for label, p in distribution.items():
        target = scheme.project(label)
        if target is not None and p > 0:
            out[target] = out.get(target, 0.0) + p
    total = sum(out.values())
    if total <= 0:
        return None
    return {k: v / total for k, v in out.items()}


def uniform_over(labels, scheme):
    """Uniform distribution over the distinct scheme images of ``labels``."""
    targets = []
    for label in labels:
        t = scheme.project(label)
        if t is not None and t not in targets:
            targets.append(t)
    if not targets:
        return None
    return {t: 1.0 / len(targets) for t in targets}


class LabellingFunction:
    """A named procedure mapping a document to a :class:`ProbAnnotation`.

    Subclasses implement :meth:`spans`, yielding ``(start, end, distribution)``
    triples over foreign or scheme labels; projection into the scheme and BIO
    expansion happen here. A ``None`` distribution means "an entity of
    unknown type" and becomes uniform over the function's declared labels.
    """

    name = "labelling_function"
    #: Labels (before scheme projection) this function may emit.
    labels = ()

    def spans(self, doc):
        raise NotImplementedError

    def __call__(self, doc, scheme):
        entries = {}
        generic = uniform_over(self.labels, scheme)
        for start, end, dist in self.spans(doc):
            dist = generic if dist is None else project_distribution(dist, scheme)
            if dist is not None:
                span_entries(start, end, dist, scheme, entries)
        return ProbAnnotation(self.name, entries)

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r})"
