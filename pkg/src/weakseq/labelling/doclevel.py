"""Document-level labelling functions.

Both functions work in two stages: they read a *base* annotation (typically
the combination of all local labelling functions) and turn its spans into
document-level evidence.
"""
from __future__ import annotations

import numpy as np

from ..annotations import ProbAnnotation
from ..corpus import tags_to_spans
from .base import span_entries
from .heuristics import _frequent, capitalised_runs


def combine_annotations(annotations, n_tokens, n_tags, name="base"):
    """Token-wise average of the non-abstaining annotations."""
    sums = np.zeros((n_tokens, n_tags))
    counts = np.zeros(n_tokens)
    for ann in annotations:
        for i, vec in ann.entries.items():
            sums[i] += vec
            counts[i] += 1
    entries = {i: sums[i] / counts[i] for i in np.flatnonzero(counts)}
    return ProbAnnotation(name, entries)


def base_spans(base, n_tokens, scheme):
    """Spans of the base annotation's argmax tags with their label distributions.

    A span's distribution averages ``P(B-l) + P(I-l)`` over its tokens and is
    renormalised over entity labels (``O`` mass is dropped).
    """
    hard = base.argmax_tags(n_tokens)
    hard[hard < 0] = 0
    out = []
    for span in tags_to_spans(scheme.decode(hard)):
        mass = np.zeros(len(scheme.labels))
        for i in range(span.start, span.end):
            vec = base.entries[i]
            mass += vec[1::2] + vec[2::2]
        total = mass.sum()
        dist = {scheme.labels[k]: m / total for k, m in enumerate(mass) if m > 0}
        out.append((span.start, span.end, dist))
    return out


def _surface(words, start, end, casefold):
    key = tuple(words[start:end])
    return tuple(w.casefold() for w in key) if casefold else key


def doc_majority(doc, base, scheme, case="sensitive", name=None):
    """Average the base label distributions of all same-string spans.

    Every base span ``e`` receives ``sum(P_z for z in Z_e) / |Z_e|`` where
    ``Z_e`` are the base spans with the same surface string.
    """
    casefold = case == "insensitive"
    if name is None:
        name = "doc_majority_uncased" if casefold else "doc_majority_cased"
    spans = base_spans(base, len(doc), scheme)
    words = doc.words
    groups = {}
    for start, end, dist in spans:
        groups.setdefault(_surface(words, start, end, casefold), []).append(dist)
    entries = {}
    for start, end, _ in spans:
        group = groups[_surface(words, start, end, casefold)]
        avg = {}
        for dist in group:
            for label, p in dist.items():
                avg[label] = avg.get(label, 0.0) + p / len(group)
        span_entries(start, end, avg, scheme, entries)
    return ProbAnnotation(name, entries)


def _is_subsequence(needle, haystack):
    n = len(needle)
    return any(haystack[k:k + n] == needle for k in range(len(haystack) - n + 1))


def doc_history(doc, base, scheme, name="doc_history"):
    """Propagate the label distribution of an earlier, longer mention.

    Candidates are the base spans plus capitalised runs outside them. A
    candidate whose words form a strict contiguous part of an earlier base
    span (case-sensitive) receives that span's distribution; when several
    earlier spans qualify, the first one in the text wins.
    """
    spans = base_spans(base, len(doc), scheme)
    covered = set()
    for start, end, _ in spans:
        covered.update(range(start, end))
    candidates = [(s, e) for s, e, _ in spans]
    for s_start, s_end in doc.sentences:
        for s, e in capitalised_runs(doc.words[s_start:s_end]):
            if s == 0 and e > 1 and _frequent(doc.words[s_start]):
                s = 1  # "Later Ardern": sentence-initial capitals are not evidence
            s, e = s + s_start, e + s_start
            if not covered.intersection(range(s, e)):
                candidates.append((s, e))
    candidates.sort()
    words = doc.words
    entries = {}
    for c_start, c_end in candidates:
        needle = words[c_start:c_end]
        for b_start, b_end, dist in spans:
            if b_end > c_start:
                break
            mention = words[b_start:b_end]
            if len(mention) > len(needle) and _is_subsequence(needle, mention):
                span_entries(c_start, c_end, dist, scheme, entries)
                break
    return ProbAnnotation(name, entries)
