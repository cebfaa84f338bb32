"""Sparse probabilistic annotations produced by labelling functions.

A labelling function either emits a probability vector over the tag set at a
token, or abstains there. Abstention is represented by the token index being
absent, which is different from predicting ``O`` with probability one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParseError, SchemaVersionError

ANNOTATION_SCHEMA = "weakseq.annotations/1"
SIMPLEX_TOL = 1e-9
#: Vectors from external tools (often float32) are renormalised within this tolerance.
INGEST_TOL = 1e-6


def as_simplex(vector, n_tags=None, tol=INGEST_TOL):
    """Validate a probability vector, renormalising away float noise."""
    vec = np.asarray(vector, dtype=float)
    if vec.ndim != 1 or (n_tags is not None and vec.shape[0] != n_tags):
        raise ValueError(f"expected a vector of length {n_tags}, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)) or vec.min() < -tol:
        raise ValueError(f"vector has negative or non-finite components: {vec}")
    total = vec.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"vector sums to {total}, not 1")
    if vec.min() >= 0.0 and abs(total - 1.0) <= SIMPLEX_TOL:
        # already on the simplex: keep the exact values so IO round-trips are lossless
        return vec.copy()
    vec = np.clip(vec, 0.0, None)
    return vec / vec.sum()


@dataclass(frozen=True)
class ProbAnnotation:
    """Output of one labelling function on one document."""

    name: str
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        entries = {int(i): as_simplex(v) for i, v in sorted(self.entries.items(), key=lambda kv: int(kv[0]))}
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, index):
        return index in self.entries

    def get(self, index):
        return self.entries.get(index)

    def argmax_tags(self, n_tokens):
        """Hard tag index per token, ``-1`` where the function abstains."""
        out = np.full(n_tokens, -1, dtype=int)
        for i, vec in self.entries.items():
            out[i] = int(np.argmax(vec))
        return out


@dataclass(frozen=True)
class AnnotatedDocument:
    """All labelling-function outputs for one document."""

    doc_id: str
    n_tokens: int
    annotations: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, ann in self.annotations.items():
            if ann.name != name:
                raise ValueError(f"annotation keyed {name!r} is named {ann.name!r}")
            if ann.entries and (min(ann.entries) < 0 or max(ann.entries) >= self.n_tokens):
                raise ValueError(f"{name!r} annotates tokens outside document {self.doc_id!r}")

    @property
    def functions(self):
        return sorted(self.annotations)

    def stack(self, functions, n_tags):
        """Dense ``(n, J, T)`` probabilities and ``(n, J)`` emission mask."""
        probs = np.zeros((self.n_tokens, len(functions), n_tags))
        mask = np.zeros((self.n_tokens, len(functions)), dtype=bool)
        for j, name in enumerate(functions):
            ann = self.annotations.get(name)
            if ann is None:
                continue
            for i, vec in ann.entries.items():
                if vec.shape[0] != n_tags:
                    raise ValueError(f"{name!r} emits {vec.shape[0]} tags, scheme has {n_tags}")
                probs[i, j] = vec
                mask[i, j] = True
        return probs, mask

    def hard_labels(self, functions, n_tags):
        """``(n, J)`` argmax tag per function; abstention counts as ``O``."""
        probs, mask = self.stack(functions, n_tags)
        labels = probs.argmax(axis=2)
        labels[~mask] = 0
        return labels

    def merged(self, other):
        if other.doc_id != self.doc_id or other.n_tokens != self.n_tokens:
            raise ValueError(f"cannot merge annotations of {other.doc_id!r} into {self.doc_id!r}")
        return AnnotatedDocument(self.doc_id, self.n_tokens, {**self.annotations, **other.annotations})


def annotation_to_json(adoc):
    functions = {}
    for name in adoc.functions:
        ann = adoc.annotations[name]
        functions[name] = {str(i): [float(p) for p in vec] for i, vec in ann.entries.items()}
    return {
        "schema": ANNOTATION_SCHEMA,
        "doc_id": adoc.doc_id,
        "n_tokens": adoc.n_tokens,
        "functions": functions,
    }


def annotation_from_json(record, n_tokens=None):
    schema = record.get("schema", ANNOTATION_SCHEMA)
    if schema != ANNOTATION_SCHEMA:
        raise SchemaVersionError(f"annotation schema {schema!r} is not supported (expected {ANNOTATION_SCHEMA!r})")
    functions = record.get("functions", {})
    if n_tokens is None:
        n_tokens = record.get("n_tokens")
    if n_tokens is None:
        n_tokens = 1 + max((int(i) for f in functions.values() for i in f), default=-1)
    anns = {name: ProbAnnotation(name, entries) for name, entries in functions.items()}
    return AnnotatedDocument(record["doc_id"], int(n_tokens), anns)


def write_annotations(adocs, stream):
    for adoc in adocs:
        stream.write(json.dumps(annotation_to_json(adoc), sort_keys=False) + "\n")


def read_annotations(stream):
    out = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            out.append(annotation_from_json(json.loads(line)))
        except SchemaVersionError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid annotation record: {exc}", lineno) from exc
    return out


def merge_annotation_sets(*sets):
    """Merge per-document annotations from several sources, keyed by doc id."""
    merged = {}
    order = []
    for adocs in sets:
        for adoc in adocs:
            if adoc.doc_id in merged:
                merged[adoc.doc_id] = merged[adoc.doc_id].merged(adoc)
            else:
                merged[adoc.doc_id] = adoc
                order.append(adoc.doc_id)
    return [merged[d] for d in order]


# -- posterior marginals -------------------------------------------------------

MARGINALS_SCHEMA = "weakseq.marginals/1"


def write_marginals(doc_ids, marginals, stream):
    """One JSON line ``{schema, doc_id, marginals}`` per document."""
    for doc_id, m in zip(doc_ids, marginals):
        rows = [[float(p) for p in row] for row in np.asarray(m, dtype=float)]
        stream.write(json.dumps({"schema": MARGINALS_SCHEMA, "doc_id": doc_id, "marginals": rows}) + "\n")


def read_marginals(stream, n_tags=None):
    """Inverse of :func:`write_marginals`: a list of ``(doc_id, (n, T) array)``."""
    out = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid marginals record: {exc}", lineno) from exc
        schema = record.get("schema", MARGINALS_SCHEMA)
        if schema != MARGINALS_SCHEMA:
            raise SchemaVersionError(f"marginals schema {schema!r} is not supported (expected {MARGINALS_SCHEMA!r})")
        try:
            rows = record["marginals"]
            m = np.asarray(rows, dtype=float).reshape(len(rows), -1) if rows else np.zeros((0, n_tags or 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid marginals record: {exc}", lineno) from exc
        if n_tags is not None and m.size and m.shape[1] != n_tags:
            raise ParseError(f"{record['doc_id']!r}: {m.shape[1]} columns for {n_tags} tags", lineno)
        if m.size and np.any(np.abs(m.sum(axis=1) - 1.0) > INGEST_TOL):
            raise ParseError(f"{record['doc_id']!r}: marginal rows do not sum to 1", lineno)
        out.append((record["doc_id"], m))
    return out
