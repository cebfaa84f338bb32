"""Token- and entity-level scoring, cross-entropy error and agreement analysis.

Scores are micro-averaged: true/false positive and false negative counts
are pooled over labels and documents before precision and recall are
computed. An empty denominator gives a rate of 0.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import OUTSIDE, Span, tags_to_spans
from .exceptions import SchemeError

REPORT_SCHEMA = "weakseq.report/1"
CEE_FLOOR = 1e-12


def _rate(num, den):
    return num / den if den else 0.0


@dataclass(frozen=True)
class Counts:
    """Pooled TP/FP/FN counts and the rates derived from them."""

    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other):
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self):
        return _rate(self.tp, self.tp + self.fp)

    @property
    def recall(self):
        return _rate(self.tp, self.tp + self.fn)

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


def _is_nested(seqs):
    return len(seqs) > 0 and not isinstance(seqs[0], (str, Span))


def _as_corpus(seqs):
    seqs = list(seqs)
    return seqs if _is_nested(seqs) else [seqs]


# -- label mapping ---------------------------------------------------------------


def _map_label(label, mapping, scheme):
    if label in mapping:
        return mapping[label]
    if scheme is not None and label not in scheme.labels:
        raise SchemeError(f"label {label!r} is neither mapped nor part of the scheme {scheme.labels}")
    return label


def map_labels(items, mapping, scheme=None):
    """Rename entity labels in a tag sequence or a list of spans.

    A label mapped to ``"O"`` is dropped. Spans are renamed one by one, so
    adjacent spans that end up with the same label stay separate. With a
    ``scheme``, labels that are neither mapped nor in the scheme raise.
    """
    items = list(items)
    if items and isinstance(items[0], Span):
        out = []
        for s in items:
            label = _map_label(s.label, mapping, scheme)
            if label != OUTSIDE:
                out.append(Span(s.start, s.end, label, s.score))
        return out
    out = []
    for tag in items:
        if tag == OUTSIDE:
            out.append(tag)
            continue
        prefix, label = tag.split("-", 1)
        label = _map_label(label, mapping, scheme)
        out.append(OUTSIDE if label == OUTSIDE else f"{prefix}-{label}")
    return out


# -- token and entity scores -------------------------------------------------------


def _token_key(tag, mode):
    if tag == OUTSIDE or mode == "tag":
        return tag
    return tag.split("-", 1)[1]


def token_counts(pred, gold, mode="label"):
    """Per-label token counts for one document.

    ``mode="label"`` compares entity labels only (``B-PER`` matches
    ``I-PER``); ``mode="tag"`` compares full tags.
    """
    if mode not in ("label", "tag"):
        raise ValueError(f"unknown token mode {mode!r}")
    if len(pred) != len(gold):
        raise ValueError(f"prediction has {len(pred)} tokens, gold has {len(gold)}")
    per_label = {}
    for p, g in zip(pred, gold):
        p, g = _token_key(p, mode), _token_key(g, mode)
        if p == g:
            if g != OUTSIDE:
                per_label[g] = per_label.get(g, Counts()) + Counts(tp=1)
            continue
        if p != OUTSIDE:
            per_label[p] = per_label.get(p, Counts()) + Counts(fp=1)
        if g != OUTSIDE:
            per_label[g] = per_label.get(g, Counts()) + Counts(fn=1)
    return per_label


def token_metrics(pred, gold, mode="label"):
    """Micro-averaged token-level counts over one document or a corpus."""
    preds, golds = _as_corpus(pred), _as_corpus(gold)
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predicted documents for {len(golds)} gold documents")
    total = Counts()
    for p, g in zip(preds, golds):
        for c in token_counts(p, g, mode).values():
            total = total + c
    return total


def entity_counts(pred_spans, gold_spans):
    """Per-label exact-match span counts for one document."""
    pred = {(s.start, s.end, s.label) for s in pred_spans}
    gold = {(s.start, s.end, s.label) for s in gold_spans}
    per_label = {}
    for key in pred | gold:
        c = Counts(tp=1) if key in pred and key in gold else Counts(fp=1) if key in pred else Counts(fn=1)
        per_label[key[2]] = per_label.get(key[2], Counts()) + c
    return per_label


def entity_metrics(pred_spans, gold_spans):
    """Micro-averaged exact-match entity counts over one document or a corpus.

    A predicted span counts as correct only when its boundaries and label
    both equal those of a gold span.
    """
    preds = [list(d) for d in pred_spans] if _is_nested(list(pred_spans)) else [list(pred_spans)]
    golds = [list(d) for d in gold_spans] if _is_nested(list(gold_spans)) else [list(gold_spans)]
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predicted documents for {len(golds)} gold documents")
    total = Counts()
    for p, g in zip(preds, golds):
        for c in entity_counts(p, g).values():
            total = total + c
    return total


def cross_entropy_error(marginals, gold, scheme):
    """Mean over tokens of ``-ln p(gold tag)``, probabilities floored at 1e-12."""
    margs = [marginals] if isinstance(marginals, np.ndarray) else list(marginals)
    golds = _as_corpus(gold) if not isinstance(marginals, np.ndarray) else [list(gold)]
    if len(margs) != len(golds):
        raise ValueError(f"{len(margs)} marginal matrices for {len(golds)} gold documents")
    total, n = 0.0, 0
    for m, g in zip(margs, golds):
        m = np.asarray(m, dtype=float)
        if m.shape[0] != len(g):
            raise ValueError(f"marginals cover {m.shape[0]} tokens, gold has {len(g)}")
        idx = scheme.encode(g) if g and isinstance(g[0], str) else np.asarray(g, dtype=int)
        p = m[np.arange(len(idx)), idx]
        total += float(-np.log(np.maximum(p, CEE_FLOOR)).sum())
        n += len(idx)
    return total / n if n else 0.0


# -- report -------------------------------------------------------------------------


@dataclass
class EvalReport:
    token: Counts
    entity: Counts
    cee: float | None = None
    per_label: dict = field(default_factory=dict)
    token_mode: str = "label"

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "token_mode": self.token_mode,
            "token": self.token.to_dict(),
            "entity": self.entity.to_dict(),
            "cee": self.cee,
            "per_label": {
                lab: {level: c.to_dict() for level, c in levels.items()}
                for lab, levels in sorted(self.per_label.items())
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_text(self):
        """Aligned table with token and entity P/R/F1 and CEE."""
        header = ["", "tok P", "tok R", "tok F1", "ent P", "ent R", "ent F1", "CEE"]
        rows = [["all", self.token, self.entity, self.cee]]
        rows += [[lab, levels["token"], levels["entity"], None] for lab, levels in sorted(self.per_label.items())]
        lines = []
        width = max(6, *(len(r[0]) for r in rows))
        lines.append(f"{header[0]:<{width}}" + "".join(f"{h:>8}" for h in header[1:]))
        for name, tok, ent, cee in rows:
            cells = [tok.precision, tok.recall, tok.f1, ent.precision, ent.recall, ent.f1]
            line = f"{name:<{width}}" + "".join(f"{v:>8.3f}" for v in cells)
            line += f"{cee:>8.3f}" if cee is not None else f"{'-':>8}"
            lines.append(line)
        return "\n".join(lines) + "\n"


def evaluate(pred_tags, gold_tags, scheme=None, marginals=None, mapping=None, token_mode="label"):
    """Score predicted tag sequences against gold ones.

    ``mapping`` relabels the predictions before scoring; the cross-entropy
    error is only reported when ``marginals`` are given and no mapping is
    applied.
    """
    preds, golds = _as_corpus(pred_tags), _as_corpus(gold_tags)
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predicted documents for {len(golds)} gold documents")
    if mapping:
        preds = [map_labels(p, mapping, scheme) for p in preds]
    per_label = {}
    tok, ent = Counts(), Counts()
    for p, g in zip(preds, golds):
        for lab, c in token_counts(p, g, token_mode).items():
            lab = lab if token_mode == "label" else lab.split("-", 1)[1]
            per_label.setdefault(lab, {"token": Counts(), "entity": Counts()})
            per_label[lab]["token"] = per_label[lab]["token"] + c
            tok = tok + c
        for lab, c in entity_counts(tags_to_spans(p), tags_to_spans(g)).items():
            per_label.setdefault(lab, {"token": Counts(), "entity": Counts()})
            per_label[lab]["entity"] = per_label[lab]["entity"] + c
            ent = ent + c
    cee = None
    if marginals is not None and not mapping:
        cee = cross_entropy_error(marginals, golds, scheme)
    return EvalReport(tok, ent, cee, per_label, token_mode)


# -- agreement ---------------------------------------------------------------------


@dataclass
class AgreementMatrix:
    functions: list
    agreement: np.ndarray
    disagreement: np.ndarray
    co_labelled: np.ndarray

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["function_a", "function_b", "agreement", "disagreement", "co_labelled"])
        for a, fa in enumerate(self.functions):
            for b, fb in enumerate(self.functions):
                writer.writerow([fa, fb, repr(float(self.agreement[a, b])),
                                 repr(float(self.disagreement[a, b])), int(self.co_labelled[a, b])])
        return buf.getvalue()


def pairwise_agreement(adocs, n_tags, functions=None):
    """Agreement and conflict rates between every pair of functions.

    Rates are normalised by the number of tokens both functions label.
    Agreement counts equal argmax tags; disagreement counts tokens where
    both predict different non-``O`` tags.
    """
    adocs = list(adocs)
    if functions is None:
        functions = sorted({name for d in adocs for name in d.annotations})
    n_funcs = len(functions)
    agree = np.zeros((n_funcs, n_funcs))
    conflict = np.zeros((n_funcs, n_funcs))
    both = np.zeros((n_funcs, n_funcs))
    for d in adocs:
        probs, mask = d.stack(functions, n_tags)
        hard = np.where(mask, probs.argmax(axis=2), -1)  # (n, J)
        m = mask.astype(float)
        both += m.T @ m
        for t in range(n_tags):
            ind = (hard == t).astype(float)
            agree += ind.T @ ind
        nz = (mask & (hard != 0)).astype(float)
        same_nz = np.zeros_like(both)
        for t in range(1, n_tags):
            ind = (hard == t).astype(float)
            same_nz += ind.T @ ind
        conflict += nz.T @ nz - same_nz
    with np.errstate(invalid="ignore", divide="ignore"):
        agreement = np.where(both > 0, agree / both, 0.0)
        disagreement = np.where(both > 0, conflict / both, 0.0)
    return AgreementMatrix(list(functions), agreement, disagreement, both.astype(int))
