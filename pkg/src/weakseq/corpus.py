"""Documents, spans, label schemes and the CoNLL / JSONL readers and writers.

Token tags are always BIO strings over a :class:`LabelScheme`. Tag index 0
is ``O``; label ``l`` at position ``k`` in the scheme owns ``B-l`` at index
``2k + 1`` and ``I-l`` at index ``2k + 2``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Mapping, Sequence

from .exceptions import ParseError, SchemeError, SpanError

OUTSIDE = "O"

#: Label renames used to score Ontonotes-style output against CoNLL 2003.
CONLL_MAPPING = {
    "PERSON": "PER",
    "GPE": "LOC",
    "EVENT": "MISC",
    "FAC": "MISC",
    "LANGUAGE": "MISC",
    "LAW": "MISC",
    "NORP": "MISC",
    "PRODUCT": "MISC",
    "WORK_OF_ART": "MISC",
}


@dataclass(frozen=True, eq=True)
class LabelScheme:
    """Ordered entity labels plus an optional rename table.

    ``mapping`` sends foreign labels (for instance those emitted by a
    labelling function trained on a richer scheme) to labels of this
    scheme, or to ``"O"`` to drop them.
    """

    labels: tuple
    mapping: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mapping", dict(self.mapping))
        if not labels:
            raise SchemeError("a label scheme needs at least one label")
        if len(set(labels)) != len(labels):
            raise SchemeError(f"duplicate labels in scheme: {labels}")
        for label in labels:
            if not label or label == OUTSIDE or "-" in label[:2] or label.strip() != label:
                raise SchemeError(f"invalid label name {label!r}")
        for source, target in self.mapping.items():
            if target != OUTSIDE and target not in labels:
                raise SchemeError(
                    f"mapping {source!r} -> {target!r} leaves the scheme {labels}"
                )

    __hash__ = None

    @classmethod
    def conll(cls):
        return cls(("PER", "ORG", "LOC", "MISC"), CONLL_MAPPING)

    @cached_property
    def tags(self):
        tags = [OUTSIDE]
        for label in self.labels:
            tags += [f"B-{label}", f"I-{label}"]
        return tuple(tags)

    @cached_property
    def tag_index(self):
        return {tag: i for i, tag in enumerate(self.tags)}

    @property
    def n_tags(self):
        return len(self.tags)

    def begin(self, label):
        return self.tag_index[f"B-{label}"]

    def inside(self, label):
        return self.tag_index[f"I-{label}"]

    def label_of(self, tag):
        """Entity label of a tag string or index, ``None`` for ``O``."""
        if not isinstance(tag, str):
            tag = self.tags[tag]
        return None if tag == OUTSIDE else tag[2:]

    def project(self, label):
        """Map a (possibly foreign) label into this scheme; ``None`` drops it."""
        if label in self.labels:
            return label
        target = self.mapping.get(label)
        if target is None or target == OUTSIDE:
            return None
        return target

    def check_tag(self, tag):
        if tag in self.tag_index:
            return tag
        if tag[:2] in ("B-", "I-"):
            raise SchemeError(f"unknown label {tag[2:]!r} in tag {tag!r}")
        raise SchemeError(f"malformed tag {tag!r}")

    def encode(self, tags):
        return [self.tag_index[self.check_tag(t)] for t in tags]

    def decode(self, indices):
        return [self.tags[i] for i in indices]

    def to_dict(self):
        return {"labels": list(self.labels), "mapping": dict(sorted(self.mapping.items()))}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["labels"]), data.get("mapping", {}))


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int
    pos: str | None = None
    dep: tuple | None = None
    columns: tuple = ()

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"token {self.text!r} has empty offsets {self.start}:{self.end}")


@dataclass(frozen=True)
class Span:
    """Half-open token range ``[start, end)`` carrying an entity label."""

    start: int
    end: int
    label: str
    score: float = 1.0

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise SpanError(f"empty or negative span [{self.start}, {self.end})")
        if not 0.0 <= self.score <= 1.0:
            raise SpanError(f"span score {self.score} outside [0, 1]")

    def __len__(self):
        return self.end - self.start


@dataclass(frozen=True)
class Document:
    id: str
    tokens: tuple
    sentences: tuple = ()
    text: str = ""
    tags: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        sentences = tuple(tuple(s) for s in self.sentences)
        if not sentences and self.tokens:
            sentences = ((0, len(self.tokens)),)
        object.__setattr__(self, "sentences", sentences)
        expected = 0
        for i, j in sentences:
            if i != expected or j <= i:
                raise ValueError(f"sentences of {self.id!r} do not partition the tokens")
            expected = j
        if expected != len(self.tokens):
            raise ValueError(f"sentences of {self.id!r} do not cover all tokens")
        prev_end = 0
        for tok in self.tokens:
            if tok.start < prev_end:
                raise ValueError(f"token offsets in {self.id!r} overlap or decrease")
            prev_end = tok.end
        if self.tags is not None:
            object.__setattr__(self, "tags", tuple(self.tags))
            if len(self.tags) != len(self.tokens):
                raise ValueError(f"{self.id!r}: {len(self.tags)} tags for {len(self.tokens)} tokens")

    def __len__(self):
        return len(self.tokens)

    @property
    def words(self):
        return [t.text for t in self.tokens]

    @property
    def has_pos(self):
        return bool(self.tokens) and all(t.pos is not None for t in self.tokens)

    @property
    def has_dep(self):
        return bool(self.tokens) and all(t.dep is not None for t in self.tokens)

    def sentence_starts(self):
        return {i for i, _ in self.sentences}

    def with_tags(self, tags):
        return Document(self.id, self.tokens, self.sentences, self.text, tuple(tags))


def make_document(doc_id, sentences, tags=None, pos=None):
    """Build a document from pre-split sentences of words.

    Offsets are computed for a text where words are joined by single spaces
    and sentences by newlines.
    """
    tokens, ranges, pieces = [], [], []
    offset = 0
    flat_pos = list(pos) if pos is not None else None
    for s, words in enumerate(sentences):
        first = len(tokens)
        for w, word in enumerate(words):
            if w:
                offset += 1
            p = flat_pos[len(tokens)] if flat_pos is not None else None
            tokens.append(Token(word, offset, offset + len(word), pos=p))
            offset += len(word)
        pieces.append(" ".join(words))
        ranges.append((first, len(tokens)))
        offset += 1
    ranges = [r for r in ranges if r[1] > r[0]]
    return Document(doc_id, tokens, ranges, "\n".join(pieces), tags)


# -- BIO <-> spans ---------------------------------------------------------


def repair_bio(tags):
    """Turn every ``I-X`` that does not continue an ``X`` span into ``B-X``."""
    out = []
    prev = OUTSIDE
    for tag in tags:
        if tag.startswith("I-") and prev[2:] != tag[2:]:
            tag = "B-" + tag[2:]
        out.append(tag)
        prev = tag
    return out


def spans_to_tags(doc, spans, scheme):
    """BIO tags for a document (or token count) given non-overlapping spans."""
    n = doc if isinstance(doc, int) else len(doc)
    tags = [OUTSIDE] * n
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end:
            raise SpanError(f"overlapping spans {a} and {b}")
    for span in ordered:
        if span.end > n:
            raise SpanError(f"span {span} exceeds document length {n}")
        if span.label not in scheme.labels:
            raise SchemeError(f"span label {span.label!r} not in scheme")
        tags[span.start] = f"B-{span.label}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.label}"
    return tags


def tags_to_spans(tags, scheme=None):
    """Decode BIO tags (strings or scheme indices) into spans.

    An ``I-X`` that does not continue an ``X`` span opens a new one, so
    every sequence decodes.
    """
    if scheme is not None and tags and not isinstance(tags[0], str):
        tags = scheme.decode(tags)
    spans = []
    start, label = None, None
    for i, tag in enumerate(tags):
        if tag == OUTSIDE:
            if label is not None:
                spans.append(Span(start, i, label))
            start, label = None, None
        elif tag.startswith("B-") or tag[2:] != label:
            if label is not None:
                spans.append(Span(start, i, label))
            start, label = i, tag[2:]
    if label is not None:
        spans.append(Span(start, len(tags), label))
    return spans


# -- CoNLL -----------------------------------------------------------------

DOCSTART = "-DOCSTART-"


def parse_conll(stream, scheme):
    """Read whitespace-column CoNLL data into documents with gold BIO tags.

    The token is in the first column and the tag in the last; with three or
    more columns the second one is read as the part-of-speech tag. IOB1
    input is normalised to BIO.
    """
    if isinstance(stream, str):
        stream = stream.splitlines()
    docs = []
    n_cols = None
    sentences, sentence = [], []
    has_content = False

    def close_sentence():
        if sentence:
            sentences.append(list(sentence))
            sentence.clear()

    def close_doc():
        close_sentence()
        if sentences:
            docs.append(_conll_document(f"doc{len(docs)}", sentences, scheme))
        sentences.clear()

    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            close_sentence()
            continue
        cols = line.split()
        if cols[0] == DOCSTART:
            if has_content or sentences or sentence:
                close_doc()
            has_content = True
            continue
        has_content = True
        if n_cols is None:
            n_cols = len(cols)
            if n_cols < 2:
                raise ParseError(f"expected at least 2 columns, got {n_cols}", lineno)
        elif len(cols) != n_cols:
            raise ParseError(f"expected {n_cols} columns, got {len(cols)}", lineno)
        try:
            scheme.check_tag(cols[-1])
        except SchemeError as exc:
            raise ParseError(str(exc), lineno) from exc
        sentence.append(cols)
    close_doc()
    return docs


def _conll_document(doc_id, sentences, scheme):
    tokens, ranges, tags, lines = [], [], [], []
    offset = 0
    for rows in sentences:
        first = len(tokens)
        words = []
        for w, cols in enumerate(rows):
            if w:
                offset += 1
            word = cols[0]
            pos = cols[1] if len(cols) >= 3 else None
            tokens.append(Token(word, offset, offset + len(word), pos=pos, columns=tuple(cols[1:-1])))
            offset += len(word)
            words.append(word)
        offset += 1
        tags.extend(repair_bio([cols[-1] for cols in rows]))
        ranges.append((first, len(tokens)))
        lines.append(" ".join(words))
    return Document(doc_id, tokens, ranges, "\n".join(lines), tuple(tags))


def write_conll(docs, stream, tags=None):
    """Write documents in CoNLL 2003 layout (a ``-DOCSTART-`` line per document).

    ``tags`` optionally overrides the gold tags, one sequence per document.
    """
    for d, doc in enumerate(docs):
        doc_tags = tags[d] if tags is not None else doc.tags
        if doc_tags is None:
            doc_tags = [OUTSIDE] * len(doc)
        n_extra = len(doc.tokens[0].columns) if doc.tokens else 0
        stream.write(" ".join([DOCSTART] + ["-X-"] * n_extra + [OUTSIDE]) + "\n\n")
        for i, j in doc.sentences:
            for k in range(i, j):
                tok = doc.tokens[k]
                stream.write(" ".join((tok.text, *tok.columns, doc_tags[k])) + "\n")
            stream.write("\n")


# -- JSONL -----------------------------------------------------------------


def document_to_json(doc):
    tokens = []
    for tok in doc.tokens:
        item = {"text": tok.text, "start": tok.start, "end": tok.end}
        if tok.pos is not None:
            item["pos"] = tok.pos
        if tok.dep is not None:
            item["dep"] = {"rel": tok.dep[0], "head": tok.dep[1]}
        tokens.append(item)
    record = {
        "id": doc.id,
        "text": doc.text,
        "tokens": tokens,
        "sentences": [list(s) for s in doc.sentences],
    }
    if doc.tags is not None:
        record["tags"] = list(doc.tags)
    return record


def document_from_json(record, scheme=None):
    tokens = []
    for item in record["tokens"]:
        dep = item.get("dep")
        if dep is not None:
            dep = (dep["rel"], int(dep["head"]))
        tokens.append(Token(item["text"], int(item["start"]), int(item["end"]), item.get("pos"), dep))
    tags = record.get("tags")
    if tags is not None and scheme is not None:
        for tag in tags:
            scheme.check_tag(tag)
    return Document(record["id"], tokens, record.get("sentences", ()), record.get("text", ""), tags)


def read_jsonl(stream, scheme=None):
    docs = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            docs.append(document_from_json(json.loads(line), scheme))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ParseError(f"invalid document record: {exc}", lineno) from exc
        except (ValueError, SchemeError) as exc:
            raise ParseError(str(exc), lineno) from exc
    return docs


def write_jsonl(docs, stream):
    for doc in docs:
        stream.write(json.dumps(document_to_json(doc), ensure_ascii=False) + "\n")


def load_corpus(path, scheme):
    """Read a corpus file, choosing the format from the extension."""
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        if path.endswith((".jsonl", ".json")):
            return read_jsonl(fh, scheme)
        return parse_conll(fh, scheme)
