"""Running a set of labelling functions over a corpus."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

from sklearn.base import BaseEstimator, TransformerMixin

from ..annotations import AnnotatedDocument
from ..validation import check_scheme
from .doclevel import combine_annotations, doc_history, doc_majority


def gazetteer_match(doc, gazetteer, scheme):
    """Annotation of ``doc`` by greedy longest-match gazetteer search."""
    return gazetteer(doc, scheme)


class Annotator(TransformerMixin, BaseEstimator):
    """Apply local labelling functions, then document-level ones.

    Parameters
    ----------
    scheme : LabelScheme
    functions : sequence of LabellingFunction
        Local functions, run independently on each document.
    doc_majority : sequence of {"sensitive", "insensitive"}
        One label-consistency function per case mode.
    doc_history : bool
        Whether to add the first-mention history function.
    base_functions : sequence of str, optional
        Names of the local functions averaged into the base annotation of
        the document-level functions. Defaults to all of them.
    workers : int
        Process pool size; output order never depends on it.
    """

    def __init__(self, scheme=None, functions=(), doc_majority=(), doc_history=False,
                 base_functions=None, workers=1):
        self.scheme = scheme
        self.functions = functions
        self.doc_majority = doc_majority
        self.doc_history = doc_history
        self.base_functions = base_functions
        self.workers = workers

    def fit(self, X=None, y=None):
        self.scheme_ = check_scheme(self.scheme)
        names = [f.name for f in self.functions]
        if len(set(names)) != len(names):
            raise ValueError(f"labelling function names must be unique: {names}")
        for mode in self.doc_majority:
            if mode not in ("sensitive", "insensitive"):
                raise ValueError(f"unknown doc_majority case mode {mode!r}")
        if self.base_functions is not None:
            missing = set(self.base_functions) - set(names)
            if missing:
                raise ValueError(f"base functions {sorted(missing)} are not configured")
        return self

    def annotate(self, doc):
        scheme = self.scheme_
        anns = {f.name: f(doc, scheme) for f in self.functions}
        if self.doc_majority or self.doc_history:
            base_names = self.base_functions if self.base_functions is not None else sorted(anns)
            base = combine_annotations([anns[n] for n in base_names], len(doc), scheme.n_tags)
            for mode in self.doc_majority:
                ann = doc_majority(doc, base, scheme, mode)
                anns[ann.name] = ann
            if self.doc_history:
                ann = doc_history(doc, base, scheme)
                anns[ann.name] = ann
        return AnnotatedDocument(doc.id, len(doc), dict(sorted(anns.items())))

    def transform(self, X):
        if not hasattr(self, "scheme_"):
            self.fit()
        docs = list(X)
        if self.workers > 1 and len(docs) > 1:
            with ProcessPoolExecutor(self.workers) as pool:
                return list(pool.map(self.annotate, docs, chunksize=max(1, len(docs) // (4 * self.workers))))
        return [self.annotate(doc) for doc in docs]
