"""Weak supervision for sequence labelling.

Labelling functions annotate a corpus with token-level probability
vectors; a Dirichlet-emission HMM (or one of the baseline aggregators)
merges them into probabilistic labels, which can then be distilled into a
standalone token classifier and scored against gold annotations.
"""
from .annotations import (
    AnnotatedDocument,
    ProbAnnotation,
    read_annotations,
    read_marginals,
    write_annotations,
    write_marginals,
)
from .baselines import MajorityVoter, MultinomialAggregator, MultinomialModel, majority_vote, match_states
from .corpus import (
    Document,
    LabelScheme,
    Span,
    Token,
    load_corpus,
    make_document,
    parse_conll,
    read_jsonl,
    spans_to_tags,
    tags_to_spans,
    write_conll,
    write_jsonl,
)
from .distill import TokenClassifier, featurize, featurize_document
from .evaluation import (
    AgreementMatrix,
    Counts,
    EvalReport,
    cross_entropy_error,
    entity_metrics,
    evaluate,
    map_labels,
    pairwise_agreement,
    token_metrics,
)
from .exceptions import InvariantError, ParseError, SchemaVersionError, SchemeError, SpanError, WeakseqError
from .hmm import HMMAggregator, HmmModel, decode_map, forward_backward

__version__ = "0.1.0"

__all__ = [
    "AgreementMatrix",
    "AnnotatedDocument",
    "Counts",
    "Document",
    "EvalReport",
    "HMMAggregator",
    "HmmModel",
    "InvariantError",
    "LabelScheme",
    "MajorityVoter",
    "MultinomialAggregator",
    "MultinomialModel",
    "ParseError",
    "ProbAnnotation",
    "SchemaVersionError",
    "SchemeError",
    "Span",
    "SpanError",
    "Token",
    "TokenClassifier",
    "WeakseqError",
    "cross_entropy_error",
    "decode_map",
    "entity_metrics",
    "evaluate",
    "featurize",
    "featurize_document",
    "forward_backward",
    "load_corpus",
    "majority_vote",
    "make_document",
    "map_labels",
    "match_states",
    "pairwise_agreement",
    "parse_conll",
    "read_annotations",
    "read_jsonl",
    "read_marginals",
    "spans_to_tags",
    "tags_to_spans",
    "token_metrics",
    "write_annotations",
    "write_conll",
    "write_jsonl",
    "write_marginals",
]
