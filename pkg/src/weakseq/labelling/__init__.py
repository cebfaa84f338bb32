"""Labelling functions: gazetteers, heuristic detectors, document-level functions."""
from .base import LabellingFunction, span_entries
from .doclevel import base_spans, combine_annotations, doc_history, doc_majority
from .gazetteer import Gazetteer, build_gazetteer, load_gazetteer
from .heuristics import DETECTORS, heuristic_detect, make_detector
from .pipeline import Annotator, gazetteer_match

__all__ = [
    "Annotator",
    "DETECTORS",
    "Gazetteer",
    "LabellingFunction",
    "base_spans",
    "build_gazetteer",
    "combine_annotations",
    "doc_history",
    "doc_majority",
    "gazetteer_match",
    "heuristic_detect",
    "load_gazetteer",
    "make_detector",
    "span_entries",
]
