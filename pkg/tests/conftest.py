import os
import sys

import numpy as np
import pytest
from hypothesis import settings

from weakseq.annotations import AnnotatedDocument, ProbAnnotation
from weakseq.corpus import LabelScheme

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def conll():
    return LabelScheme.conll()


@pytest.fixture
def data_dir():
    return DATA


def random_adoc(rng, n_tokens, n_funcs, n_tags, doc_id="d0", abstain=0.3, sparse=0.3):
    """Annotations with random abstentions and zero components."""
    anns = {}
    for j in range(n_funcs):
        entries = {}
        for i in range(n_tokens):
            if rng.random() < abstain:
                continue
            vec = rng.dirichlet(np.ones(n_tags))
            vec[rng.random(n_tags) < sparse] = 0.0
            if vec.sum() == 0:
                vec[rng.integers(n_tags)] = 1.0
            entries[i] = vec / vec.sum()
        anns[f"f{j}"] = ProbAnnotation(f"f{j}", entries)
    return AnnotatedDocument(doc_id, n_tokens, anns)


def onehot_adoc(doc_id, label_rows, n_tags, names=None):
    """Annotations from per-function tag-index sequences; ``None`` abstains."""
    anns = {}
    for j, row in enumerate(label_rows):
        name = names[j] if names else f"f{j}"
        entries = {}
        for i, k in enumerate(row):
            if k is None:
                continue
            v = np.zeros(n_tags)
            v[k] = 1.0
            entries[i] = v
        anns[name] = ProbAnnotation(name, entries)
    return AnnotatedDocument(doc_id, len(label_rows[0]), anns)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(acceptance.RESULTS):
            terminalreporter.write_line(acceptance.RESULTS[number])
