"""Command-line pipeline driver: annotate, aggregate, train, evaluate, inspect.

Every subcommand reads the same configuration file (see :mod:`weakseq.config`);
explicit flags and ``--set key.path=value`` pairs override its keys.

Exit codes: 0 on success (including a flagged non-converged fit), 1 for
usage or configuration errors, 2 for data errors, 3 when an internal
invariant is breached.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from .annotations import read_annotations, read_marginals, write_annotations, write_marginals
from .baselines import MajorityVoter, MultinomialAggregator, MultinomialModel
from .corpus import LabelScheme, load_corpus, parse_conll, write_conll
from .distill import TokenClassifier
from .evaluation import evaluate, pairwise_agreement
from .exceptions import InvariantError, WeakseqError
from .hmm import HMMAggregator, HmmModel, decode_map
from .labelling import Annotator, load_gazetteer, make_detector

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("weakseq")


class UsageError(Exception):
    """Bad command line; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- shared IO ---------------------------------------------------------------------


def _open_out(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    # newline="" keeps output bytes identical across platforms
    return open(path, "w", encoding="utf-8", newline="")


def _require(path, what):
    if path is None:
        raise UsageError(f"no {what} path configured")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} file {path} does not exist")
    return path


def _corpus(cfg, scheme, required=True):
    path = cfgmod.resolve(cfg, cfg["corpus"])
    if path is None:
        if required:
            raise UsageError("no corpus configured (set 'corpus' or pass --corpus)")
        return None
    return load_corpus(_require(path, "corpus"), scheme)


def _annotations(path):
    with open(_require(path, "annotation"), encoding="utf-8") as fh:
        return read_annotations(fh)


def _marginals(path, scheme):
    with open(_require(path, "marginals"), encoding="utf-8") as fh:
        return read_marginals(fh, scheme.n_tags)


def _align(docs, records, what):
    """Reorder ``(doc_id, value)`` records to follow the corpus order."""
    by_id = dict(records)
    missing = [d.id for d in docs if d.id not in by_id]
    if missing:
        raise ValueError(f"{what} has no entry for document(s) {missing[:5]}")
    return [by_id[d.id] for d in docs]


def _path(cfg, key):
    return cfgmod.resolve(cfg, cfg["paths"][key])


# -- subcommands ---------------------------------------------------------------------


def build_functions(cfg):
    lab = cfg["labelling"]
    functions = []
    for g in lab["gazetteers"]:
        path = cfgmod.resolve(cfg, g["path"])
        name = g.get("name") or os.path.splitext(os.path.basename(path))[0]
        functions.append(load_gazetteer(path, g.get("case", "sensitive"), bool(g.get("multitoken_only", False)), name))
    for item in lab["detectors"]:
        if isinstance(item, dict):
            functions.append(make_detector(item["id"], item.get("name")))
        else:
            functions.append(make_detector(item))
    return functions


def cmd_annotate(cfg, args):
    scheme = cfgmod.load_scheme(cfg)
    docs = _corpus(cfg, scheme)
    lab = cfg["labelling"]
    try:
        annotator = Annotator(scheme, build_functions(cfg), lab["doc_majority"], lab["doc_history"],
                              lab["base_functions"], cfg["workers"]).fit()
    except ValueError as exc:
        raise cfgmod.ConfigError(str(exc)) from None
    adocs = annotator.transform(docs)
    for path in lab["external"]:
        external = {a.doc_id: a for a in _annotations(cfgmod.resolve(cfg, path))}
        unknown = sorted(set(external) - {d.id for d in docs})
        if unknown:
            raise ValueError(f"{path}: annotations for unknown document(s) {unknown[:5]}")
        clashes = set()
        merged = []
        for adoc in adocs:
            ext = external.get(adoc.doc_id)
            if ext is not None:
                if ext.n_tokens != adoc.n_tokens:
                    raise ValueError(f"{path}: {adoc.doc_id!r} has {ext.n_tokens} tokens, corpus has {adoc.n_tokens}")
                clashes |= set(ext.annotations) & set(adoc.annotations)
                adoc = adoc.merged(ext)
                adoc = type(adoc)(adoc.doc_id, adoc.n_tokens, dict(sorted(adoc.annotations.items())))
            merged.append(adoc)
        if clashes:
            raise ValueError(f"{path}: function name(s) {sorted(clashes)} are already in use")
        adocs = merged
    out = _path(cfg, "annotations")
    with _open_out(out) as fh:
        write_annotations(adocs, fh)
    log.info("annotated %d documents with %d functions -> %s",
             len(adocs), len({f for a in adocs for f in a.annotations}), out)
    return EXIT_OK


def _log_fit(fit_log, converged, n_iter, method):
    for it, value in enumerate(fit_log):
        log.info("%s iteration %d: objective %.10g", method, it, value)
    if not converged:
        log.warning("%s did not converge within %d iterations; model is flagged as non-converged", method, n_iter)


def _fit_hmm(cfg, scheme, adocs):
    agg = cfg["aggregate"]
    est = HMMAggregator(scheme, reliable=agg["reliable"], max_iter=agg["max_iter"], tol=agg["tol"],
                        concentration=agg["concentration"], clamp=agg["clamp"],
                        recall=agg["recall"], precision=agg["precision"])
    return est.fit(adocs)


def cmd_aggregate(cfg, args):
    scheme = cfgmod.load_scheme(cfg)
    adocs = _annotations(_path(cfg, "annotations"))
    if not adocs:
        raise ValueError("the annotation file holds no documents")
    agg = cfg["aggregate"]
    method = agg["method"]
    model_text = None
    if method == "mv":
        est = MajorityVoter(scheme, threshold=agg["threshold"]).fit(adocs)
        marginals = est.predict_proba(adocs)
    elif method == "hmm":
        est = _fit_hmm(cfg, scheme, adocs)
        m = est.model_
        _log_fit(m.fit_log, m.converged, m.n_iter, method)
        model_text = m.dumps()
        marginals = est.predict_proba(adocs)
    else:
        if agg["reliable"] is None and agg["matching"] == "reliable-function":
            raise cfgmod.ConfigError("matching=reliable-function needs aggregate.reliable")
        est = MultinomialAggregator(scheme, variant=method, max_iter=agg["max_iter"], tol=agg["tol"],
                                    smoothing=agg["smoothing"], reliable=agg["reliable"],
                                    matching=agg["matching"], threshold=agg["threshold"])
        reference = None
        if agg["matching"] == "dirichlet-hmm":
            reference = [scheme.encode(t) for t in _fit_hmm(cfg, scheme, adocs).predict(adocs)]
        est.fit(adocs, reference=reference)
        m = est.model_
        _log_fit(m.fit_log, m.converged, m.n_iter, method)
        model_text = m.dumps()
        marginals = est.predict_proba(adocs)
    tags = [decode_map(mg, scheme) for mg in marginals]

    if model_text is not None:
        with _open_out(_path(cfg, "model")) as fh:
            fh.write(model_text + "\n")
    with _open_out(_path(cfg, "marginals")) as fh:
        write_marginals([a.doc_id for a in adocs], marginals, fh)
    docs = _corpus(cfg, scheme, required=False)
    if docs is not None:
        by_id = {a.doc_id: t for a, t in zip(adocs, tags)}
        docs = [d for d in docs if d.id in by_id]
        with _open_out(_path(cfg, "tags")) as fh:
            write_conll(docs, fh, tags=[by_id[d.id] for d in docs])
    else:
        log.warning("no corpus configured; skipping the CoNLL tag output")
    log.info("aggregated %d documents with %s", len(adocs), method)
    return EXIT_OK


def _load_model(path):
    """HMM or multinomial model file, chosen by its schema field."""
    with open(_require(path, "model"), encoding="utf-8") as fh:
        data = json.load(fh)
    if str(data.get("schema", "")).startswith("weakseq.hmm/"):
        return HmmModel.from_dict(data)
    return MultinomialModel.from_dict(data)


def cmd_train(cfg, args):
    scheme = cfgmod.load_scheme(cfg)
    docs = _corpus(cfg, scheme)
    records = _marginals(_path(cfg, "marginals"), scheme)
    by_id = dict(records)
    docs = [d for d in docs if d.id in by_id]
    if not docs:
        raise ValueError("no corpus document has aggregated marginals")
    targets = [by_id[d.id] for d in docs]
    for d, t in zip(docs, targets):
        if t.shape[0] != len(d):
            raise ValueError(f"{d.id!r}: {t.shape[0]} marginal rows for {len(d)} tokens")
    clf = TokenClassifier(scheme, seed=cfg["seed"], **cfg["train"]).fit(docs, targets)
    for epoch, loss in enumerate(clf.training_log_):
        log.info("epoch %d: mean expected loss %.10g", epoch, loss)
    out = _path(cfg, "classifier")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "wb") as fh:
        fh.write(clf.to_bytes())
    if args.predictions:
        with _open_out(args.predictions) as fh:
            write_marginals([d.id for d in docs], clf.predict_proba(docs), fh)
    return EXIT_OK


def _load_classifier(path):
    with open(_require(path, "classifier"), "rb") as fh:
        return TokenClassifier.from_bytes(fh.read())


def cmd_evaluate(cfg, args):
    scheme = cfgmod.load_scheme(cfg)
    gold_docs = _corpus(cfg, scheme)
    if any(d.tags is None for d in gold_docs):
        raise ValueError("the evaluation corpus has documents without gold tags")
    mapping = cfgmod.load_mapping(cfg, scheme)
    marginals = None
    if args.classifier:
        clf = _load_classifier(args.classifier)
        if clf.scheme_.tags != scheme.tags:
            raise ValueError("classifier label scheme differs from the configured scheme")
        marginals = clf.predict_proba(gold_docs)
        pred = [decode_map(m, scheme) for m in marginals]
    elif args.tags:
        # predicted tags may use foreign labels that the mapping renames
        extra = tuple(lab for lab in (mapping or {}) if lab not in scheme.labels)
        with open(_require(args.tags, "tags"), encoding="utf-8") as fh:
            pred_docs = parse_conll(fh, LabelScheme(scheme.labels + extra) if extra else scheme)
        if len(pred_docs) != len(gold_docs):
            raise ValueError(f"{len(pred_docs)} predicted documents for {len(gold_docs)} gold documents")
        pred = [list(d.tags) for d in pred_docs]
    else:
        marginals = _align(gold_docs, _marginals(_path(cfg, "marginals"), scheme), "marginals file")
        pred = [decode_map(m, scheme) for m in marginals]
    gold = [list(d.tags) for d in gold_docs]
    for p, g, d in zip(pred, gold, gold_docs):
        if len(p) != len(g):
            raise ValueError(f"{d.id!r}: {len(p)} predicted tags for {len(g)} gold tags")
    report = evaluate(pred, gold, scheme, marginals=marginals, mapping=mapping,
                      token_mode=cfg["evaluate"]["token_mode"])
    out = _path(cfg, "report")
    with _open_out(out) as fh:
        fh.write(report.to_json() + "\n")
    text = report.to_text()
    with _open_out(os.path.splitext(out)[0] + ".txt") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_inspect(cfg, args):
    scheme = cfgmod.load_scheme(cfg)
    adocs = _annotations(_path(cfg, "annotations"))
    matrix = pairwise_agreement(adocs, scheme.n_tags)
    with _open_out(_path(cfg, "agreement")) as fh:
        fh.write(matrix.to_csv())
    if args.model:
        model = _load_model(args.model)
        log.info("model %s: %d iterations, converged=%s", type(model).__name__, model.n_iter, model.converged)
    log.info("agreement over %d functions -> %s", len(matrix.functions), _path(cfg, "agreement"))
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------

# flag -> dotted config key
_FLAG_KEYS = {
    "corpus": "corpus",
    "scheme": "scheme",
    "workers": "workers",
    "seed": "seed",
    "annotations": "paths.annotations",
    "model_out": "paths.model",
    "marginals": "paths.marginals",
    "tags_out": "paths.tags",
    "classifier_out": "paths.classifier",
    "report": "paths.report",
    "agreement": "paths.agreement",
    "method": "aggregate.method",
    "reliable": "aggregate.reliable",
    "tol": "aggregate.tol",
    "max_iter": "aggregate.max_iter",
    "threshold": "aggregate.threshold",
    "matching": "aggregate.matching",
    "mapping": "evaluate.mapping",
    "token_mode": "evaluate.token_mode",
    "epochs": "train.epochs",
}


def build_parser():
    parser = _Parser(prog="weakseq", description="Weak supervision pipeline for sequence labelling.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    common = _Parser(add_help=False)
    common.add_argument("-c", "--config", help="YAML or JSON configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key, e.g. aggregate.tol=1e-6")
    common.add_argument("--scheme", help="label scheme: 'conll' or a JSON file")
    common.add_argument("--corpus", help="corpus file (CoNLL or JSONL)")
    common.add_argument("--workers", type=int)
    common.add_argument("--seed", type=int)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("annotate", parents=[common], help="run the labelling functions")
    p.add_argument("-o", "--annotations", help="output annotation JSONL")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("aggregate", parents=[common], help="combine annotations into probabilistic labels")
    p.add_argument("--annotations", help="input annotation JSONL")
    p.add_argument("--method", choices=cfgmod.METHODS)
    p.add_argument("--reliable", help="name of the most reliable labelling function")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--threshold", type=int, help="majority-vote threshold T")
    p.add_argument("--matching", choices=("reliable-function", "majority-voter", "dirichlet-hmm"))
    p.add_argument("--model-out", help="output model file")
    p.add_argument("--marginals", help="output marginals JSONL")
    p.add_argument("--tags-out", help="output CoNLL tags")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("train", parents=[common], help="distil the labels into a token classifier")
    p.add_argument("--marginals", help="input marginals JSONL")
    p.add_argument("--epochs", type=int)
    p.add_argument("--classifier-out", help="output classifier file")
    p.add_argument("--predictions", help="also write the classifier's marginals on the corpus")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against gold tags")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--marginals", help="predicted marginals JSONL (default source)")
    src.add_argument("--tags", help="predicted tags in CoNLL format")
    src.add_argument("--classifier", help="classifier file, applied to the corpus")
    p.add_argument("--mapping", help="label mapping file, or 'conll' for the scheme's mapping")
    p.add_argument("--token-mode", choices=("label", "tag"))
    p.add_argument("--report", help="output report JSON (a .txt table is written next to it)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", parents=[common], help="pairwise agreement between labelling functions")
    p.add_argument("--annotations", help="input annotation JSONL")
    p.add_argument("--agreement", help="output CSV")
    p.add_argument("--model", help="also summarise a fitted model file")
    p.set_defaults(func=cmd_inspect)
    return parser


def _overrides(args):
    pairs = [cfgmod.parse_override(s) for s in args.set]
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            pairs.append((key, value))
    return pairs


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"weakseq: error: {exc}\n")
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = cfgmod.load_config(args.config, _overrides(args))
        return args.func(cfg, args)
    except (UsageError, cfgmod.ConfigError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except InvariantError as exc:
        log.error("invariant breached: %s", exc)
        return EXIT_INVARIANT
    except (WeakseqError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
