"""Pipeline configuration: one declarative YAML or JSON file.

Every key has a default; unknown keys are rejected so that typos fail
loudly. Command-line flags are applied on top of the file with
:func:`apply_override`, using dotted key paths such as ``aggregate.tol``.

Layout::

    scheme: conll                    # "conll", a JSON file, or {labels, mapping}
    corpus: data/train.conll         # CoNLL or JSONL documents
    seed: 0
    workers: 1
    labelling:
      gazetteers:                    # surface<TAB>LABEL files
        - {path: gaz/cities.tsv, name: cities, case: insensitive, multitoken_only: false}
      detectors: [date, money]       # ids, or {id, name} mappings
      external: [ner_model.jsonl]    # precomputed annotation files
      doc_majority: [sensitive]
      doc_history: true
      base_functions: null           # defaults to every local function
    aggregate:
      method: hmm                    # hmm | mv | acc | cv | cm | seq | dcm
      reliable: null
      ...
    train: {dim: 262144, lr: 0.1, epochs: 5, batch_size: 32, l2: 1.0e-5}
    evaluate: {mapping: null, token_mode: label}
    paths: {annotations: annotations.jsonl, model: model.json, ...}
"""
from __future__ import annotations

import copy
import json
import os
import re

import yaml

from .corpus import LabelScheme

METHODS = ("hmm", "mv", "acc", "cv", "cm", "seq", "dcm")

DEFAULTS = {
    "scheme": "conll",
    "corpus": None,
    "seed": 0,
    "workers": 1,
    "labelling": {
        "gazetteers": [],
        "detectors": [],
        "external": [],
        "doc_majority": [],
        "doc_history": False,
        "base_functions": None,
    },
    "aggregate": {
        "method": "hmm",
        "reliable": None,
        "tol": 1e-4,
        "max_iter": 50,
        "concentration": 10.0,
        "clamp": 1e-3,
        "recall": 0.5,
        "precision": 0.5,
        "threshold": 1,
        "matching": "majority-voter",
        "smoothing": 0.01,
    },
    "train": {
        "dim": 2 ** 18,
        "lr": 0.1,
        "epochs": 5,
        "batch_size": 32,
        "l2": 1e-5,
    },
    "evaluate": {
        "mapping": None,
        "token_mode": "label",
    },
    "paths": {
        "annotations": "annotations.jsonl",
        "model": "model.json",
        "marginals": "marginals.jsonl",
        "tags": "tags.conll",
        "classifier": "classifier.bin",
        "report": "report.json",
        "agreement": "agreement.csv",
    },
}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-6`` (no decimal point) as a float, as YAML 1.2 does."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def _yaml(text_or_stream):
    return yaml.load(text_or_stream, Loader=_Loader)


def _merge(base, update, path=""):
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value
    return base


def load_config(path=None, overrides=()):
    """Defaults, updated by the file at ``path`` and then by ``(key, value)`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    base_dir = "."
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"configuration file {path} does not exist")
        with open(path, encoding="utf-8") as fh:
            try:
                data = _yaml(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a mapping at the top level")
        _merge(cfg, data)
        base_dir = os.path.dirname(os.path.abspath(path))
    for key, value in overrides:
        apply_override(cfg, key, value)
    cfg["_base_dir"] = base_dir
    validate(cfg)
    return cfg


def apply_override(cfg, dotted, value):
    """Set ``cfg[a][b] = value`` for ``dotted = "a.b"``; the key must exist."""
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown configuration key {dotted!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown configuration key {dotted!r}")
    node[parts[-1]] = value


def parse_override(text):
    """``"key.path=value"`` with the value parsed as YAML (so numbers stay numbers)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    return key.strip(), _yaml(raw)


def resolve(cfg, path):
    """Config paths are relative to the config file's directory."""
    if path is None or os.path.isabs(path):
        return path
    return os.path.join(cfg.get("_base_dir", "."), path)


def _check(cond, message):
    if not cond:
        raise ConfigError(message)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate(cfg):
    agg, train, lab = cfg["aggregate"], cfg["train"], cfg["labelling"]
    _check(_is_int(cfg["seed"]), "seed must be an integer")
    _check(_is_int(cfg["workers"]) and cfg["workers"] >= 1, "workers must be a positive integer")
    _check(agg["method"] in METHODS, f"aggregate.method must be one of {METHODS}")
    _check(_is_num(agg["tol"]) and 0 <= agg["tol"] < 1, "aggregate.tol must lie in [0, 1)")
    _check(_is_int(agg["max_iter"]) and agg["max_iter"] >= 0, "aggregate.max_iter must be a non-negative integer")
    _check(_is_num(agg["concentration"]) and agg["concentration"] > 0, "aggregate.concentration must be positive")
    _check(_is_num(agg["clamp"]) and 0 < agg["clamp"] < 0.5, "aggregate.clamp must lie in (0, 0.5)")
    _check(_is_int(agg["threshold"]) and agg["threshold"] >= 1, "aggregate.threshold must be a positive integer")
    _check(agg["matching"] in ("reliable-function", "majority-voter", "dirichlet-hmm"),
           "aggregate.matching must be reliable-function, majority-voter or dirichlet-hmm")
    _check(_is_num(agg["smoothing"]) and agg["smoothing"] > 0, "aggregate.smoothing must be positive")
    for key in ("recall", "precision"):
        values = agg[key].values() if isinstance(agg[key], dict) else [agg[key]]
        _check(all(_is_num(v) and 0 < v < 1 for v in values), f"aggregate.{key} estimates must lie in (0, 1)")
    _check(_is_int(train["dim"]) and train["dim"] >= 2 ** 10, "train.dim must be an integer >= 1024")
    _check(_is_num(train["lr"]) and train["lr"] > 0, "train.lr must be positive")
    _check(_is_int(train["epochs"]) and train["epochs"] >= 0, "train.epochs must be a non-negative integer")
    _check(_is_int(train["batch_size"]) and train["batch_size"] >= 1, "train.batch_size must be a positive integer")
    _check(_is_num(train["l2"]) and train["l2"] >= 0, "train.l2 must be non-negative")
    _check(cfg["evaluate"]["token_mode"] in ("label", "tag"), "evaluate.token_mode must be label or tag")
    for mode in lab["doc_majority"]:
        _check(mode in ("sensitive", "insensitive"), f"unknown doc_majority case mode {mode!r}")
    for g in lab["gazetteers"]:
        _check(isinstance(g, dict) and "path" in g, "each gazetteer needs a path")
        unknown = set(g) - {"path", "name", "case", "multitoken_only"}
        _check(not unknown, f"unknown gazetteer keys {sorted(unknown)}")
        _check(g.get("case", "sensitive") in ("sensitive", "insensitive"), f"bad case mode in gazetteer {g['path']}")
        _check(os.path.exists(resolve(cfg, g["path"])), f"gazetteer file {resolve(cfg, g['path'])} does not exist")
    for path in lab["external"]:
        _check(os.path.exists(resolve(cfg, path)), f"external annotation file {resolve(cfg, path)} does not exist")
    if cfg["corpus"] is not None:
        _check(os.path.exists(resolve(cfg, cfg["corpus"])), f"corpus file {resolve(cfg, cfg['corpus'])} does not exist")
    scheme = cfg["scheme"]
    if isinstance(scheme, str) and scheme != "conll":
        _check(os.path.exists(resolve(cfg, scheme)), f"scheme file {resolve(cfg, scheme)} does not exist")
    mapping = cfg["evaluate"]["mapping"]
    if isinstance(mapping, str) and mapping != "conll":
        _check(os.path.exists(resolve(cfg, mapping)), f"mapping file {resolve(cfg, mapping)} does not exist")


def load_scheme(cfg):
    scheme = cfg["scheme"]
    if scheme == "conll":
        return LabelScheme.conll()
    if isinstance(scheme, dict):
        return LabelScheme.from_dict(scheme)
    with open(resolve(cfg, scheme), encoding="utf-8") as fh:
        return LabelScheme.from_dict(_yaml(fh))


def load_mapping(cfg, scheme):
    """Label mapping for evaluation: ``"conll"`` means the scheme's own mapping."""
    mapping = cfg["evaluate"]["mapping"]
    if mapping is None:
        return None
    if mapping == "conll":
        return dict(scheme.mapping)
    if isinstance(mapping, dict):
        return mapping
    with open(resolve(cfg, mapping), encoding="utf-8") as fh:
        data = _yaml(fh) if not mapping.endswith(".json") else json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"mapping file {mapping} must contain a label-to-label mapping")
    return data
