import json
import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from weakseq import cli
from weakseq.config import (
    DEFAULTS,
    ConfigError,
    apply_override,
    load_config,
    load_mapping,
    load_scheme,
    parse_override,
    resolve,
)
from weakseq.corpus import LabelScheme


def write(path, text):
    path.write_text(text)
    return str(path)


def test_defaults_without_file():
    cfg = load_config()
    assert cfg["aggregate"] == DEFAULTS["aggregate"]
    assert cfg["_base_dir"] == "."
    # defaults are copied, not shared
    cfg["aggregate"]["tol"] = 0.5
    assert DEFAULTS["aggregate"]["tol"] == 1e-4


def test_file_values_and_exponent_floats(tmp_path):
    cfg = load_config(write(tmp_path / "c.yaml", "seed: 3\naggregate: {tol: 1e-6, max_iter: 7}\n"))
    assert cfg["seed"] == 3 and cfg["aggregate"]["tol"] == 1e-6 and cfg["aggregate"]["max_iter"] == 7
    assert cfg["aggregate"]["method"] == "hmm"


def test_json_config(tmp_path):
    cfg = load_config(write(tmp_path / "c.json", json.dumps({"train": {"epochs": 2}})))
    assert cfg["train"]["epochs"] == 2


@pytest.mark.parametrize("text, where", [
    ("sede: 1\n", "sede"),
    ("aggregate: {tolerance: 0.1}\n", "aggregate.tolerance"),
    ("aggregate: 3\n", "aggregate"),
])
def test_unknown_or_misshapen_keys(tmp_path, text, where):
    with pytest.raises(ConfigError, match=where):
        load_config(write(tmp_path / "c.yaml", text))


def test_unparseable_and_non_mapping(tmp_path):
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(write(tmp_path / "a.yaml", "seed: [1\n"))
    with pytest.raises(ConfigError, match="mapping"):
        load_config(write(tmp_path / "b.yaml", "- 1\n- 2\n"))
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(str(tmp_path / "missing.yaml"))


def test_empty_file_is_all_defaults(tmp_path):
    assert load_config(write(tmp_path / "c.yaml", ""))["seed"] == 0


@pytest.mark.parametrize("text, expected", [
    ("aggregate.tol=1e-12", ("aggregate.tol", 1e-12)),
    ("aggregate.tol=-2E-3", ("aggregate.tol", -2e-3)),
    ("aggregate.tol=1.5e3", ("aggregate.tol", 1500.0)),
    ("seed=10", ("seed", 10)),
    ("aggregate.reliable=names", ("aggregate.reliable", "names")),
    ("labelling.detectors=[date, money]", ("labelling.detectors", ["date", "money"])),
    ("aggregate.reliable=a=b", ("aggregate.reliable", "a=b")),
    ("aggregate.reliable=", ("aggregate.reliable", None)),
])
def test_parse_override(text, expected):
    assert parse_override(text) == expected


def test_parse_override_needs_equals():
    with pytest.raises(ConfigError, match="key=value"):
        parse_override("aggregate.tol")


@given(st.floats(min_value=1e-300, max_value=1e300, allow_nan=False))
def test_parse_override_round_trips_floats(x):
    assert parse_override(f"aggregate.tol={x!r}")[1] == x


def test_apply_override():
    cfg = load_config()
    apply_override(cfg, "aggregate.tol", 0.25)
    assert cfg["aggregate"]["tol"] == 0.25
    for bad in ("aggregate.nope", "nope.tol", "seed.x"):
        with pytest.raises(ConfigError, match="unknown"):
            apply_override(cfg, bad, 1)


def test_overrides_beat_file(tmp_path):
    path = write(tmp_path / "c.yaml", "aggregate: {tol: 0.01}\n")
    assert load_config(path, [("aggregate.tol", 0.2)])["aggregate"]["tol"] == 0.2


def test_flags_beat_set_beat_file(tmp_path):
    path = write(tmp_path / "c.yaml", "aggregate: {tol: 0.01, max_iter: 9}\n")
    args = cli.build_parser().parse_args(["aggregate", "-c", path, "--set", "aggregate.tol=0.02",
                                          "--set", "aggregate.max_iter=4", "--tol", "0.03"])
    cfg = load_config(args.config, cli._overrides(args))
    assert cfg["aggregate"]["tol"] == 0.03 and cfg["aggregate"]["max_iter"] == 4


def test_relative_paths_follow_config_dir(tmp_path):
    sub = tmp_path / "conf"
    sub.mkdir()
    (sub / "gaz.tsv").write_text("Paris\tLOC\n")
    cfg = load_config(write(sub / "c.yaml", "labelling:\n  gazetteers: [{path: gaz.tsv}]\n"))
    assert resolve(cfg, "gaz.tsv") == os.path.join(str(sub), "gaz.tsv")
    assert resolve(cfg, "/abs/x") == "/abs/x" and resolve(cfg, None) is None
    # the same relative path is missing when resolved against another directory
    with pytest.raises(ConfigError, match="gazetteer file"):
        load_config(write(tmp_path / "c.yaml", "labelling:\n  gazetteers: [{path: gaz.tsv}]\n"))


@pytest.mark.parametrize("key, value", [
    ("aggregate.tol", 1.0),
    ("aggregate.tol", -0.1),
    ("aggregate.tol", "1e-4x"),
    ("aggregate.max_iter", -1),
    ("aggregate.max_iter", 2.5),
    ("aggregate.concentration", 0),
    ("aggregate.clamp", 0.5),
    ("aggregate.threshold", 0),
    ("aggregate.method", "snorkel"),
    ("aggregate.matching", "nearest"),
    ("aggregate.smoothing", 0),
    ("aggregate.recall", 1.0),
    ("aggregate.precision", {"names": 0.0}),
    ("train.dim", 512),
    ("train.lr", 0),
    ("train.epochs", -1),
    ("train.batch_size", 0),
    ("train.l2", -1e-3),
    ("evaluate.token_mode", "span"),
    ("labelling.doc_majority", ["loose"]),
    ("seed", True),
    ("workers", 0),
])
def test_validation_ranges(key, value):
    with pytest.raises(ConfigError):
        load_config(None, [(key, value)])


def test_gazetteer_entries_validated(tmp_path):
    (tmp_path / "g.tsv").write_text("Paris\tLOC\n")
    bad = ["[g.tsv]", "[{name: x}]", "[{path: g.tsv, kase: sensitive}]", "[{path: g.tsv, case: upper}]"]
    for k, entry in enumerate(bad):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path / f"c{k}.yaml", f"labelling:\n  gazetteers: {entry}\n"))


def test_per_function_estimates_accepted():
    cfg = load_config(None, [("aggregate.recall", {"a": 0.3, "b": 0.9})])
    assert cfg["aggregate"]["recall"] == {"a": 0.3, "b": 0.9}


def test_load_scheme(tmp_path):
    assert load_scheme(load_config()) == LabelScheme.conll()
    inline = load_config(None, [("scheme", {"labels": ["A", "B"]})])
    assert load_scheme(inline).labels == ("A", "B")
    path = write(tmp_path / "s.json", json.dumps({"labels": ["X"], "mapping": {"Y": "X"}}))
    scheme = load_scheme(load_config(None, [("scheme", path)]))
    assert scheme.labels == ("X",) and scheme.n_tags == 3
    with pytest.raises(ConfigError, match="scheme file"):
        load_config(None, [("scheme", str(tmp_path / "none.json"))])


def test_load_mapping(tmp_path):
    scheme = LabelScheme.conll()
    assert load_mapping(load_config(), scheme) is None
    assert load_mapping(load_config(None, [("evaluate.mapping", "conll")]), scheme) == dict(scheme.mapping)
    assert load_mapping(load_config(None, [("evaluate.mapping", {"GPE": "LOC"})]), scheme) == {"GPE": "LOC"}
    path = write(tmp_path / "m.yaml", "GPE: LOC\nNORP: MISC\n")
    assert load_mapping(load_config(None, [("evaluate.mapping", path)]), scheme) == {"GPE": "LOC", "NORP": "MISC"}
    path = write(tmp_path / "m.json", json.dumps({"GPE": "LOC"}))
    assert load_mapping(load_config(None, [("evaluate.mapping", path)]), scheme) == {"GPE": "LOC"}
    path = write(tmp_path / "bad.yaml", "- GPE\n")
    with pytest.raises(ConfigError, match="label-to-label"):
        load_mapping(load_config(None, [("evaluate.mapping", path)]), scheme)
