import pytest

from sfcml.config import KNOWN_KEYS, load_config, parse_assignments
from sfcml.exceptions import InvalidValue, MissingKey, UnknownKey


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_override_precedence(tmp_path):
    p = _write(tmp_path, "dataset.path = r.tsv\ntrain.learning_rate = 0.01\n")
    cfg = load_config(p, ["train.learning_rate=0.03"])
    assert cfg["train.learning_rate"] == (0.03,)
    assert cfg.train_config().learning_rate == 0.03


def test_invalid_value(tmp_path):
    p = _write(tmp_path, "dataset.path = r.tsv\ntrain.epochs = abc\n")
    with pytest.raises(InvalidValue) as err:
        load_config(p)
    assert err.value.key == "train.epochs"


def test_missing_required_key(tmp_path):
    p = _write(tmp_path, "# nothing but a comment\n\ntrain.epochs = 3\n")
    with pytest.raises(MissingKey) as err:
        load_config(p)
    assert err.value.name == "dataset.path"


def test_unknown_key(tmp_path):
    p = _write(tmp_path, "dataset.path = r.tsv\ntrain.lr = 0.1\n")
    with pytest.raises(UnknownKey):
        load_config(p)
    with pytest.raises(UnknownKey):
        load_config(None, ["dataset.path=x", "bogus=1"])


@pytest.mark.parametrize(
    "key, value",
    [
        ("train.margin", "0"),
        ("train.method", "adam"),
        ("train.sequential", "maybe"),
        ("split.ratios", "0.5,0.5"),
        ("split.ratios", "0.6,0.3,0.3"),
        ("dataset.delimiter", "ab"),
        ("eval.ks", "3,,5"),
        ("eval.mask_mode", "partial"),
        ("sampler.kind", "random"),
        ("sampler.u", "0"),
        ("train.improvement_epsilon", "-1"),
    ],
)
def test_rejected_values(key, value):
    with pytest.raises(InvalidValue):
        load_config(None, ["dataset.path=x", f"{key}={value}"])


def test_defaults_and_types():
    cfg = load_config(None, ["dataset.path=x"])
    tc = cfg.train_config()
    assert (tc.learning_rate, tc.epochs, tc.batch_size, tc.margin, tc.dim) == (0.01, 200, 256, 1.0, 256)
    assert (tc.patience, tc.improvement_epsilon, tc.radius, tc.method) == (15, 1e-5, 1.0, "sfcml")
    assert cfg.delimiter == "\t"
    assert cfg["eval.ks"] == (3, 5, 10, 20)
    assert cfg["split.ratios"] == (0.6, 0.2, 0.2)
    assert cfg["log.timing"] is False


def test_named_delimiters():
    assert load_config(None, ["dataset.path=x", "dataset.delimiter=::"]).delimiter == "::"
    assert load_config(None, ["dataset.path=x", "dataset.delimiter=comma"]).delimiter == ","
    assert load_config(None, ["dataset.path=x", "dataset.delimiter=|"]).delimiter == "|"


def test_grid_expansion():
    cfg = load_config(None, ["dataset.path=x", "train.learning_rate=0.01,0.03", "train.margin=1.0,2.0",
                             "train.method=sampled", "sampler.u=1,3"])
    assert cfg.is_grid
    configs = cfg.train_configs()
    assert len(configs) == 8
    assert {(c.learning_rate, c.margin, c.sampler.n_negatives) for c in configs} == {
        (a, b, u) for a in (0.01, 0.03) for b in (1.0, 2.0) for u in (1, 3)
    }
    with pytest.raises(InvalidValue):
        cfg.train_config()


def test_sampler_options():
    cfg = load_config(None, ["dataset.path=x", "sampler.kind=hard", "sampler.u=2",
                             "sampler.candidate_multiplier=4", "sampler.replace=true"])
    s = cfg.sampler()
    assert (s.kind, s.n_negatives, s.candidate_multiplier, s.replace) == ("hard", 2, 4, True)
    auto = load_config(None, ["dataset.path=x", "sampler.kind=two_stage"]).sampler()
    assert auto.candidate_multiplier == 5 and auto.replace is False


def test_manifest_round_trip(tmp_path):
    cfg = load_config(None, ["dataset.path=data/r.tsv", "train.margin=1.5", "dataset.delimiter=::"])
    text = cfg.manifest_tsv()
    lines = text.splitlines()
    assert lines[0] == "key\tvalue"
    assert [line.split("\t")[0] for line in lines[1:]] == list(KNOWN_KEYS)
    p = _write(tmp_path, text, "run-manifest.tsv")
    again = load_config(p)
    assert again.values == cfg.values
    assert again.manifest_tsv() == text


def test_malformed_line(tmp_path):
    p = _write(tmp_path, "dataset.path r.tsv\n")
    with pytest.raises(InvalidValue):
        load_config(p)
    with pytest.raises(InvalidValue):
        load_config(None, ["dataset.path"])


def test_parse_assignments_strips_comments_and_blanks():
    out = parse_assignments(["# c", "", "  a = 1 ", "b=x=y"])
    assert out == {"a": "1", "b": "x=y"}
