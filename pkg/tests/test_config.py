"""Key/value config grammar, env overrides, typed accessors."""

from __future__ import annotations

import pytest

from jpt.config import Config, ConfigError, env_overrides, load_config, parse_config


def test_parse_basic_assignments():
    values = parse_config(
        """
        # a comment
        train.learning_rate = 5e-3

        model.d_model=48
        name = spaced value here
        """
    )
    assert values == {
        "train.learning_rate": "5e-3",
        "model.d_model": "48",
        "name": "spaced value here",
    }


def test_value_may_contain_equals():
    assert parse_config("expr = a=b")["expr"] == "a=b"


@pytest.mark.parametrize("line", ["just words", "= novalue", "9bad = 1", "Bad.Key = 1"])
def test_malformed_lines_rejected_with_line_number(line):
    with pytest.raises(ConfigError, match=":1:"):
        parse_config(line)


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("a = 1\na = 2")


def test_env_overrides_file_values(tmp_path):
    path = tmp_path / "jpt.cfg"
    path.write_text("train.epochs = 5\ntrain.seed = 1\n")
    config = load_config(path, env={"JPT_TRAIN__EPOCHS": "9", "UNRELATED": "x"})
    assert config.get_int("train.epochs") == 9  # env wins
    assert config.get_int("train.seed") == 1  # file survives


def test_env_double_underscore_maps_to_dot():
    assert env_overrides({"JPT_A__B__C": "v"}) == {"a.b.c": "v"}
    assert env_overrides({"JPT_SIMPLE": "v"}) == {"simple": "v"}


def test_env_malformed_name_fails_loudly():
    with pytest.raises(ConfigError, match="JPT_9BAD"):
        env_overrides({"JPT_9BAD": "v"})


def test_missing_file_is_an_error(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.cfg", env={})


def test_no_file_env_only():
    config = load_config(None, env={"JPT_X": "3"})
    assert config.get_int("x") == 3


def test_typed_accessors():
    config = Config({"i": "7", "f": "2.5", "b": "yes", "t": "64, 32", "s": "hello"})
    assert config.get_int("i") == 7
    assert config.get_float("f") == 2.5
    assert config.get_bool("b") is True
    assert config.get_int_tuple("t") == (64, 32)
    assert config.get_str("s") == "hello"


def test_accessor_defaults_and_missing():
    config = Config({})
    assert config.get_int("absent", 4) == 4
    assert config.get_bool("absent", False) is False
    assert config.get_int_tuple("absent") == ()
    with pytest.raises(ConfigError, match="missing required"):
        config.get_int("absent")


@pytest.mark.parametrize(
    "key,value,getter",
    [("i", "abc", "get_int"), ("f", "abc", "get_float"), ("b", "maybe", "get_bool"),
     ("t", "1,x", "get_int_tuple")],
)
def test_bad_coercions_name_the_key(key, value, getter):
    config = Config({key: value})
    with pytest.raises(ConfigError, match=key):
        getattr(config, getter)(key)


def test_bool_spellings():
    for raw, want in [("1", True), ("true", True), ("ON", True), ("0", False),
                      ("no", False), ("Off", False)]:
        assert Config({"k": raw}).get_bool("k") is want


def test_empty_tuple_value():
    assert Config({"t": ""}).get_int_tuple("t") == ()
