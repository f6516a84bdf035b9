import pytest

from rme.config import apply_overrides, load_config, parse_config_text, parse_value, take
from rme.errors import ConfigurationError


def test_scalar_typing():
    assert parse_value("42") == 42
    assert isinstance(parse_value("42"), int)
    assert parse_value("-7") == -7
    assert parse_value("5e-4") == 5e-4
    assert parse_value("3.25") == 3.25
    assert parse_value("true") is True
    assert parse_value("false") is False
    assert parse_value("adam") == "adam"
    assert parse_value('"0,1,2"') == "0,1,2"
    assert parse_value('"true"') == "true"


def test_list_values():
    assert parse_value("0, 1, 2") == (0, 1, 2)
    assert parse_value("0.05,0.25,0.5") == (0.05, 0.25, 0.5)
    assert parse_value("knn, idw") == ("knn", "idw")
    with pytest.raises(ConfigurationError):
        parse_value("1,,2")
    with pytest.raises(ConfigurationError):
        parse_value("")


def test_config_text_parsing():
    cfg = parse_config_text(
        """
        # benchmark defaults
        seed = 7
        model.num_heads = 4   # inline comment
        train_pool = 0, 1, 2
        out_dir = runs/bench
        """
    )
    assert cfg == {
        "seed": 7,
        "model.num_heads": 4,
        "train_pool": (0, 1, 2),
        "out_dir": "runs/bench",
    }


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ConfigurationError, match=":2:"):
        parse_config_text("a = 1\nbroken line\n")
    with pytest.raises(ConfigurationError, match="duplicate"):
        parse_config_text("a = 1\na = 2\n")
    with pytest.raises(ConfigurationError, match="bad key"):
        parse_config_text("3x = 1\n")
    with pytest.raises(ConfigurationError, match=":1:"):
        parse_config_text("a =\n")


def test_load_config_round_trip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 3\nlr = 5e-4\n")
    assert load_config(path) == {"seed": 3, "lr": 5e-4}
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")


def test_overrides_win():
    base = {"seed": 1, "lr": 5e-4}
    merged = apply_overrides(base, ["seed=9", "model.variant=no-b"])
    assert merged == {"seed": 9, "lr": 5e-4, "model.variant": "no-b"}
    assert base["seed"] == 1  # input untouched
    with pytest.raises(ConfigurationError):
        apply_overrides(base, ["no-equals-sign"])
    with pytest.raises(ConfigurationError):
        apply_overrides(base, ["bad key=1"])


def test_take_typing():
    cfg = {"seed": 7, "lr": 5e-4, "epochs": 20, "flag": True, "pool": (0, 1)}
    assert take(cfg, "seed", kind=int) == 7
    assert take(cfg, "epochs", kind=float) == 20.0  # ints widen to float
    assert take(cfg, "missing", default=3) == 3
    assert take(cfg, "pool", kind=tuple) == (0, 1)
    assert take(cfg, "seed", kind=tuple) == (7,)  # single element, no comma
    with pytest.raises(ConfigurationError):
        take(cfg, "lr", kind=int)
    with pytest.raises(ConfigurationError):
        take(cfg, "flag", kind=int)  # bools are not ints here
