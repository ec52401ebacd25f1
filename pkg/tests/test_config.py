"""Config schema parsing, validation, and file loading."""
import json

import pytest

from hindsight_attrib.config import RunConfig, config_from_dict, load_config
from hindsight_attrib.errors import ConfigError


def minimal_raw(**overrides):
    raw = {
        "schema_version": 1,
        "data_csv": "panel.csv",
        "out_dir": "out",
        "train_range": ["2020-01-01", "2020-06-30"],
        "trade_range": ["2020-07-01", "2020-12-31"],
    }
    raw.update(overrides)
    return raw


def test_defaults_from_minimal_config():
    cfg = config_from_dict(minimal_raw())
    assert cfg.lam == 0.5
    assert cfg.smooth_window == 20
    assert cfg.cov_window == 20
    assert cfg.ig_steps == 64
    assert cfg.seed == 0
    assert cfg.tickers is None
    assert cfg.models == ["lr", "dt", "rf", "svm"]
    assert cfg.algo == "a2c"
    assert cfg.train_steps == 20000
    assert cfg.agent_hp.gamma == 0.99
    assert cfg.agent_hp.hidden == (64, 64)
    assert cfg.indicators.rsi_period == 14
    assert cfg.model_params == {}


def test_round_trip_through_to_dict():
    raw = minimal_raw(
        tickers=["AAA", "BBB"],
        lam=0.25,
        smooth_window=5,
        cov_window=15,
        ig_steps=8,
        seed=7,
        models=["lr", "svm"],
        indicators={"rsi_period": 10},
        agent={"algo": "ppo", "steps": 512, "rollout": 32, "hidden": [8, 8]},
        model_params={"svm": {"epochs": 50}},
    )
    cfg = config_from_dict(raw)
    again = config_from_dict(cfg.to_dict())
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()
    assert cfg.algo == "ppo"
    assert cfg.train_steps == 512
    assert cfg.agent_hp.rollout == 32
    assert cfg.agent_hp.hidden == (8, 8)
    assert cfg.indicators.rsi_period == 10
    assert cfg.model_params == {"svm": {"epochs": 50}}


def test_algo_name_is_case_insensitive():
    cfg = config_from_dict(minimal_raw(agent={"algo": "PPO"}))
    assert cfg.algo == "ppo"


@pytest.mark.parametrize(
    "overrides,fragment",
    [
        ({"lam": 0.0}, "lam"),
        ({"lam": -1.0}, "lam"),
        ({"smooth_window": 0}, "smooth_window"),
        ({"cov_window": 1}, "cov_window"),
        ({"ig_steps": 0}, "ig_steps"),
        ({"agent": {"steps": -1}}, "steps"),
        ({"agent": {"algo": "dqn"}}, "algo"),
        ({"models": ["lr", "mlp"]}, "mlp"),
        ({"model_params": {"boost": {}}}, "boost"),
    ],
)
def test_validation_rejections(overrides, fragment):
    with pytest.raises(ConfigError, match=fragment):
        config_from_dict(minimal_raw(**overrides))


def test_train_range_must_end_before_trade_range():
    raw = minimal_raw(
        train_range=["2020-01-01", "2020-07-01"],
        trade_range=["2020-07-01", "2020-12-31"],
    )
    with pytest.raises(ConfigError, match="before trading"):
        config_from_dict(raw)


@pytest.mark.parametrize("bad", ["2020-13-01", "not-a-date", 20200101, None])
def test_non_iso_dates_rejected(bad):
    with pytest.raises(ConfigError, match="ISO date"):
        config_from_dict(minimal_raw(train_range=[bad, "2020-06-30"]))


def test_reversed_and_malformed_date_pairs():
    with pytest.raises(ConfigError, match="after end"):
        config_from_dict(minimal_raw(trade_range=["2020-12-31", "2020-07-01"]))
    with pytest.raises(ConfigError, match="expected"):
        config_from_dict(minimal_raw(train_range="2020-01-01"))
    with pytest.raises(ConfigError, match="expected"):
        config_from_dict(minimal_raw(train_range=["2020-01-01", "2020-02-01", "2020-03-01"]))


def test_unknown_keys_rejected_at_every_level():
    with pytest.raises(ConfigError, match="transaction_cost"):
        config_from_dict(minimal_raw(transaction_cost=0.001))
    with pytest.raises(ConfigError, match="agent keys"):
        config_from_dict(minimal_raw(agent={"learning_rate": 1e-3}))
    with pytest.raises(ConfigError, match="indicator keys"):
        config_from_dict(minimal_raw(indicators={"bollinger": 20}))


def test_schema_version_checked():
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_dict(minimal_raw(schema_version=2))
    raw = minimal_raw()
    del raw["schema_version"]
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_dict(raw)


@pytest.mark.parametrize("key", ["data_csv", "out_dir", "train_range", "trade_range"])
def test_required_keys(key):
    raw = minimal_raw()
    del raw[key]
    with pytest.raises(ConfigError, match=key):
        config_from_dict(raw)


def test_root_must_be_object():
    with pytest.raises(ConfigError, match="object"):
        config_from_dict(["not", "a", "dict"])


def test_validate_is_rerunnable_on_dataclass():
    cfg = RunConfig(
        data_csv="x.csv",
        out_dir="o",
        train_range=("2020-01-01", "2020-06-30"),
        trade_range=("2020-07-01", "2020-12-31"),
    )
    assert cfg.validate() is cfg
    cfg.cov_window = 1
    with pytest.raises(ConfigError):
        cfg.validate()


def test_load_config_reads_file_and_applies_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(minimal_raw(seed=3, out_dir="orig")))
    cfg = load_config(path)
    assert cfg.seed == 3
    assert cfg.out_dir == "orig"
    cfg = load_config(path, seed=11, out_dir=str(tmp_path / "elsewhere"))
    assert cfg.seed == 11
    assert cfg.out_dir == str(tmp_path / "elsewhere")


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.json")


def test_load_config_bad_json(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="valid JSON"):
        load_config(path)
