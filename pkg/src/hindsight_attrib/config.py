"""Run configuration: a versioned JSON schema shared by all subcommands."""
from __future__ import annotations

import datetime
import json
import logging
from dataclasses import dataclass, field

from .agents import Hyperparams
from .baselines import KIND_ALIASES
from .errors import ConfigError
from .features import IndicatorParams

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version",
    "data_csv",
    "out_dir",
    "tickers",
    "train_range",
    "trade_range",
    "lam",
    "smooth_window",
    "cov_window",
    "ig_steps",
    "seed",
    "models",
    "indicators",
    "agent",
    "model_params",
}


def _iso_or_raise(value: str, where: str) -> str:
    try:
        datetime.date.fromisoformat(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {value!r} is not an ISO date") from exc
    return value


def _date_pair(raw, where: str) -> tuple[str, str]:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 2):
        raise ConfigError(f"{where}: expected [start, end], got {raw!r}")
    lo, hi = (_iso_or_raise(v, where) for v in raw)
    if lo > hi:
        raise ConfigError(f"{where}: start {lo} after end {hi}")
    return lo, hi


@dataclass
class RunConfig:
    data_csv: str
    out_dir: str
    train_range: tuple[str, str]
    trade_range: tuple[str, str]
    tickers: list[str] | None = None
    lam: float = 0.5
    smooth_window: int = 20
    cov_window: int = 20
    ig_steps: int = 64
    seed: int = 0
    models: list[str] = field(default_factory=lambda: ["lr", "dt", "rf", "svm"])
    indicators: IndicatorParams = field(default_factory=IndicatorParams)
    algo: str = "a2c"
    train_steps: int = 20000
    agent_hp: Hyperparams = field(default_factory=Hyperparams)
    model_params: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.lam <= 0:
            raise ConfigError(f"lam must be positive, got {self.lam}")
        if self.smooth_window < 1:
            raise ConfigError(f"smooth_window must be >= 1, got {self.smooth_window}")
        if self.cov_window < 2:
            raise ConfigError(f"cov_window must be >= 2, got {self.cov_window}")
        if self.ig_steps < 1:
            raise ConfigError(f"ig_steps must be >= 1, got {self.ig_steps}")
        if self.train_steps < 0:
            raise ConfigError(f"agent.steps must be >= 0, got {self.train_steps}")
        if self.train_range[1] >= self.trade_range[0]:
            raise ConfigError(
                f"training must end before trading starts: "
                f"{self.train_range[1]} >= {self.trade_range[0]}"
            )
        if self.algo not in ("a2c", "ppo"):
            raise ConfigError(f"agent.algo must be a2c or ppo, got {self.algo!r}")
        for m in self.models:
            if m not in KIND_ALIASES:
                raise ConfigError(f"unknown model {m!r}, expected one of {sorted(KIND_ALIASES)}")
        for m in self.model_params:
            if m not in KIND_ALIASES:
                raise ConfigError(f"model_params key {m!r} is not a model alias")
        return self

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "data_csv": self.data_csv,
            "out_dir": self.out_dir,
            "tickers": self.tickers,
            "train_range": list(self.train_range),
            "trade_range": list(self.trade_range),
            "lam": self.lam,
            "smooth_window": self.smooth_window,
            "cov_window": self.cov_window,
            "ig_steps": self.ig_steps,
            "seed": self.seed,
            "models": list(self.models),
            "indicators": self.indicators.to_dict(),
            "agent": {"algo": self.algo, "steps": self.train_steps, **self.agent_hp.to_dict()},
            "model_params": self.model_params,
        }


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    for key in ("data_csv", "out_dir", "train_range", "trade_range"):
        if key not in raw:
            raise ConfigError(f"missing required config key {key!r}")

    agent_raw = dict(raw.get("agent", {}))
    algo = str(agent_raw.pop("algo", "a2c")).lower()
    steps = agent_raw.pop("steps", 20000)
    hp_fields = set(Hyperparams().__dict__)
    unknown_hp = set(agent_raw) - hp_fields
    if unknown_hp:
        raise ConfigError(f"unknown agent keys: {sorted(unknown_hp)}")
    try:
        agent_hp = Hyperparams.from_dict({**Hyperparams().to_dict(), **agent_raw})
    except TypeError as exc:
        raise ConfigError(f"bad agent hyperparameters: {exc}") from exc

    ind_raw = raw.get("indicators", {})
    unknown_ind = set(ind_raw) - set(IndicatorParams().__dict__)
    if unknown_ind:
        raise ConfigError(f"unknown indicator keys: {sorted(unknown_ind)}")

    cfg = RunConfig(
        data_csv=str(raw["data_csv"]),
        out_dir=str(raw["out_dir"]),
        train_range=_date_pair(raw["train_range"], "train_range"),
        trade_range=_date_pair(raw["trade_range"], "trade_range"),
        tickers=list(raw["tickers"]) if raw.get("tickers") else None,
        lam=float(raw.get("lam", 0.5)),
        smooth_window=int(raw.get("smooth_window", 20)),
        cov_window=int(raw.get("cov_window", 20)),
        ig_steps=int(raw.get("ig_steps", 64)),
        seed=int(raw.get("seed", 0)),
        models=[str(m) for m in raw.get("models", ["lr", "dt", "rf", "svm"])],
        indicators=IndicatorParams(**ind_raw),
        algo=algo,
        train_steps=int(steps),
        agent_hp=agent_hp,
        model_params={k: dict(v) for k, v in raw.get("model_params", {}).items()},
    )
    return cfg.validate()


def load_config(path, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Parse and validate a config file, with optional CLI overrides."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if seed is not None:
        raw["seed"] = seed
    if out_dir is not None:
        raw["out_dir"] = out_dir
    return config_from_dict(raw)
