# core/config.py
import dataclasses
import logging
import os
import tomllib
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional

from core.errors import UsageError

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "DIALOPRE_SEED"
LOSS_MODES = ("MUG", "TMUG", "MMUG")


@dataclass(frozen=True)
class RunConfig:
    """Every key a run understands, with its default"""

    seed: int = 0

    corpus_dir: str = "corpus"
    output_dir: str = "runs/default"
    checkpoint: str = ""

    # corpus
    delta_t_ms: int = 6000
    context_size: int = 5
    window_stride: int = 5
    max_utt_tokens: int = 50
    min_conf: float = 0.9
    vocab_max_size: int = 8000
    heldout_fraction: float = 0.2
    workers: int = 4

    # model
    dim: int = 32
    heads: int = 2
    layers_u: int = 2
    layers_d: int = 2
    layers_dec: int = 2
    dropout: float = 0.1
    tie_embeddings: bool = True

    # objectives
    p_omega: float = 0.15
    p_c: float = 0.2
    lambda_u: float = 1.0
    lambda_d: float = 1.0
    loss_modes: tuple[str, ...] = LOSS_MODES

    # optimisation
    lr: float = 1e-3
    weight_decay: float = 0.01
    steps: int = 2000
    warmup: int = 100
    batch_size: int = 16

    # downstream tasks
    p_lprime: float = 0.4
    distractors: int = 9
    n_instances: int = 1000

    # logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    log_file: str = ""

    def __post_init__(self):
        modes = tuple(str(m).upper() for m in self.loss_modes)
        unknown = set(modes) - set(LOSS_MODES)
        if not modes or unknown:
            raise UsageError(f"loss_modes must be a non-empty subset of {LOSS_MODES}, got {self.loss_modes}")
        object.__setattr__(self, "loss_modes", modes)

        if self.context_size < 2:
            raise UsageError("context_size must be >= 2")
        if self.window_stride < 1:
            raise UsageError("window_stride must be >= 1")
        if self.dim % self.heads != 0:
            raise UsageError(f"dim ({self.dim}) must be divisible by heads ({self.heads})")

    def snapshot(self) -> Dict[str, Any]:
        """Plain dict for manifests, keys sorted by the json writer"""
        data = dataclasses.asdict(self)
        data["loss_modes"] = list(self.loss_modes)
        return data

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    """Coerce a raw TOML/flag value to the declared field type"""
    default = _FIELDS[name].default
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            if isinstance(value, str):
                return tuple(v.strip() for v in value.split(",") if v.strip())
            return tuple(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise UsageError(f"Bad value for {name}: {value!r} ({e})") from e


class Config:
    def __init__(self, config_path: Optional[str] = None):
        self.config_path = Path(config_path) if config_path else None
        self._config: Dict[str, Any] = {}

        self.load()

    def load(self):
        """Load configuration from a flat TOML file"""
        if self.config_path is None:
            return

        if not self.config_path.exists():
            logger.warning(f"Config file not found: {self.config_path}, using defaults")
            return

        with open(self.config_path, "rb") as f:
            try:
                raw = tomllib.load(f)
            except tomllib.TOMLDecodeError as e:
                raise UsageError(f"Config file {self.config_path} is not valid TOML: {e}") from e

        unknown = sorted(set(raw) - set(_FIELDS))
        if unknown:
            raise UsageError(f"Unknown config keys in {self.config_path}: {', '.join(unknown)}")

        self._config = raw
        logger.info(f"Loaded config from {self.config_path}")

    def get(self, key: str, default=None):
        """Get a raw config value"""
        return self._config.get(key, default)

    def resolve(self, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Build the RunConfig: flags > config file > DIALOPRE_SEED > defaults"""
        values: Dict[str, Any] = {}

        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None and env_seed.strip():
            values["seed"] = _coerce("seed", env_seed)

        for key, value in self._config.items():
            values[key] = _coerce(key, value)

        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key not in _FIELDS:
                raise UsageError(f"Unknown config key: {key}")
            values[key] = _coerce(key, value)

        return RunConfig(**values)

    @property
    def raw(self) -> Dict[str, Any]:
        """Get raw config dict"""
        return self._config
