from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional

from sympy import isprime

from .errors import ConfigError
from .settings import load_defaults

REPO_ROOT = Path(__file__).resolve().parent.parent


@dataclass(frozen=True)
class AppConfig:
    config_dir: Path
    output_root: Path
    max_bits: int
    log_level: str

    @property
    def templates_dir(self) -> Path:
        return self.config_dir / "templates"


def load_config() -> AppConfig:
    config_dir_env = os.environ.get("CARTAN_CONFIG_DIR")
    config_dir = Path(config_dir_env).resolve() if config_dir_env else REPO_ROOT / "config"
    output_root = Path(os.environ.get("CARTAN_OUTPUT_ROOT", "runs")).resolve()
    max_bits_raw = os.environ.get("CARTAN_MAX_BITS", "")
    max_bits = int(max_bits_raw) if max_bits_raw.isdigit() else 1 << 16
    log_level = os.environ.get("LOG_LEVEL", "INFO").upper()
    return AppConfig(
        config_dir=config_dir,
        output_root=output_root,
        max_bits=max_bits,
        log_level=log_level,
    )


# fields that change results; checkpoints are keyed on them
_RESULT_FIELDS = (
    "p", "subgroup", "bits", "epsilon", "t0", "ell_budget", "index", "unit_basis_path",
)


@dataclass(frozen=True)
class RunConfig:
    p: int
    subgroup: str = "pm1"
    bits: int = 256
    validation_bits: int = 512
    max_bits: int = 1 << 16
    epsilon: float = 1e-10
    t0: int = 10
    ell_budget: int = 500
    index: int = 1
    workers: int = 1
    companion_check: bool = True
    checkpoint_path: Optional[Path] = None
    report_path: Optional[Path] = None
    unit_basis_path: Optional[Path] = None
    validate_only: bool = False

    def validate(self) -> RunConfig:
        if self.p < 7 or not isprime(self.p):
            raise ConfigError(f"p must be a prime >= 7, got {self.p}")
        if self.bits < 64 or self.validation_bits < 64:
            raise ConfigError("precision must be at least 64 bits")
        if self.max_bits < self.bits:
            raise ConfigError(f"max_bits {self.max_bits} below bits {self.bits}")
        if not 0 < self.epsilon <= 1e-6:
            raise ConfigError(f"epsilon must lie in (0, 1e-6], got {self.epsilon}")
        if self.t0 < 2:
            raise ConfigError("t0 must be >= 2")
        if self.index < 1:
            raise ConfigError("index must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.ell_budget < 5:
            raise ConfigError("ell_budget must be >= 5")
        return self

    def fingerprint(self) -> str:
        from .persist import sha256_8

        payload = {name: _plain(getattr(self, name)) for name in _RESULT_FIELDS}
        return sha256_8(json.dumps(payload, sort_keys=True).encode("utf-8"))

    def echo(self) -> dict[str, Any]:
        return {k: _plain(v) for k, v in asdict(self).items()}


def _plain(v: Any) -> Any:
    return str(v) if isinstance(v, Path) else v


_ENV_KEYS = {
    "bits": "CARTAN_BITS",
    "workers": "CARTAN_WORKERS",
    "max_bits": "CARTAN_MAX_BITS",
}


def resolve_run_config(p: int, overrides: Optional[dict[str, Any]] = None, app: Optional[AppConfig] = None) -> RunConfig:
    """YAML defaults < environment < explicit overrides (CLI flags)."""
    app = app or load_config()
    defaults = load_defaults(app.config_dir)
    known = {f.name for f in fields(RunConfig)}
    values: dict[str, Any] = {k: v for k, v in defaults.run.items() if k in known}
    values["max_bits"] = app.max_bits
    for name, env in _ENV_KEYS.items():
        raw = os.environ.get(env)
        if raw and raw.isdigit():
            values[name] = int(raw)
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in known:
            raise ConfigError(f"unknown run option {k!r}")
        values[k] = v
    values["p"] = int(p)
    if "epsilon" in values:
        values["epsilon"] = float(values["epsilon"])
    for key in ("checkpoint_path", "report_path", "unit_basis_path"):
        if values.get(key) is not None:
            values[key] = Path(values[key])
    if values.get("subgroup") is not None:
        values["subgroup"] = str(values["subgroup"])
    return RunConfig(**values).validate()


def with_overrides(cfg: RunConfig, **changes: Any) -> RunConfig:
    return replace(cfg, **changes).validate()
