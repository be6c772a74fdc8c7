from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

from loguru import logger

from fidbound.errors import InvalidConfig


def parse_int_list(value: str) -> list[int]:
    return [int(part) for part in value.replace(" ", "").split(",") if part]


def parse_float_list(value: str) -> list[float]:
    # Fraction accepts "1/2" as well as decimals
    return [float(Fraction(part)) for part in value.replace(" ", "").split(",") if part]


def parse_str_list(value: str) -> list[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


CONFIG_KEYS = {
    "scenario": int,
    "n_list": parse_int_list,
    "replications": int,
    "n_mcmc": int,
    "level": float,
    "seed": int,
    "method": str,
    "prior": parse_float_list,
    "estimand": parse_str_list,
    "assumptions": str,
    "workers": int,
    "max_attempts": int,
    "n_proposals": int,
    "direction": str,
}


@dataclass
class RunConfig:
    """Parameters of one CLI run, after merging a config file with flags."""

    subcommand: str
    input: Path | None = None
    output: Path | None = None
    estimand: list[str] = field(default_factory=lambda: ["ate"])
    assumptions: str = "core"
    n_mcmc: int = 1000
    seed: int = 0
    level: float = 0.95
    method: str = "fiducial"
    prior: list[float] | None = None
    scenario: int = 1
    n_list: list[int] = field(default_factory=lambda: [25, 50, 100])
    replications: int = 200
    max_attempts: int | None = None
    n_proposals: int = 1000
    direction: str = "min"
    # 0 means one worker per core
    workers: int = 0

    def __post_init__(self):
        if not 0.0 < self.level <= 1.0:
            raise InvalidConfig(f"level must lie in (0, 1], got {self.level}.")
        if self.n_mcmc < 1:
            raise InvalidConfig(f"n_mcmc must be at least 1, got {self.n_mcmc}.")
        if self.replications < 1:
            raise InvalidConfig(f"replications must be at least 1, got {self.replications}.")
        if self.n_proposals < 1:
            raise InvalidConfig(f"n_proposals must be at least 1, got {self.n_proposals}.")
        if self.max_attempts is not None and self.max_attempts < self.n_mcmc:
            raise InvalidConfig(
                f"max_attempts ({self.max_attempts}) must be at least n_mcmc ({self.n_mcmc})."
            )
        if any(n < 1 for n in self.n_list):
            raise InvalidConfig(f"Sample sizes must be positive: {self.n_list}.")
        if self.prior is not None and (
            len(self.prior) != 8 or any(a < 0 for a in self.prior)
        ):
            raise InvalidConfig(f"prior needs 8 nonnegative components, got {self.prior}.")
        if self.workers < 0:
            raise InvalidConfig(f"workers must be nonnegative, got {self.workers}.")
        if not self.estimand:
            raise InvalidConfig("At least one estimand is required.")
        if self.direction not in ("min", "max"):
            raise InvalidConfig(f"direction must be min or max, got '{self.direction}'.")

    @property
    def resolved_workers(self) -> int:
        return self.workers or os.cpu_count() or 1

    @staticmethod
    def from_sources(
        subcommand: str, file_values: dict[str, object], flags: dict[str, object]
    ) -> RunConfig:
        """Flags given explicitly win over file values, which win over defaults."""
        known = {f.name for f in fields(RunConfig)}
        values = {k: v for k, v in file_values.items() if k in known}
        values.update({k: v for k, v in flags.items() if k in known and v is not None})
        return RunConfig(subcommand=subcommand, **values)


def load_config(path: Path) -> dict[str, object]:
    """
    Parse a `key = value` config file.

    A config file looks like:
    # coverage run for the lower bound table
    scenario = 1
    n_list = 25, 50, 100
    replications = 200
    prior = 1/2, 1/2, 0, 0, 1, 1, 1, 1

    Blank lines and lines starting with `#` are skipped.
    Keys may not repeat.
    """
    values: dict[str, object] = {}
    with path.open("r") as f:
        for line_number, line in enumerate(f.readlines(), start=1):
            line = line.strip()
            # skip empty lines and comments
            if not line or line.startswith("#"):
                continue

            if "=" not in line:
                raise InvalidConfig(f"{path}:{line_number}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in CONFIG_KEYS:
                raise InvalidConfig(f"{path}:{line_number}: unknown key '{key}'")
            if key in values:
                raise InvalidConfig(f"{path}:{line_number}: key '{key}' appears twice")
            try:
                values[key] = CONFIG_KEYS[key](value)
            except (ValueError, ZeroDivisionError):
                raise InvalidConfig(
                    f"{path}:{line_number}: cannot parse value {value!r} for '{key}'"
                ) from None

    logger.debug(f"Loaded config {path}: {values}")
    return values
