"""Run configuration: built-in defaults, TOML files and command-line overrides."""

import sys
from dataclasses import asdict, dataclass, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import DomainError


@dataclass(frozen=True)
class Config:
    block_size: int = 32
    zeta: float = 50.0
    phi: float = 25.0
    lambda_steep: float = 100.0
    delta_shift: float = 0.05
    iter_max: int = 5
    seed: int = 0
    prior_path: str | None = None
    p_floor: float = 1e-4
    sigma_min: float = 1e-4
    # minimum relative noise gap between the two clusters before a split is trusted
    split_gap: float = 0.5
    smooth_ratio: float = 1.5

    def __post_init__(self):
        if not isinstance(self.block_size, int) or self.block_size < 16 or self.block_size % 2:
            raise DomainError("block_size must be an even integer >= 16")
        for name in ("zeta", "phi", "lambda_steep", "sigma_min", "smooth_ratio"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not 0 < self.delta_shift < 1:
            raise DomainError("delta_shift must lie in (0, 1)")
        if not 0 < self.p_floor < 0.5:
            raise DomainError("p_floor must lie in (0, 0.5)")
        if not isinstance(self.iter_max, int) or self.iter_max < 1:
            raise DomainError("iter_max must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise DomainError("seed must be a non-negative integer")
        if self.split_gap < 0:
            raise DomainError("split_gap must be non-negative")

    def as_dict(self):
        return asdict(self)

    def updated(self, **overrides):
        """Copy with the non-``None`` entries of ``overrides`` applied."""
        return from_mapping({k: v for k, v in overrides.items() if v is not None}, base=self)


_FIELDS = {f.name: f for f in fields(Config)}


def _coerce(name, value):
    kind = _FIELDS[name].type
    if name == "prior_path":
        return None if value is None else str(value)
    if kind in (int, "int"):
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise DomainError(f"{name} must be an integer")
        return int(value)
    if isinstance(value, bool):
        raise DomainError(f"{name} must be a number")
    return float(value)


def from_mapping(mapping, base=None):
    base = base or Config()
    unknown = sorted(set(mapping) - set(_FIELDS))
    if unknown:
        raise DomainError(f"unknown configuration keys: {', '.join(unknown)}")
    try:
        values = {k: _coerce(k, v) for k, v in mapping.items()}
    except (TypeError, ValueError) as exc:
        raise DomainError(f"bad configuration value: {exc}") from exc
    return replace(base, **values)


def load_config(path):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise DomainError(f"cannot read config file {path}: {exc}") from exc
    # accept either a flat table or everything under [detect]
    if set(data) == {"detect"} and isinstance(data["detect"], dict):
        data = data["detect"]
    return from_mapping(data)


def resolve(path=None, **overrides):
    """Flag > file > default."""
    base = load_config(path) if path else Config()
    return base.updated(**overrides)


def to_toml(cfg):
    lines = []
    for key, value in cfg.as_dict().items():
        if value is None:
            continue
        if isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        elif isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
