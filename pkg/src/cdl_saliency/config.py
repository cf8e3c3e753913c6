"""Run configuration and its flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigError

SIGN_POLICIES = {
    # (salient sign, non-salient sign) for the contrast term.
    "intent": (-1, 1),
    "literal": (1, 1),
}
SINGLE_DICT = ("off", "salient", "nonsalient")
MEASURES = ("both", "coefficient", "reconstruction")
FUSIONS = ("global_gradient", "equal_weight")


@dataclass
class RunConfig:
    sample_patch: int = 80
    train_patch: int = 16
    patches_per_class: int = 480
    holdout: float = 0.1
    pos_cover: float = 0.8
    neg_cover: float = 0.2
    k: int = 1024
    lambda1: float = 0.075
    lambda2: float = 0.05
    sigma: float = 0.02
    # None means ten passes over the training patches.
    iterations: int | None = None
    log_every: int = 200
    eta_a: float = 1.0
    eta_r: float = 1.0
    phi: float = 0.001
    stride: int = 4
    bins: int = 256
    sign_policy: str = "intent"
    seed: int = 0
    tol: float = 1e-6
    max_iter: int = 1000
    no_contrast_weight: bool = False
    single_dict: str = "off"
    measure: str = "both"
    fusion: str = "global_gradient"

    def __post_init__(self):
        self.validate()

    @classmethod
    def low_regularization(cls, **overrides):
        """Alternative regularization preset: lambda1 = lambda2 = 0.02."""
        return cls(**{"lambda1": 0.02, "lambda2": 0.02, **overrides})

    def validate(self):
        for name in ("sample_patch", "train_patch", "patches_per_class", "k", "log_every",
                     "stride", "max_iter"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.bins < 2:
            raise ConfigError("bins must be at least 2")
        if self.train_patch > self.sample_patch:
            raise ConfigError("train_patch cannot exceed sample_patch")
        if self.iterations is not None and self.iterations <= 0:
            raise ConfigError("iterations must be positive (or auto)")
        for name in ("lambda1", "lambda2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("sigma", "eta_a", "eta_r", "phi", "tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.neg_cover < self.pos_cover <= 1:
            raise ConfigError("need 0 <= neg_cover < pos_cover <= 1")
        if not 0 <= self.holdout < 1:
            raise ConfigError("holdout must be in [0, 1)")
        _choice("sign_policy", self.sign_policy, SIGN_POLICIES)
        _choice("single_dict", self.single_dict, SINGLE_DICT)
        _choice("measure", self.measure, MEASURES)
        _choice("fusion", self.fusion, FUSIONS)

    @property
    def signs(self) -> tuple[int, int]:
        return SIGN_POLICIES[self.sign_policy]

    @property
    def effective_lambda2(self) -> float:
        return 0.0 if self.no_contrast_weight else self.lambda2

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _choice(name, value, allowed):
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {sorted(allowed)}, got {value!r}")


def _field_types():
    return {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name, text):
    kind = _field_types()[name]
    try:
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
        if kind == "int":
            return int(text)
        if kind == "int | None":
            return None if text.lower() == "auto" else int(text)
        if kind == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def _render_value(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_overrides(pairs: dict[str, str]) -> dict:
    known = _field_types()
    unknown = sorted(set(pairs) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return {k: _parse_value(k, v) for k, v in pairs.items()}


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    values = parse_overrides(raw)
    return dataclasses.replace(base or RunConfig(), **values)


def render_config(config: RunConfig) -> str:
    return "".join(f"{f.name} = {_render_value(getattr(config, f.name))}\n"
                   for f in fields(config))


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
