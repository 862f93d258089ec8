"""
Training configuration and synthetic-corpus parameters.

Both are dataclasses that can be read from flat ``key = value`` text files::

    # comment
    learning_rate = 2e-4
    mode = disentangled
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from loguru import logger

from .exceptions import ConfigError

MODES = ("euclidean", "hyperbolic", "disentangled")
SEED_WEIGHTINGS = ("softmax", "uniform")
REFINE_DISTANCES = ("exp", "raw")
REGULARIZER_DISTANCES = ("hyperbolic", "euclidean")

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    epochs: int = 10
    batch_size: int = 50
    k_n: int = 10
    lam: float = 5.0
    d1: float = 8.0
    d2: float = 64.0
    d3: float = 16.0
    tau: float = 0.1
    n_components: int = 4
    beta: float = 0.01
    c: float = 0.0
    sigma: float = 1.0
    ratio_d1: float = 1.0
    ratio_d2: float = 1.0
    ratio_d3: float = 1.0
    mode: str = "disentangled"
    seed: int = 7
    seed_weighting: str = "softmax"
    refine_distance: str = "exp"
    gumbel_noise: bool = False
    freeze_embeddings: bool = True
    regularizer_distance: str = "hyperbolic"
    update_teacher: bool = True
    select_on_validation: bool = False
    max_seeds: int = 0
    ball_eps: float = 1e-5

    def __post_init__(self):
        self.validate()

    def validate(self):
        """
        Check every field; raises ConfigError naming the first bad one.

        ``d1 >= d2`` is allowed but logged as a warning: the seed-dependence
        distance is meant to be the small one.
        """
        _positive(self, "learning_rate", "tau", "beta", "d1", "d2", "d3")
        _at_least(self, 1, "epochs", "batch_size", "k_n", "n_components")
        _at_least(self, 0, "lam", "ratio_d1", "ratio_d2", "ratio_d3", "max_seeds")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.ball_eps < 1:
            raise ConfigError(f"ball_eps must lie in (0, 1), got {self.ball_eps}")
        _choice(self, "mode", MODES)
        _choice(self, "seed_weighting", SEED_WEIGHTINGS)
        _choice(self, "refine_distance", REFINE_DISTANCES)
        _choice(self, "regularizer_distance", REGULARIZER_DISTANCES)
        if self.d1 >= self.d2:
            logger.warning(
                f"d1 ({self.d1}) >= d2 ({self.d2}): seed words are allowed to "
                "drift further apart than their own components"
            )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values):
        return _build(cls, values)


@dataclass
class SyntheticSpec:
    """
    Parameters of :func:`HyperAspect.corpus.generate_synthetic_corpus`.

    ``centroid_scale`` sets the norm of the aspect centroids, about
    ``centroid_scale * sqrt(dim)``. It has to stay well above the norm of the
    component noise, ``sigma * sqrt(dim)`` of :class:`TrainConfig`, or the
    disentangled components of a seed no longer point at its aspect.
    """

    n_aspects: int = 5
    vocab_per_aspect: int = 20
    shared_vocab: int = 30
    segments: int = 2000
    min_len: int = 4
    max_len: int = 10
    noise_rate: float = 0.2
    dim: int = 16
    sigma_emb: float = 0.1
    seeds_per_aspect: int = 5
    valid_fraction: float = 0.1
    test_fraction: float = 0.2
    centroid_scale: float = 4.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.n_aspects < 2:
            raise ConfigError(f"n_aspects must be at least 2, got {self.n_aspects}")
        _at_least(self, 1, "vocab_per_aspect", "segments", "min_len", "dim")
        _at_least(self, 1, "seeds_per_aspect")
        _at_least(self, 0, "shared_vocab", "sigma_emb")
        if self.seeds_per_aspect > self.vocab_per_aspect:
            raise ConfigError(
                f"seeds_per_aspect ({self.seeds_per_aspect}) exceeds "
                f"vocab_per_aspect ({self.vocab_per_aspect})"
            )
        if self.max_len < self.min_len:
            raise ConfigError(
                f"max_len ({self.max_len}) is smaller than min_len ({self.min_len})"
            )
        if not 0 <= self.noise_rate < 1:
            raise ConfigError(f"noise_rate must lie in [0, 1), got {self.noise_rate}")
        if self.noise_rate > 0 and self.shared_vocab == 0:
            raise ConfigError("noise_rate > 0 needs a non-empty shared vocabulary")
        if self.centroid_scale <= 0:
            raise ConfigError("centroid_scale must be positive")
        if self.valid_fraction < 0 or self.test_fraction < 0:
            raise ConfigError("valid_fraction and test_fraction must be nonnegative")
        if self.valid_fraction + self.test_fraction >= 1:
            raise ConfigError("valid_fraction + test_fraction must stay below 1")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values):
        return _build(cls, values)


def _positive(obj, *names):
    for name in names:
        if getattr(obj, name) <= 0:
            raise ConfigError(f"{name} must be positive, got {getattr(obj, name)}")


def _at_least(obj, bound, *names):
    for name in names:
        if getattr(obj, name) < bound:
            raise ConfigError(
                f"{name} must be at least {bound}, got {getattr(obj, name)}"
            )


def _choice(obj, name, choices):
    if getattr(obj, name) not in choices:
        raise ConfigError(
            f"{name} must be one of {', '.join(choices)}, got '{getattr(obj, name)}'"
        )


def _build(cls, values):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown {cls.__name__} key(s): {', '.join(unknown)}")
    return cls(**values)


def parse_value(text, kind):
    """
    Convert the text of one config value to ``kind`` (bool, int, float or str).

    Raises:
        ValueError: If the text does not parse
    """
    if kind is bool:
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"'{text}' is not a boolean")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def parse_key_values(text, cls, source="<string>"):
    """
    Parse flat ``key = value`` text into an instance of the dataclass ``cls``.

    Blank lines and lines starting with ``#`` are skipped. Fields that are
    not mentioned keep their defaults.

    Raises:
        ConfigError: On a malformed line, an unknown key, a duplicate key or a
            value that does not parse; the message names the line
    """
    kinds = {f.name: type(f.default) for f in dataclasses.fields(cls)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        try:
            values[key] = parse_value(value, kinds[key])
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for '{key}': {e}") from e
    return cls(**values)


def load_config(path):
    """Read a :class:`TrainConfig` from a key=value file."""
    return _load(path, TrainConfig)


def load_synthetic_spec(path):
    """Read a :class:`SyntheticSpec` from a key=value file."""
    return _load(path, SyntheticSpec)


def _load(path, cls):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}") from e
    return parse_key_values(text, cls, source=str(path))


def dump_key_values(obj):
    """Render a config dataclass back to key=value text."""
    lines = []
    for name, value in dataclasses.asdict(obj).items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"
