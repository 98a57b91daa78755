"""Run configuration: a flat JSON object of documented keys.

Keys (defaults in parentheses):

``data``             list of CSV paths, one per sequence (required for ``fit``)
``columns``          column indices to keep, or null for all (null)
``r``                lag order (1)
``iterations``       sampler iterations (1000)
``thin``             keep every ``thin``-th iteration in trace and samples (1)
``seed``             RNG seed; set from the mandatory ``--seed`` flag
``out``              output directory ("run")
``alpha``, ``c``, ``gamma``, ``kappa``   initial hyperparameters (1, 1, 1, 10)
``<name>_shape``, ``<name>_rate``        gamma hyperprior of each hyperparameter (1, 1)
``sample_hypers``    hyperparameters resampled by MH (all four)
``adapt_iterations`` iterations during which MH step sizes adapt (0)
``mniw``             "empirical" or "default" prior construction ("empirical")
``s0_multiplier``, ``l_multiplier``, ``n0``   MNIW settings (0.5, 1, null meaning d+2)
``anneal_mode``      "linear" or "off" ("linear")
``anneal_iterations`` iterations over which the Hastings factor is annealed (500)
``window_min``, ``window_max``   birth window length bounds (20, 100)
``split_merge_per_iter``  split-merge proposals per iteration (1)
``birth_death``, ``split_merge``, ``shared_flips``   enable moves (true)
``init_mode``        "unique" or "shared" starting features ("unique")
``init_features``    features per sequence in the initial state (1)
``checkpoint_every`` write a checkpoint every n iterations, 0 for end only (0)
``max_rollbacks``    abort after this many consecutive rolled-back iterations (25)
"""
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

HYPER_NAMES = ("alpha", "c", "gamma", "kappa")


@dataclass
class RunConfig:
    data: list = field(default_factory=list)
    columns: list = None
    r: int = 1
    iterations: int = 1000
    thin: int = 1
    seed: int = None
    out: str = "run"
    alpha: float = 1.0
    c: float = 1.0
    gamma: float = 1.0
    kappa: float = 10.0
    alpha_shape: float = 1.0
    alpha_rate: float = 1.0
    c_shape: float = 1.0
    c_rate: float = 1.0
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0
    kappa_shape: float = 1.0
    kappa_rate: float = 1.0
    sample_hypers: list = field(default_factory=lambda: list(HYPER_NAMES))
    adapt_iterations: int = 0
    mniw: str = "empirical"
    s0_multiplier: float = 0.5
    l_multiplier: float = 1.0
    n0: float = None
    anneal_mode: str = "linear"
    anneal_iterations: int = 500
    window_min: int = 20
    window_max: int = 100
    split_merge_per_iter: int = 1
    birth_death: bool = True
    split_merge: bool = True
    shared_flips: bool = True
    init_mode: str = "unique"
    init_features: int = 1
    checkpoint_every: int = 0
    max_rollbacks: int = 25

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(isinstance(self.data, list), "data must be a list of paths")
        need(self.columns is None or (isinstance(self.columns, list)
                                      and all(isinstance(c, int) and c >= 0 for c in self.columns)),
             "columns must be null or a list of nonnegative integers")
        for name in ("r", "thin", "window_min", "window_max", "init_features", "max_rollbacks"):
            need(isinstance(getattr(self, name), int) and getattr(self, name) >= 1,
                 f"{name} must be a positive integer")
        for name in ("iterations", "adapt_iterations", "anneal_iterations",
                     "split_merge_per_iter", "checkpoint_every"):
            need(isinstance(getattr(self, name), int) and getattr(self, name) >= 0,
                 f"{name} must be a nonnegative integer")
        need(self.window_min <= self.window_max, "window_min must not exceed window_max")
        need(self.seed is None or isinstance(self.seed, int) and self.seed >= 0,
             "seed must be a nonnegative integer")
        for name in HYPER_NAMES:
            need(_num(getattr(self, name)) and (getattr(self, name) > 0 or
                                               name == "kappa" and getattr(self, name) >= 0),
                 f"{name} must be positive")
            for part in ("shape", "rate"):
                v = getattr(self, f"{name}_{part}")
                need(_num(v) and v > 0, f"{name}_{part} must be positive")
        need(set(self.sample_hypers) <= set(HYPER_NAMES), f"sample_hypers must be drawn from {HYPER_NAMES}")
        need(self.mniw in ("empirical", "default"), "mniw must be 'empirical' or 'default'")
        need(_num(self.s0_multiplier) and self.s0_multiplier > 0, "s0_multiplier must be positive")
        need(_num(self.l_multiplier) and self.l_multiplier > 0, "l_multiplier must be positive")
        need(self.n0 is None or _num(self.n0), "n0 must be null or a number")
        need(self.anneal_mode in ("linear", "off"), "anneal_mode must be 'linear' or 'off'")
        need(self.init_mode in ("unique", "shared"), "init_mode must be 'unique' or 'shared'")
        for name in ("birth_death", "split_merge", "shared_flips"):
            need(isinstance(getattr(self, name), bool), f"{name} must be true or false")

    def to_dict(self):
        return asdict(self)

    def digest(self):
        """SHA-256 of the canonical JSON form."""
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as err:
            raise ConfigError(str(err)) from None


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(raw)
