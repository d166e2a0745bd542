"""Experiment configuration: flat ``key = value`` text with dotted sections, or JSON.

Example::

    # Fig.-1 style sweep
    d = 200
    n = 600
    p_grid = 100, 200, 400, 800
    activation = tanh
    loss = logistic
    lambda = 0.1
    solver.max_iter = 200
"""

from dataclasses import dataclass, fields, replace
import json

from ._errors import ConfigError
from .activations import ACTIVATION_KINDS
from .erm import SolverOptions
from .losses import LOSS_KINDS
from .models import OUTPUT_FUNCTIONS

__all__ = ["ExperimentConfig", "load_config", "parse_config_text", "config_from_mapping"]


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 200
    n: int = 600
    p_grid: tuple = (100, 200, 400, 800)
    activation: str = "tanh"
    loss: str = "logistic"
    lam: float = 0.1
    teacher: str = "sign"
    output: str = "sign"
    master_seed: int = 0
    n_trials: int = 20
    fresh_samples: int = 100_000
    tilt_step: float = None
    quad_order: int = 101
    path_cap: int = 200
    path_stride: int = 1
    solver_tol: float = None
    solver_max_iter: int = 200
    line_search_beta: float = 0.5
    line_search_c: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "p_grid", tuple(int(p) for p in self.p_grid))
        self.validate()

    def validate(self):
        for name in ("d", "n", "n_trials", "quad_order", "path_cap", "path_stride", "solver_max_iter"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(_KEY_OF[name], "must be positive")
        if not self.p_grid:
            raise ConfigError("p_grid", "must not be empty")
        if any(p <= 0 for p in self.p_grid):
            raise ConfigError("p_grid", "entries must be positive")
        if list(self.p_grid) != sorted(set(self.p_grid)):
            raise ConfigError("p_grid", "must be sorted ascending without repeats")
        if not self.lam > 0:
            raise ConfigError("lambda", "must be positive")
        if self.activation not in ACTIVATION_KINDS:
            raise ConfigError("activation", f"expected one of {ACTIVATION_KINDS}")
        if self.loss not in LOSS_KINDS:
            raise ConfigError("loss", f"expected one of {LOSS_KINDS}")
        for name in ("teacher", "output"):
            if getattr(self, name) not in OUTPUT_FUNCTIONS:
                raise ConfigError(name, f"expected one of {tuple(OUTPUT_FUNCTIONS)}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", "must be a 64-bit unsigned integer")
        if self.fresh_samples < 1000:
            raise ConfigError("mc.fresh_samples", "must be at least 1000")
        if self.tilt_step is not None and not self.tilt_step > 0:
            raise ConfigError("tilt.step", "must be positive")
        if self.quad_order % 2 == 0 or self.quad_order < 3:
            raise ConfigError("moments.order", "must be odd and >= 3")
        if self.solver_tol is not None and not self.solver_tol > 0:
            raise ConfigError("solver.tol", "must be positive")
        if not 0 < self.line_search_beta < 1:
            raise ConfigError("solver.line_search_beta", "must lie in (0, 1)")
        if not 0 < self.line_search_c < 1:
            raise ConfigError("solver.line_search_c", "must lie in (0, 1)")

    @property
    def solver_options(self):
        return SolverOptions(
            tol=self.solver_tol,
            max_iter=self.solver_max_iter,
            line_search_beta=self.line_search_beta,
            line_search_c=self.line_search_c,
        )

    def with_(self, **changes):
        return replace(self, **changes)

    def to_mapping(self):
        """Flat dict keyed by the dotted config names (JSON-compatible)."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[_KEY_OF[f.name]] = list(v) if isinstance(v, tuple) else v
        return out

    def to_text(self):
        lines = []
        for key, v in self.to_mapping().items():
            if v is None:
                continue
            if isinstance(v, list):
                v = ", ".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"


_KEY_OF = {
    "lam": "lambda",
    "fresh_samples": "mc.fresh_samples",
    "tilt_step": "tilt.step",
    "quad_order": "moments.order",
    "path_cap": "path.cap",
    "path_stride": "path.stride",
    "solver_tol": "solver.tol",
    "solver_max_iter": "solver.max_iter",
    "line_search_beta": "solver.line_search_beta",
    "line_search_c": "solver.line_search_c",
}
_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}
for _name in _FIELD_TYPES:
    _KEY_OF.setdefault(_name, _name)
_FIELD_OF = {key: name for name, key in _KEY_OF.items()}

_INT_FIELDS = {"d", "n", "master_seed", "n_trials", "fresh_samples", "quad_order", "path_cap",
               "path_stride", "solver_max_iter"}
_FLOAT_FIELDS = {"lam", "tilt_step", "solver_tol", "line_search_beta", "line_search_c"}


def _coerce(name, raw):
    key = _KEY_OF[name]
    try:
        if name == "p_grid":
            if isinstance(raw, str):
                raw = [tok for tok in raw.replace("[", "").replace("]", "").split(",") if tok.strip()]
            return tuple(int(str(x).strip()) for x in raw)
        if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none", "null")):
            if name in ("tilt_step", "solver_tol"):
                return None
            raise ValueError("missing value")
        if name in _INT_FIELDS:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError("not an integer")
            return int(str(raw).strip()) if isinstance(raw, str) else int(raw)
        if name in _FLOAT_FIELDS:
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from None


def _flatten(mapping, prefix=""):
    flat = {}
    for k, v in mapping.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def config_from_mapping(mapping):
    """Build a config from a flat dotted or nested mapping; unknown keys are errors."""
    flat = _flatten(mapping)
    kwargs = {}
    for key, raw in flat.items():
        name = _FIELD_OF.get(key)
        if name is None:
            raise ConfigError(key, "unknown configuration key")
        kwargs[name] = _coerce(name, raw)
    return ExperimentConfig(**kwargs)


def parse_config_text(text):
    """Parse ``key = value`` text; ``#`` starts a comment. JSON text is also accepted."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
        # a run manifest embeds its config under "config"
        if "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]
        return config_from_mapping(doc)
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in mapping:
            raise ConfigError(key, "duplicate key")
        mapping[key] = value
    return config_from_mapping(mapping)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())
