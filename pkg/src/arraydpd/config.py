"""Key=value run configuration.

One ``key = value`` pair per line; ``#`` starts a comment.  ``M`` takes a
single integer or a comma separated, strictly increasing list (a sweep).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigurationError

DEFAULT_SWEEP = (4, 8, 16, 32, 60)

_CHOICES = {
    "dpd_mode": ("off", "full", "reduced"),
    "pa_estimates": ("true", "ls"),
}


@dataclass(frozen=True)
class ScenarioConfig:
    M: int | tuple = 16
    Q: int = 9
    P: int = 9
    U: int = 6
    rolloff: float = 0.22
    L: int = 32
    rrc_span: int = 80
    symbol_rate_hz: float = 20e6
    modulation_order: int = 16
    # RMS amplitude of the unprecoded stream at each PA input
    drive: float = 0.355
    pa_clip: float = 0.865
    pa_spread: float = 0.001
    pa_gain_spread: float = 0.1
    ampm_deg: float = 5.0
    pa_estimates: str = "true"
    chan_mag_jitter: float = 0.0
    chan_phase_jitter: float = 0.0
    dpd_mode: str = "reduced"
    iterations: int = 20
    block_size: int = 100_000
    step_size: float = 1.0
    eval_samples: int = 60_000
    welch_segment: int = 4096
    welch_overlap: float = 0.5
    n_intended_draws: int = 50
    n_victims: int = 50
    n_initial_draws: int = 20
    n_redraws: int = 50
    never_worse_tol_db: float = 0.5
    seed: int = 0
    explicit: frozenset = field(default=frozenset(), compare=False, repr=False)

    def __post_init__(self):
        m = self.M
        if isinstance(m, (list, tuple)):
            m = tuple(int(v) for v in m)
            if not m:
                raise ConfigurationError("M: empty sweep list")
            if any(b <= a for a, b in zip(m, m[1:])):
                raise ConfigurationError(f"M: sweep list must be strictly increasing, got {list(m)}")
            if len(m) == 1:
                m = m[0]
            object.__setattr__(self, "M", m)
        for v in self.sweep:
            if v < 1:
                raise ConfigurationError(f"M: array size must be >= 1, got {v}")
        for key in ("Q", "P"):
            v = getattr(self, key)
            if v < 1 or v % 2 == 0:
                raise ConfigurationError(f"{key}: must be an odd integer >= 1, got {v}")
        if self.Q < 3:
            raise ConfigurationError("Q: DPD order must be >= 3")
        for key in ("U", "L", "rrc_span", "iterations", "block_size", "eval_samples", "n_intended_draws",
                    "n_victims", "n_initial_draws", "n_redraws", "welch_segment"):
            if getattr(self, key) < 1:
                raise ConfigurationError(f"{key}: must be >= 1")
        for key in ("drive", "pa_clip", "step_size", "symbol_rate_hz"):
            if not getattr(self, key) > 0:
                raise ConfigurationError(f"{key}: must be positive")
        if not 0 <= self.rolloff <= 1:
            raise ConfigurationError("rolloff: must lie in [0, 1]")
        if not 0 <= self.welch_overlap < 1:
            raise ConfigurationError("welch_overlap: must lie in [0, 1)")
        for key, allowed in _CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ConfigurationError(f"{key}: expected one of {allowed}, got {getattr(self, key)!r}")

    @property
    def sweep(self) -> tuple:
        return self.M if isinstance(self.M, tuple) else (self.M,)

    @property
    def sample_rate_hz(self) -> float:
        return self.symbol_rate_hz * self.U

    @property
    def adjacent_offset_hz(self) -> float:
        """Channel spacing of the adjacent channel: one occupied RRC width."""
        return (1 + self.rolloff) * self.symbol_rate_hz

    def with_overrides(self, pairs: dict) -> "ScenarioConfig":
        parsed = {k: _parse_value(k, v) for k, v in pairs.items()}
        return replace(self, explicit=self.explicit | frozenset(parsed), **parsed)

    def to_lines(self) -> list[str]:
        out = []
        for f in _fields():
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{f.name} = {v}")
        return out


def _fields():
    return [f for f in fields(ScenarioConfig) if f.name != "explicit"]


_TYPES = {f.name: f.type for f in _fields()}


def _parse_value(key: str, text):
    if key not in _TYPES:
        raise ConfigurationError(f"unknown config key {key!r}")
    if not isinstance(text, str):
        return text
    text = text.strip()
    kind = _TYPES[key]
    try:
        if key == "M":
            vals = [int(v) for v in text.split(",") if v.strip()]
            return vals[0] if len(vals) == 1 else tuple(vals)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {text!r} as {kind}") from None


def parse_config_text(text: str, source: str = "<config>") -> ScenarioConfig:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: malformed line {raw.strip()!r} (expected key = value)")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key or not value:
            raise ConfigurationError(f"{source}:{lineno}: malformed line {raw.strip()!r} (expected key = value)")
        try:
            pairs[key] = _parse_value(key, value)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{source}:{lineno}: {exc}") from None
    return ScenarioConfig().with_overrides(pairs)


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    return parse_config_text(p.read_text(), str(p))
