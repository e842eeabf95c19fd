"""Run configuration: a flat key-value document with optional sections.

Lines hold `key = value` pairs ('#' starts a comment); a `[section]` header
prefixes the following keys as `section.key`.  Unknown keys are rejected
with their full path, and every numeric parameter is validated against its
documented window so a config that parses is a config that can run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

COMMANDS = ("profile", "modulation", "simulate", "shoot", "verify")

B_WINDOW = (0.0, 0.05)


@dataclass
class RunConfig:
    command: str = "modulation"
    seed: int = 0
    out: str = "runs"
    # shared numerics
    b0: float = 0.01
    lambda0: float = 1.0
    M: float = 50.0
    grid_y_min: float = 1e-4
    grid_y_max: float = 4000.0
    grid_n: int = 4096
    # modulation
    s_end: float = 1e6
    fit_s_end: float = 1e30
    # profile sweep
    b_sweep: tuple = (1e-2, 3e-3, 1e-3, 3e-4)
    # flow
    a_plus: float = 0.0
    bracket_lo: float = float("nan")
    bracket_hi: float = float("nan")
    budget: int = 40
    kappa_exit_factor: float = 2.0
    nodes_per_decade: int = 120
    max_steps: int = 60000
    rtol_step: float = 1e-5
    # verify
    samples: int = 200
    family: str = "gaussian-bumps"

    def validate(self):
        _require(self.command in COMMANDS,
                 f"command must be one of {COMMANDS}, got {self.command!r}")
        _window("b0", self.b0, B_WINDOW, open_left=True)
        for b in self.b_sweep:
            _window("b_sweep", b, B_WINDOW, open_left=True)
        _require(self.lambda0 > 0, "lambda0 must be positive")
        _require(10.0 <= self.M <= 2000.0, f"M must lie in [10, 2000], got {self.M}")
        _require(0 < self.grid_y_min < self.grid_y_max,
                 "grid_y_min must be positive and below grid_y_max")
        _require(64 <= self.grid_n <= 2_000_000, "grid_n must lie in [64, 2e6]")
        _require(self.s_end > 0 and self.fit_s_end > 0, "s_end must be positive")
        _require(0 <= self.budget <= 1000, "budget must lie in [0, 1000]")
        _require(self.kappa_exit_factor >= 1.0, "kappa_exit_factor must be >= 1")
        _require(30 <= self.nodes_per_decade <= 2000,
                 "nodes_per_decade must lie in [30, 2000]")
        _require(1 <= self.max_steps <= 10_000_000, "max_steps out of range")
        _require(1e-12 <= self.rtol_step <= 1e-2, "rtol_step out of range")
        _require(self.samples >= 50, "samples must be >= 50")
        _require(self.seed >= 0, "seed must be nonnegative")
        return self

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def _require(cond: bool, message: str):
    if not cond:
        raise ValueError(message)


def _window(name, value, window, open_left=False):
    lo, hi = window
    ok = (lo < value if open_left else lo <= value) and value <= hi
    if not ok:
        bracket = "(" if open_left else "["
        raise ValueError(
            f"{name}={value!r} outside the admissible window {bracket}{lo}, {hi}]")


_CASTS = {
    int: lambda s: int(s, 0),
    float: float,
    str: str,
}


def parse_config(source: str) -> RunConfig:
    """Parse and validate a config document; defaults fill missing keys."""
    known = {f.name: f for f in fields(RunConfig)}
    values = {}
    section = ""
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        # allow several pairs on one line for terse configs
        tokens = line.split()
        pairs = tokens if len(tokens) > 1 and all("=" in t for t in tokens) else [line]
        for pair in pairs:
            key, _, val = pair.partition("=")
            key = key.strip()
            val = val.strip()
            path = f"{section}.{key}".strip(".").replace(".", "_")
            if path not in known:
                raise ValueError(f"unknown config key {('%s.%s' % (section, key)).strip('.')!r}")
            f = known[path]
            if f.name == "b_sweep":
                values[path] = tuple(float(x) for x in val.split(",") if x)
            else:
                try:
                    values[path] = _CASTS[type(getattr(RunConfig, f.name))](val)
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"key {path!r}: cannot parse {val!r}") from exc
    return RunConfig(**values).validate()
