"""Run configuration: a flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored.  Every key is optional; see
:data:`DEFAULTS` (``monitored-fermions simulate --print-config`` prints them).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .lattice import LatticeSpec

INIT_KINDS = ("ground", "coordinate", "eigen")
OBSERVABLES = ("correlator", "covariance", "entropy")

_DOC = {
    "d": "spatial dimension",
    "L": "linear lattice size (sites per axis)",
    "J": "hopping energy; sets the unit of gamma and time",
    "gamma": "measurement rate per site",
    "filling": "particle filling rho; N_p = round(rho * L^d)",
    "T": "total evolution time, or 'auto' for the steady-state default",
    "burn_in_measurements": "auto T: measurements per site before sampling",
    "ballistic_traversals": "auto T: system traversals at velocity v0",
    "init": "initial state: ground | coordinate | eigen (random bitstrings)",
    "n_trajectories": "number of trajectories",
    "base_seed": "64-bit seed from which all trajectory streams derive",
    "n_workers": "worker processes",
    "observables": "comma-separated subset of correlator,covariance,entropy",
    "output": "output directory",
}


@dataclass(frozen=True)
class RunConfig:
    d: int = 2
    L: int = 16
    J: float = 1.0
    gamma: float = 1.0
    filling: float = 0.5
    T: float | None = None
    burn_in_measurements: float = 20.0
    ballistic_traversals: float = 4.0
    init: str = "ground"
    n_trajectories: int = 100
    base_seed: int = 0
    n_workers: int = 1
    observables: tuple[str, ...] = field(default=OBSERVABLES)
    output: str = "run"

    def __post_init__(self):
        LatticeSpec(self.d, self.L, self.J)  # validates geometry
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 <= self.filling <= 1.0:
            raise ValueError(f"filling must lie in [0, 1], got {self.filling}")
        if self.T is not None and not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.init not in INIT_KINDS:
            raise ValueError(f"init must be one of {INIT_KINDS}, got {self.init!r}")
        if self.n_trajectories < 1 or self.n_workers < 1:
            raise ValueError("n_trajectories and n_workers must be >= 1")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must fit in 64 unsigned bits")
        bad = set(self.observables) - set(OBSERVABLES)
        if bad:
            raise ValueError(f"unknown observables {sorted(bad)}")
        if "covariance" in self.observables and self.L % 4:
            raise ValueError("covariance geometry needs L divisible by 4")

    @property
    def lattice(self) -> LatticeSpec:
        return LatticeSpec(self.d, self.L, self.J)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def physics_dict(self) -> dict:
        """Fields that determine trajectory outcomes and per-trajectory samples."""
        skip = {"n_trajectories", "n_workers", "output"}
        out = {k: v for k, v in dataclasses.asdict(self).items() if k not in skip}
        out["observables"] = sorted(out["observables"])
        return out

    @property
    def digest(self) -> str:
        blob = json.dumps(self.physics_dict(), sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "T" and value is None:
                value = "auto"
            elif isinstance(value, tuple):
                value = ",".join(value)
            lines.append(f"# {_DOC[f.name]}\n{f.name} = {value}")
        return "\n".join(lines) + "\n"


DEFAULTS = RunConfig()


def parse_config(text: str, **overrides) -> RunConfig:
    """Parse ``key = value`` text; keyword ``overrides`` win over file values."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _DOC:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value
    values = {k: _coerce(k, v) for k, v in raw.items()}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def load_config(path, **overrides) -> RunConfig:
    return parse_config(Path(path).read_text(), **overrides)


def _coerce(key: str, value: str):
    if key in ("d", "L", "n_trajectories", "n_workers", "base_seed"):
        return int(value, 0)
    if key == "T":
        return None if value.lower() == "auto" else float(value)
    if key == "observables":
        return tuple(s.strip() for s in value.split(",") if s.strip())
    if key in ("init", "output"):
        return value
    return float(value)
