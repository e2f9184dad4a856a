"""Experiment configuration: a plain ``key = value`` text format."""

from __future__ import annotations

from dataclasses import dataclass, fields

from ..core import InvalidInputError, as_tau
from ..simgen import ERROR_FAMILIES, SimDesign

METHODS = ("non_transfer", "all_transfer", "detected", "oracle_transfer")


class ConfigError(InvalidInputError):
    """Malformed, unknown or missing configuration entries."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Simulation grid and replication protocol.

    ``h``, ``num_transferable`` and ``taus`` are lists; every combination is
    run for every replication. ``record_runtime`` fills the ``runtime_ms``
    column, which makes the CSV output timing dependent.
    """

    output_dir: str
    p: int = 1000
    n0: int = 100
    nk: int = 150
    K: int = 20
    s0: int = 15
    h: tuple = (6.0,)
    num_transferable: tuple = (0, 5, 10, 15, 20)
    taus: tuple = (0.5,)
    error_family: str = "normal"
    heterogeneous: bool = True
    seed: int = 0
    methods: tuple = METHODS
    replications: int = 500
    threads: int = 1
    epsilon0: float = 0.01
    folds: int = 5
    record_runtime: bool = False

    def __post_init__(self):
        for name in ("h", "num_transferable", "taus", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods are listed twice")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not (self.h and self.num_transferable and self.taus):
            raise ConfigError("h, num_transferable and taus need at least one value")
        if self.epsilon0 < 0:
            raise ConfigError("epsilon0 must be non-negative")
        for tau in self.taus:
            as_tau(tau)
        for t in self.num_transferable:
            self.design(self.h[0], t, self.taus[0], 0)

    def design(self, h, num_transferable, tau, seed) -> SimDesign:
        return SimDesign(p=self.p, n0=self.n0, nk=self.nk, K=self.K, h=float(h), s0=self.s0,
                         num_transferable=int(num_transferable), tau=float(tau),
                         error_family=self.error_family, heterogeneous=self.heterogeneous,
                         seed=int(seed))


REQUIRED = ("output_dir",)


def _to_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _to_int(s: str) -> int:
    return int(s.strip())


def _list(conv):
    def parse(s: str) -> tuple:
        items = [x.strip() for x in s.split(",")]
        if not items or any(not x for x in items):
            raise ValueError(f"bad list {s!r}")
        return tuple(conv(x) for x in items)
    return parse


def _family(s: str) -> str:
    s = s.strip()
    if s not in ERROR_FAMILIES:
        raise ValueError(f"error_family must be one of {ERROR_FAMILIES}")
    return s


PARSERS = {
    "output_dir": str.strip, "p": _to_int, "n0": _to_int, "nk": _to_int, "K": _to_int,
    "s0": _to_int, "h": _list(float), "num_transferable": _list(_to_int), "taus": _list(float),
    "error_family": _family, "heterogeneous": _to_bool, "seed": _to_int,
    "methods": _list(str), "replications": _to_int, "threads": _to_int, "epsilon0": float,
    "folds": _to_int, "record_runtime": _to_bool,
}
assert set(PARSERS) == {f.name for f in fields(ExperimentConfig)}


def read_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a dict of raw strings; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: key {key!r} given twice")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        out[key] = (value, lineno)
    return out


def parse_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file (optional) and apply ``overrides`` (raw strings) on top."""
    raw = {}
    source = "<config>"
    if path is not None:
        source = str(path)
        with open(path, encoding="utf-8") as fh:
            raw = read_config_text(fh.read(), source)
    values = {}
    for key, (value, lineno) in raw.items():
        try:
            values[key] = PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in PARSERS:
            raise ConfigError(f"unknown key {key!r}")
        try:
            values[key] = PARSERS[key](str(value))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    try:
        return ExperimentConfig(**values)
    except ConfigError:
        raise
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None
