"""Run configuration files.

Plain text, one ``key = value`` per line, ``#`` starts a comment, and
``[section]`` headers group keys. Sections: ``run``, ``synth``, ``prune``,
``curriculum``, ``trainer``, ``probe``. Unknown sections or keys, values of
the wrong type and out-of-range values are rejected with the line number.
``[run] seed`` and ``[run] out`` are required; everything else has a default.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction

from .curriculum import CurriculumConfig
from .evaluation import DEFAULT_K
from .pruner import MODES, PruneConfig
from .synthgen import SynthConfig
from .toyssl import TrainerHyper


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


@dataclass(frozen=True)
class ProbeSettings:
    k: int = DEFAULT_K
    metric: str = "euclidean"
    n: int = 2000
    train_fraction: float = 0.8
    data: str | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out: str
    data: str | None = None
    threads: int = 1
    synth: SynthConfig = SynthConfig()
    curriculum: CurriculumConfig = CurriculumConfig()
    trainer: TrainerHyper = TrainerHyper()
    probe: ProbeSettings = ProbeSettings()
    text_hash: str = field(default="", compare=False)

    @property
    def prune(self) -> PruneConfig:
        return self.curriculum.prune


def _int(s):
    v = int(s, 10)
    return v


def _u64(s):
    v = int(s, 10)
    if not 0 <= v < 2**64:
        raise ValueError("must fit in an unsigned 64-bit integer")
    return v


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _bool(s):
    low = s.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError("expected true or false")


def _str(s):
    return s


def _ints(s):
    return tuple(int(x, 10) for x in s.replace(",", " ").split())


def _floats(s):
    return tuple(_float(x) for x in s.replace(",", " ").split())


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit_open_closed(v):
    return 0 < v <= 1


def _unit_closed(v):
    return 0 <= v <= 1


def _unit_half_open(v):
    return 0 <= v < 1


# section -> key -> (parser, check, requirement text)
SCHEMA = {
    "run": {
        "seed": (_u64, None, ""),
        "out": (_str, None, ""),
        "data": (_str, None, ""),
        "threads": (_int, _positive, "must be >= 1"),
    },
    "synth": {
        "n": (_int, _positive, "must be >= 1"),
        "d": (_int, _positive, "must be >= 1"),
        "concepts": (_int, lambda v: v >= 2, "must be >= 2"),
        "zipf": (_float, _nonneg, "must be >= 0"),
        "sigma": (_float, _nonneg, "must be >= 0"),
        "gamma": (_float, _positive, "must be > 0"),
    },
    "prune": {
        "n_c": (_int, _positive, "must be >= 1"),
        "ks": (_ints, lambda v: len(v) > 0 and all(k >= 1 for k in v), "must be positive counts"),
        "rho": (_float, _unit_open_closed, "must be in (0, 1]"),
        "eta": (_float, _unit_closed, "must be in [0, 1]"),
        "mode": (_str, lambda v: v in MODES, f"must be one of {', '.join(MODES)}"),
        "sharpness": (_float, _positive, "must be > 0"),
        "normalize": (_bool, None, ""),
        "restarts": (_int, _positive, "must be >= 1"),
        "tol": (_float, _nonneg, "must be >= 0"),
        "max_iters": (_int, _positive, "must be >= 1"),
        "weighted": (_bool, None, ""),
        "batch_rows": (_int, _positive, "must be >= 1"),
    },
    "curriculum": {
        "budget_epochs": (_int, _positive, "must be >= 1"),
        "warmup": (_int, _positive, "must be >= 1"),
        "prune_every": (_int, _positive, "must be >= 1"),
        "eta_sequence": (_floats, lambda v: all(0 <= x <= 1 for x in v), "values must be in [0, 1]"),
        "probe_every": (_int, _nonneg, "must be >= 0"),
        "val_fraction": (_float, _unit_half_open, "must be in [0, 1)"),
        "concurrent": (_bool, None, ""),
    },
    "trainer": {
        "d_emb": (_int, _positive, "must be >= 1"),
        "lr": (_float, _nonneg, "must be >= 0"),
        "temperature": (_float, _positive, "must be > 0"),
        "noise": (_float, _nonneg, "must be >= 0"),
        "dropout": (_float, _unit_half_open, "must be in [0, 1)"),
        "batch_size": (_int, lambda v: v >= 2, "must be >= 2"),
        "weight_decay": (_float, _nonneg, "must be >= 0"),
        "init_scale": (_float, _positive, "must be > 0"),
    },
    "probe": {
        "k": (_int, _positive, "must be >= 1"),
        "metric": (_str, lambda v: v in ("euclidean", "cosine"), "must be euclidean or cosine"),
        "n": (_int, lambda v: v >= 2, "must be >= 2"),
        "train_fraction": (_float, lambda v: 0 < v < 1, "must be in (0, 1)"),
        "data": (_str, None, ""),
    },
}
REQUIRED = (("run", "seed"), ("run", "out"))


def parse_value(section: str, key: str, raw: str, line: int | None = None):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]", line)
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]", line)
    parser, check, requirement = SCHEMA[section][key]
    try:
        value = parser(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}].{key}: cannot parse {raw!r} ({exc})", line) from None
    if check is not None and not check(value):
        raise ConfigError(f"[{section}].{key} = {raw}: {requirement}", line)
    return value


def read_sections(text: str) -> dict[str, dict[str, object]]:
    values: dict[str, dict[str, object]] = {s: {} for s in SCHEMA}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any [section]", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values[section]:
            raise ConfigError(f"duplicate key [{section}].{key}", lineno)
        values[section][key] = parse_value(section, key, value, lineno)
    return values


def _build(section: str, cls, kwargs):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def parse_config(text: str, overrides: dict[tuple[str, str], object] | None = None) -> RunConfig:
    """Parse config text; ``overrides`` maps (section, key) to already-typed values."""
    values = read_sections(text)
    for (section, key), value in (overrides or {}).items():
        if key not in SCHEMA.get(section, {}):
            raise ConfigError(f"unknown override [{section}].{key}")
        values[section][key] = value
    for section, key in REQUIRED:
        if key not in values[section]:
            raise ConfigError(f"missing required key [{section}].{key}")

    run = values["run"]
    seed = run["seed"]
    threads = run.get("threads", 1)
    synth = _build("synth", SynthConfig, {**values["synth"], "seed": seed})
    prune = _build("prune", PruneConfig, {**values["prune"], "seed": seed, "threads": threads})
    curriculum = _build(
        "curriculum", CurriculumConfig, {**values["curriculum"], "prune": prune, "seed": seed}
    )
    trainer = _build("trainer", TrainerHyper, values["trainer"])
    probe = _build("probe", ProbeSettings, values["probe"])
    return RunConfig(
        seed=seed,
        out=run["out"],
        data=run.get("data"),
        threads=threads,
        synth=synth,
        curriculum=curriculum,
        trainer=trainer,
        probe=probe,
        text_hash=config_hash(text, overrides),
    )


def config_hash(text: str, overrides=None) -> str:
    h = hashlib.sha256(text.encode("utf-8"))
    for (section, key), value in sorted((overrides or {}).items()):
        h.update(f"\n[{section}].{key}={value!r}".encode("utf-8"))
    return h.hexdigest()[:16]


def keep_from_discard(discard: float) -> float:
    """1 - discard, computed on the decimal values so 0.3 gives exactly 0.7."""
    if not 0 <= discard < 1:
        raise ValueError(f"discard must be in [0, 1), got {discard}")
    return float(1 - Fraction(repr(float(discard))))


def to_dict(cfg: RunConfig) -> dict:
    """Plain nested dict of every effective setting (for golden comparisons)."""

    def flat(obj):
        return {f.name: getattr(obj, f.name) for f in fields(obj)}

    cur = flat(cfg.curriculum)
    prune = flat(cur.pop("prune"))
    return {
        "run": {"seed": cfg.seed, "out": cfg.out, "data": cfg.data, "threads": cfg.threads},
        "synth": flat(cfg.synth),
        "prune": prune,
        "curriculum": cur,
        "trainer": flat(cfg.trainer),
        "probe": flat(cfg.probe),
    }


def with_prune(cfg: RunConfig, **changes) -> RunConfig:
    prune = replace(cfg.prune, **changes)
    return replace(cfg, curriculum=replace(cfg.curriculum, prune=prune))
