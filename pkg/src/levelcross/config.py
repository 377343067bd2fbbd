"""Scenario files: JSON documents describing what to simulate and solve.

Top level::

    {"seed": 1, "workers": 1, "scenarios": [ ... ]}

Every scenario has ``name`` and ``kind`` plus kind-specific fields; see the
README for the full schema. Numbers may be JSON numbers or ``"p/q"`` strings,
which are read as exact fractions.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import steps as _steps
from .errors import ConfigError
from .estimators import MCConfig
from .lattice import OracleConfig
from .queue import QueueModel

KINDS = ("walk_levels", "alpha_ladder", "assumption1", "queue_sweep", "exact")
FORMULAS = ("el_thm2", "el_cor1", "el_thm4", "el_pure", "el_queue")

_REQUIRED = {
    "walk_levels": ("distribution", "levels", "mc"),
    "alpha_ladder": ("distribution", "alpha0", "rungs", "mc"),
    "assumption1": ("distribution", "alpha", "mc"),
    "queue_sweep": ("queue", "N", "mc"),
    "exact": ("distribution", "levels"),
}


@dataclass(frozen=True)
class FormulaSpec:
    name: str
    inputs: Any  # "oracle" or a dict of literal inputs


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    distribution: Optional[_steps.StepDistribution] = None
    queue: Optional[QueueModel] = None
    levels: Sequence[float] = ()
    mc: Optional[MCConfig] = None
    oracle: Optional[OracleConfig] = None
    use_oracle: bool = True
    formula: Optional[FormulaSpec] = None
    mc_floor: float = 0.0
    options: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    scenarios: List[Scenario]
    path: str = "<memory>"


def number(x, where="value"):
    """JSON number or ``"p/q"`` string -> int, float or Fraction."""
    if isinstance(x, bool):
        raise ValueError(f"{where}: expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        return x
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError):
            pass
    raise ValueError(f"{where}: expected a number or 'p/q' string, got {x!r}")


def _atoms(raw, where):
    if not isinstance(raw, list) or not raw:
        raise ValueError(f"{where}: atoms must be a non-empty list of [value, prob]")
    out = []
    for k, pair in enumerate(raw):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ValueError(f"{where}[{k}]: expected [value, prob]")
        out.append((number(pair[0], where), number(pair[1], where)))
    return tuple(out)


def parse_distribution(raw: dict, where="distribution") -> _steps.StepDistribution:
    if not isinstance(raw, dict) or "type" not in raw:
        raise ValueError(f"{where}: expected an object with a 'type'")
    t = raw["type"]
    if t == "finite":
        dist = _steps.FiniteDiscrete(_atoms(raw.get("atoms"), where + ".atoms"))
    elif t == "geometric_neg":
        dist = _steps.PointPosGeometricNeg(number(raw.get("pos_value", 1), where), number(raw["geo_mean"], where))
    elif t == "exponential_neg":
        dist = _steps.PointPosExponentialNeg(number(raw.get("pos_value", 1), where), number(raw["exp_mean"], where))
    elif t == "scaled":
        dist = _steps.Scaled(parse_distribution(raw["base"], where + ".base"), number(raw["factor"], where))
    else:
        raise ValueError(f"{where}: unknown distribution type {t!r}")
    return _steps.validate(dist)


def parse_law(raw: dict, where="law") -> _steps.PositiveLaw:
    if not isinstance(raw, dict) or "type" not in raw:
        raise ValueError(f"{where}: expected an object with a 'type'")
    t = raw["type"]
    if t == "finite":
        return _steps.FiniteLaw(_atoms(raw.get("atoms"), where + ".atoms"))
    if t == "point":
        return _steps.point(number(raw["value"], where))
    if t == "exponential":
        return _steps.ExponentialLaw(number(raw["mean"], where))
    if t == "uniform":
        return _steps.UniformLaw(number(raw["low"], where), number(raw["high"], where))
    if t == "geometric":
        return _steps.GeometricLaw(number(raw["mean"], where))
    raise ValueError(f"{where}: unknown law type {t!r}")


def parse_queue(raw: dict, where="queue", capacity=None) -> QueueModel:
    if not isinstance(raw, dict):
        raise ValueError(f"{where}: expected an object")
    return QueueModel(
        lam=number(raw["lambda"], where + ".lambda"),
        mu=number(raw["mu"], where + ".mu"),
        x_law=parse_law(raw["x"], where + ".x"),
        y_law=parse_law(raw["y"], where + ".y"),
        capacity_N=capacity if capacity is not None else number(raw.get("N", float("inf")), where),
        policy=raw.get("policy", "exceeded"),
    )


def _mc(raw, seed, workers, where):
    if not isinstance(raw, dict):
        raise ValueError(f"{where}: expected an object")
    s = raw.get("seed", seed)
    if s is None:
        raise ValueError(f"{where}: a seed is required (scenario 'mc.seed' or top-level 'seed')")
    return MCConfig(
        replications=int(raw["replications"]),
        master_seed=int(s),
        max_steps=int(raw.get("max_steps", 10**7)),
        workers=int(workers),
        censor_limit=float(raw.get("censor_limit", 0.005)),
    )


def _oracle(raw):
    if raw is None or raw is True or raw is False:
        return OracleConfig()
    allowed = {"ceiling_init", "growth", "tol", "max_rounds", "rational"}
    extra = set(raw) - allowed
    if extra:
        raise ValueError(f"oracle: unknown keys {sorted(extra)}")
    return OracleConfig(**raw)


def _formula(raw, where):
    if raw is None:
        return None
    if not isinstance(raw, dict) or raw.get("name") not in FORMULAS:
        raise ValueError(f"{where}: expected {{'name': one of {FORMULAS}, 'inputs': ...}}")
    inputs = raw.get("inputs", "oracle")
    if inputs != "oracle":
        if not isinstance(inputs, dict):
            raise ValueError(f"{where}.inputs: 'oracle' or an object of numbers")
        inputs = {k: number(v, f"{where}.inputs.{k}") for k, v in inputs.items()}
    return FormulaSpec(raw["name"], inputs)


_OPTION_KEYS = {
    "alpha_ladder": ("increment", "check", "confidence", "margin"),
    "assumption1": ("confidence", "margin", "expect"),
    "exact": ("profile_alpha",),
    "queue_sweep": ("check_dichotomy",),
    "walk_levels": (),
}


def parse_scenario(raw: dict, seed=None, workers: int = 1, index: int = 0) -> Scenario:
    where = f"scenarios[{index}]"
    if not isinstance(raw, dict):
        raise ValueError(f"{where}: expected an object")
    name, kind = raw.get("name"), raw.get("kind")
    if not isinstance(name, str) or not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise ValueError(f"{where}.name: expected a file-safe string, got {name!r}")
    if kind not in KINDS:
        raise ValueError(f"{where}.kind: expected one of {KINDS}, got {kind!r}")
    for key in _REQUIRED[kind]:
        if key not in raw:
            raise ValueError(f"{where}: kind {kind!r} requires field {key!r}")
    kw: Dict[str, Any] = dict(name=name, kind=kind)
    if "distribution" in raw:
        kw["distribution"] = parse_distribution(raw["distribution"], where + ".distribution")
    if kind == "queue_sweep":
        kw["queue"] = parse_queue(raw["queue"], where + ".queue", capacity=float("inf"))
        kw["levels"] = tuple(number(n, where + ".N") for n in raw["N"])
    elif kind == "walk_levels" or kind == "exact":
        kw["levels"] = tuple(number(a, where + ".levels") for a in raw["levels"])
    elif kind == "alpha_ladder":
        kw["levels"] = (number(raw["alpha0"], where + ".alpha0"),)
    else:
        kw["levels"] = (number(raw["alpha"], where + ".alpha"),)
    if any(not float(a) > 0 for a in kw["levels"]):
        raise ValueError(f"{where}: levels and capacities must be positive")
    if "mc" in raw:
        kw["mc"] = _mc(raw["mc"], seed, workers, where + ".mc")
        kw["mc_floor"] = float(raw["mc"].get("floor", 0.0))
    kw["use_oracle"] = raw.get("oracle", True) is not False
    kw["oracle"] = _oracle(raw.get("oracle"))
    kw["formula"] = _formula(raw.get("formula"), where + ".formula")
    opts = {k: raw[k] for k in _OPTION_KEYS[kind] if k in raw}
    if kind == "alpha_ladder":
        opts["rungs"] = int(raw["rungs"])
    kw["options"] = opts
    return Scenario(**kw)


def _line_of(text: str, name) -> Optional[int]:
    m = re.search(r'"name"\s*:\s*' + re.escape(json.dumps(name)), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def loads(text: str, path: str = "<memory>", seed=None, workers: Optional[int] = None,
          only: Optional[str] = None) -> RunConfig:
    """Parse a scenario document; ``seed``/``workers`` override the file."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, path, e.lineno) from e
    if not isinstance(doc, dict) or not isinstance(doc.get("scenarios"), list):
        raise ConfigError("top level must be an object with a 'scenarios' list", path, 1)
    top_seed = doc.get("seed") if seed is None else seed
    n_workers = workers if workers is not None else int(doc.get("workers", 1))
    out, names = [], set()
    for i, raw in enumerate(doc["scenarios"]):
        line = _line_of(text, raw.get("name")) if isinstance(raw, dict) else None
        if isinstance(raw, dict) and only is not None and raw.get("name") != only:
            continue
        try:
            sc = parse_scenario(raw, top_seed, n_workers, i)
            if seed is not None and sc.mc is not None:
                sc = replace(sc, mc=replace(sc.mc, master_seed=int(seed)))
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError, ZeroDivisionError) as e:
            msg = f"missing field {e}" if isinstance(e, KeyError) else str(e)
            raise ConfigError(msg, path, line) from e
        if sc.name in names:
            raise ConfigError(f"duplicate scenario name {sc.name!r}", path, line)
        names.add(sc.name)
        out.append(sc)
    if only is not None and not out:
        raise ConfigError(f"no scenario named {only!r}", path, None)
    return RunConfig(out, path)


def bundled_path(name: str) -> Path:
    return Path(__file__).with_name("data") / f"{name}.json"


def load(path, seed=None, workers=None, only=None) -> RunConfig:
    """Read a scenario file; a bare name like ``paper_examples`` picks a bundled one."""
    p = Path(path)
    if not p.exists() and not p.suffix and bundled_path(str(path)).exists():
        p = bundled_path(str(path))
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(str(e), str(path), None) from e
    return loads(text, str(p), seed=seed, workers=workers, only=only)
