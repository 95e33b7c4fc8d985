"""Experiment configuration documents (YAML) and their validation.

Schema (top-level keys)::

    experiment_id: text                      # required
    preset: {name: text, version: int}       # optional, filled in for bundled presets
    model:    {tag: text, params: {...}}     # required
    lyapunov: {tag: text, params: {...}}     # optional, default is the model's standard V
    phi:      {family: text, params: {...}}  # optional
    set_C:    {kind: ball|v_level|empty, params: {...}}   # optional
    b: number                                # optional drift constant
    sim:      {dt, horizon, n_paths, seed, chunk_size, substep_cap}   # seed required
    pipeline: [{op: text, ...params}, ...]   # required, nonempty
    output_dir: path                         # optional, overridden by --output-dir
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError

KNOWN_OPS = (
    "certificate", "generator_check", "supermartingale", "modulated_moments", "young_moment",
    "skeleton_sum", "exp_moment", "resolvent", "assumptions", "langevin_regimes",
    "hamiltonian_exponents", "hamiltonian_closed_form", "distance_curve", "mdp_variance",
    "mdp_tail_scaling",
)
SIM_KEYS = {"dt", "horizon", "n_paths", "seed", "chunk_size", "substep_cap"}
TOP_KEYS = {"experiment_id", "preset", "model", "lyapunov", "phi", "set_C", "b", "sim", "pipeline",
            "output_dir"}


def _locate(node, path: tuple) -> Optional[int]:
    """1-based line of the YAML node at ``path`` (keys / indices), or of its nearest parent."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            if nxt is None:
                return line
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line


@dataclass
class ExperimentConfig:
    experiment_id: str
    model: dict
    sim: dict
    pipeline: list
    lyapunov: Optional[dict] = None
    phi: Optional[dict] = None
    set_C: Optional[dict] = None
    b: Optional[float] = None
    preset: Optional[dict] = None
    output_dir: Optional[str] = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def seed(self) -> int:
        return int(self.sim["seed"])

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _err(msg: str, key: str, node, path: tuple) -> ConfigError:
    line = _locate(node, path)
    where = f" (line {line})" if line else ""
    return ConfigError(f"{msg}: key '{key}'{where}")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Validate a YAML document against the schema; errors name the key and line."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return config_from_dict(data, node)


def config_from_dict(data: dict, node=None) -> ExperimentConfig:
    for k in data:
        if k not in TOP_KEYS:
            raise _err("unknown key", str(k), node, (k,))
    for k in ("experiment_id", "model", "sim", "pipeline"):
        if k not in data or data[k] is None:
            raise _err("missing required key", k, node, ())
    if not isinstance(data["model"], dict) or "tag" not in data["model"]:
        raise _err("missing required key", "model.tag", node, ("model",))
    sim = data["sim"]
    if not isinstance(sim, dict):
        raise _err("must be a mapping", "sim", node, ("sim",))
    for k in sim:
        if k not in SIM_KEYS:
            raise _err("unknown key", f"sim.{k}", node, ("sim", k))
    if "seed" not in sim or sim["seed"] is None:
        raise _err("missing required key", "sim.seed", node, ("sim",))
    if not isinstance(sim["seed"], int) or isinstance(sim["seed"], bool) or sim["seed"] < 0:
        raise _err("seed must be a nonnegative integer", "sim.seed", node, ("sim", "seed"))
    pipe = data["pipeline"]
    if not isinstance(pipe, list) or not pipe:
        raise _err("pipeline must be a nonempty list", "pipeline", node, ("pipeline",))
    for i, stage in enumerate(pipe):
        if not isinstance(stage, dict) or "op" not in stage:
            raise _err("stage needs an 'op'", f"pipeline[{i}]", node, ("pipeline", i))
        if stage["op"] not in KNOWN_OPS:
            raise _err(f"unknown op {stage['op']!r}", f"pipeline[{i}].op", node, ("pipeline", i, "op"))
    for sec, key in (("lyapunov", "tag"), ("phi", "family"), ("set_C", "kind")):
        if sec in data and data[sec] is not None:
            if not isinstance(data[sec], dict) or key not in data[sec]:
                raise _err("missing required key", f"{sec}.{key}", node, (sec,))
    b = data.get("b")
    if b is not None and (isinstance(b, bool) or not isinstance(b, (int, float))):
        raise _err("b must be a number", "b", node, ("b",))
    return ExperimentConfig(
        experiment_id=str(data["experiment_id"]), model=data["model"], sim=dict(sim), pipeline=pipe,
        lyapunov=data.get("lyapunov"), phi=data.get("phi"), set_C=data.get("set_C"),
        b=None if b is None else float(b), preset=data.get("preset"), output_dir=data.get("output_dir"),
        raw=copy.deepcopy(data))


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from None
    return parse_config(text, str(p))


def dump_config(data: dict) -> str:
    return yaml.safe_dump(data, sort_keys=False, allow_unicode=True)
