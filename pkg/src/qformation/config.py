"""JSON run configuration, validated as a whole at load time."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .analysis import SafetySpec, quantizer_feasible
from .formation import OffGridTargetError, PerceptionModel, validate_targets
from .geometry import FormationState, PolarVec
from .gossip import GossipGraph
from .pinhole import PinholeScenario
from .quantizer import QuantizerConfig

SCHEMA_VERSION = 1

_SECTIONS = {"schema_version", "formation", "quantizer", "graph", "perception", "run",
             "output", "sampling", "fit"}


class ConfigError(ValueError):
    """The configuration violates one of its invariants."""


def polar_list(raw, what: str) -> FormationState:
    try:
        return FormationState(PolarVec(float(r), float(t)) for r, t in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: expected a list of [r, theta] pairs ({exc})") from None


def _keys(d: dict, allowed: set[str], where: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


@dataclass
class RunConfig:
    cfg: QuantizerConfig
    targets: FormationState
    spec: SafetySpec
    graph: GossipGraph
    perception: PerceptionModel
    seed: int = 0
    max_steps: int = 1_000_000
    n_runs: int = 1
    workers: int = 1
    init: Any = "worst_case"
    trace_path: str | None = "trace.csv"
    summary_path: str = "summary.json"
    sampling: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)

    @property
    def n_agents(self) -> int:
        return len(self.targets)

    def initial_state(self) -> Any:
        """``"worst_case"``, ``"random"`` or an explicit :class:`FormationState`."""
        if isinstance(self.init, str):
            if self.init == "targets":
                return self.targets
            return self.init
        return polar_list(self.init, "run.init")


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    _keys(data, _SECTIONS, "config")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}")

    q = dict(data.get("quantizer", {}))
    _keys(q, {"a", "M", "omega", "angular_lift"}, "quantizer")
    try:
        cfg = QuantizerConfig(float(q["a"]), q["M"], float(q.get("omega", 0.618)),
                              q.get("angular_lift", "signed"))
    except KeyError as exc:
        raise ConfigError(f"quantizer: missing {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"quantizer: {exc}") from None

    f = dict(data.get("formation", {}))
    _keys(f, {"n_agents", "targets", "d_min", "d_max", "snap_targets"}, "formation")
    if "targets" not in f:
        raise ConfigError("formation: missing targets")
    raw_targets = polar_list(f["targets"], "formation.targets")
    if "n_agents" in f and int(f["n_agents"]) != len(raw_targets):
        raise ConfigError(f"formation: n_agents={f['n_agents']} but {len(raw_targets)} targets given")
    try:
        spec = SafetySpec(float(f["d_min"]), float(f["d_max"]))
    except KeyError as exc:
        raise ConfigError(f"formation: missing {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"formation: safe distances: {exc}") from None
    try:
        targets = validate_targets(raw_targets, cfg, snap=bool(f.get("snap_targets", False)))
    except OffGridTargetError as exc:
        raise ConfigError(f"targets on grid: {exc}") from None
    if not all(spec.d_min < t.r < spec.d_max for t in targets):
        raise ConfigError("targets must lie strictly inside the safe distance range")
    if not quantizer_feasible(cfg, spec, targets):
        raise ConfigError(
            f"quantizer feasibility: step radius a={cfg.a} leaves no safe initial state "
            f"for d=({spec.d_min}, {spec.d_max}) and these targets")

    g = dict(data.get("graph", {"topology": "chain"}))
    _keys(g, {"topology", "edges"}, "graph")
    topo = g.get("topology", "chain")
    n = len(targets)
    try:
        if topo == "chain":
            graph = GossipGraph.chain(n)
        elif topo == "custom":
            edges = [(int(i) - 1, int(j) - 1) for i, j in g.get("edges", [])]
            graph = GossipGraph(n, tuple(edges))
        else:
            raise ConfigError(f"graph: unknown topology {topo!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"graph: {exc}") from None

    p = dict(data.get("perception", {"kind": "exact"}))
    _keys(p, {"kind", "params"}, "perception")
    params = dict(p.get("params", {}))
    kind = p.get("kind", "exact")
    if kind == "bounded_quantizer_noise":
        params.setdefault("a", cfg.a)
        params.setdefault("M", cfg.M)
    try:
        if kind == "pinhole":
            PinholeScenario.from_dict(params)
        model = PerceptionModel(kind, params)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"perception: {exc}") from None

    r = dict(data.get("run", {}))
    _keys(r, {"seed", "max_steps", "n_runs", "workers", "init"}, "run")
    seed = r.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("run.seed must be an unsigned 64-bit integer")
    out = dict(data.get("output", {}))
    _keys(out, {"trace_path", "summary_path"}, "output")
    rc = RunConfig(cfg, targets, spec, graph, model, seed=seed,
                   max_steps=int(r.get("max_steps", 1_000_000)),
                   n_runs=int(r.get("n_runs", 1)), workers=int(r.get("workers", 1)),
                   init=r.get("init", "worst_case"),
                   trace_path=out.get("trace_path", "trace.csv"),
                   summary_path=out.get("summary_path", "summary.json"),
                   sampling=dict(data.get("sampling", {})), fit=dict(data.get("fit", {})))
    if rc.max_steps < 1 or rc.n_runs < 1 or rc.workers < 1:
        raise ConfigError("run: max_steps, n_runs and workers must be positive")
    if isinstance(rc.init, str) and rc.init not in ("worst_case", "random", "targets"):
        raise ConfigError(f"run.init: unknown mode {rc.init!r}")
    if not isinstance(rc.init, str):
        y0 = rc.initial_state()
        if len(y0) != n:
            raise ConfigError("run.init: wrong number of entries")
    return rc


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(data)


def example_config() -> dict:
    """Four-entry chain, ``a = 2``, ``M = 8``, every target at distance 4."""
    return {
        "schema_version": SCHEMA_VERSION,
        "formation": {"n_agents": 4, "targets": [[4.0, 0.0]] * 4, "d_min": 1.0, "d_max": 16.0},
        "quantizer": {"a": 2.0, "M": 8, "omega": 0.618, "angular_lift": "signed"},
        "graph": {"topology": "chain"},
        "perception": {"kind": "exact", "params": {}},
        "run": {"seed": 0, "max_steps": 1_000_000, "n_runs": 1000, "init": "worst_case"},
        "output": {"trace_path": "trace.csv", "summary_path": "summary.json"},
        "sampling": {"n": 2000, "levels": [0, 1, 2, 3, 4]},
        "fit": {"p": [0.99, 0.9]},
    }


__all__ = ["SCHEMA_VERSION", "ConfigError", "RunConfig", "example_config",
           "load_config", "parse_config", "polar_list"]
