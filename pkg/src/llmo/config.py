"""Experiment configuration: YAML schema, validation, overrides, canonical form."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import yaml

from .errors import ConfigError
from .trace import config_hash

SCENARIOS = ("ifc-ee", "ifc-se", "bc-se", "mmimo-ee", "synthetic-grid")
AGENT_KINDS = ("http", "synthetic", "exploring", "random")
SAMPLERS = ("elitist", "lifo")
CONSTRAINTS = ("none", "language", "penalty")
BASELINES = ("ga", "bo", "brute-force", "local")


@dataclass
class AgentSpec:
    kind: str
    count: int = 1
    # synthetic
    alpha: float = 1.0
    top_k: int | None = None
    policy_seed: int = 0
    # exploring
    epsilon: float = 0.3
    step: int = 1
    sigma: float = 0.05
    # http
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 1.0
    retries: int = 2
    timeout: float = 30.0
    api_key_env: str | None = "OPENAI_API_KEY"
    integer_mode: bool = True


@dataclass
class TheorySpec:
    levels: int = 4
    P: int = 2
    D: int = 1
    policies: int = 20
    policy_seed: int = 0
    L: list = field(default_factory=lambda: [1, 2, 3])
    T: int = 50
    horizon: int = 1000
    mc_runs: int = 100_000
    mc_seed: int = 0


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    scenario: str = "ifc-ee"
    P: int = 5
    D: int = 3
    T: int = 100
    seeds: list = field(default_factory=lambda: [0])
    samplers: list = field(default_factory=lambda: ["elitist"])
    agents: list = field(default_factory=lambda: [AgentSpec("exploring")])
    levels: int | None = None
    constraint: str = "none"
    fixtures: int = 200
    channel_seed: int = 0
    P_tx: float = 10.0
    P_fix: float = 1.0
    retries: int = 3
    baselines: list = field(default_factory=list)
    L_sweep: list = field(default_factory=list)
    reference: bool = True
    workers: int = 1
    dump_populations: bool = False
    allow_network: bool = False
    output: str = "runs"
    theory: TheorySpec = field(default_factory=TheorySpec)

    @property
    def L(self) -> int:
        return sum(a.count for a in self.agents)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("allow_network")
        return d

    def hash(self) -> str:
        d = self.canonical()
        for k in ("output", "workers"):  # do not change results
            d.pop(k)
        return config_hash(d)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.canonical(), sort_keys=True)


_TOP = {f for f in ExperimentConfig.__dataclass_fields__}
_AGENT = {f for f in AgentSpec.__dataclass_fields__}
_THEORY = {f for f in TheorySpec.__dataclass_fields__}


def _coerce(value, proto, problems, where):
    """Check ``value`` against the type of the default ``proto``."""
    if proto is None or value is None:
        return value
    if isinstance(proto, bool):
        if not isinstance(value, bool):
            problems.append(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(proto, int):
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(proto, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}: expected a number, got {value!r}")
            return value
        return float(value)
    if isinstance(proto, str):
        if not isinstance(value, str):
            problems.append(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(proto, list):
        if not isinstance(value, list):
            return [value]
    return value


def _build(cls, raw, allowed, problems, where):
    if not isinstance(raw, dict):
        problems.append(f"{where}: expected a mapping")
        return cls() if cls is not AgentSpec else AgentSpec("random")
    unknown = sorted(set(raw) - allowed)
    for k in unknown:
        problems.append(f"{where}: unknown field {k!r}")
    proto = cls() if cls is not AgentSpec else AgentSpec("random")
    kw = {}
    for k, v in raw.items():
        if k in allowed and k not in ("agents", "theory"):
            kw[k] = _coerce(v, getattr(proto, k), problems, f"{where}.{k}")
    return kw


def from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config, reporting every problem at once."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level: expected a mapping"])
    kw = _build(ExperimentConfig, raw, _TOP, problems, "config")
    if "sampler" in raw and "samplers" not in raw:  # singular alias
        kw["samplers"] = raw["sampler"] if isinstance(raw["sampler"], list) else [raw["sampler"]]
        problems[:] = [p for p in problems if "'sampler'" not in p]
    agents = []
    for i, a in enumerate(raw.get("agents", [{"kind": "exploring"}]) or []):
        akw = _build(AgentSpec, a, _AGENT, problems, f"agents[{i}]")
        if "kind" not in akw:
            problems.append(f"agents[{i}]: missing 'kind'")
            akw["kind"] = "random"
        agents.append(AgentSpec(**akw))
    theory = TheorySpec(**_build(TheorySpec, raw.get("theory", {}) or {}, _THEORY, problems, "theory"))
    cfg = ExperimentConfig(**kw, agents=agents, theory=theory)
    problems.extend(validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate(cfg: ExperimentConfig) -> list[str]:
    p = []
    if cfg.scenario not in SCENARIOS:
        p.append(f"scenario: {cfg.scenario!r} is not one of {', '.join(SCENARIOS)}")
    for name in ("P", "T", "fixtures"):
        if not isinstance(getattr(cfg, name), int) or getattr(cfg, name) < 1:
            p.append(f"{name}: must be a positive integer")
    if not isinstance(cfg.D, int) or cfg.D < 1:
        p.append("D: must be a positive integer")
    if cfg.scenario == "mmimo-ee" and cfg.D != 3:
        p.append("D: mmimo-ee actions are [M, K, p_dl], so D must be 3")
    if cfg.scenario == "bc-se" and cfg.D < 2:
        p.append("D: bc-se needs at least two users")
    if not cfg.seeds:
        p.append("seeds: at least one seed is required")
    elif not all(isinstance(s, int) and not isinstance(s, bool) for s in cfg.seeds):
        p.append("seeds: every seed must be an integer")
    for s in cfg.samplers:
        if s not in SAMPLERS:
            p.append(f"samplers: {s!r} is not one of {', '.join(SAMPLERS)}")
    if not cfg.samplers:
        p.append("samplers: at least one sampler is required")
    if cfg.constraint not in CONSTRAINTS:
        p.append(f"constraint: {cfg.constraint!r} is not one of {', '.join(CONSTRAINTS)}")
    if cfg.constraint != "none" and cfg.scenario != "bc-se":
        p.append("constraint: only the bc-se scenario has a sum-power constraint")
    if cfg.levels is not None and (not isinstance(cfg.levels, int) or cfg.levels < 2):
        p.append("levels: must be an integer >= 2")
    if cfg.scenario == "synthetic-grid" and cfg.levels is None:
        p.append("levels: the synthetic-grid scenario needs a grid")
    if cfg.retries < 0:
        p.append("retries: must be >= 0")
    for b in cfg.baselines:
        if b not in BASELINES:
            p.append(f"baselines: {b!r} is not one of {', '.join(BASELINES)}")
    if "local" in cfg.baselines and cfg.scenario == "mmimo-ee":
        p.append("baselines: no local solver exists for mmimo-ee")
    if any((not isinstance(L, int)) or L < 1 for L in cfg.L_sweep):
        p.append("L_sweep: entries must be positive integers")
    if not cfg.agents:
        p.append("agents: at least one agent is required")
    for i, a in enumerate(cfg.agents):
        w = f"agents[{i}]"
        if a.kind not in AGENT_KINDS:
            p.append(f"{w}.kind: {a.kind!r} is not one of {', '.join(AGENT_KINDS)}")
        if not isinstance(a.count, int) or a.count < 1:
            p.append(f"{w}.count: must be a positive integer")
        if a.kind == "synthetic":
            if cfg.levels is None:
                p.append(f"{w}: synthetic agents need a grid (set 'levels')")
            elif cfg.levels ** (cfg.P * cfg.D) > 10_000:
                p.append(f"{w}: synthetic law over {cfg.levels}^{cfg.P * cfg.D} states exceeds the 10^4 cap")
            if not a.alpha > 0:
                p.append(f"{w}.alpha: temperature must be > 0")
        if a.kind == "exploring" and not 0 <= a.epsilon <= 1:
            p.append(f"{w}.epsilon: must lie in [0, 1]")
        if a.kind == "http":
            if not a.endpoint:
                p.append(f"{w}.endpoint: required for http agents")
            if not a.model:
                p.append(f"{w}.model: required for http agents")
            if a.temperature < 0:
                p.append(f"{w}.temperature: must be >= 0")
            if a.retries < 0:
                p.append(f"{w}.retries: must be >= 0")
            if a.api_key_env and not a.api_key_env.replace("_", "").isalnum():
                p.append(f"{w}.api_key_env: must name an environment variable, not hold a secret")
    t = cfg.theory
    if t.levels < 2 or t.P < 1 or t.D < 1:
        p.append("theory: levels >= 2, P >= 1 and D >= 1 are required")
    elif t.levels ** (t.P * t.D) > 10_000:
        p.append("theory: state space exceeds the 10^4 cap")
    if t.policies < 1 or t.T < 5 or t.mc_runs < 1:
        p.append("theory: policies >= 1, T >= 5 and mc_runs >= 1 are required")
    return p


def _parse_scalar(text):
    return yaml.safe_load(text)


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key=value`` / ``a.b=value`` overrides (values parsed as YAML)."""
    raw = copy.deepcopy(raw)
    problems = []
    for item in overrides or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            problems.append(f"override {item!r}: expected key=value")
            continue
        parts = key.strip().split(".")
        node = raw
        for part in parts[:-1]:
            if isinstance(node, list) and part.isdigit() and int(part) < len(node):
                node = node[int(part)]
            elif isinstance(node, dict):
                node = node.setdefault(part, {})
            else:
                problems.append(f"override {item!r}: cannot descend into {part!r}")
                node = None
                break
        if node is None:
            continue
        last = parts[-1]
        if isinstance(node, list) and last.isdigit():
            node[int(last)] = _parse_scalar(val)
        else:
            node[last] = _parse_scalar(val)
    if problems:
        raise ConfigError(problems)
    return raw


def load_config(path, overrides=None) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError([f"{path}: not valid YAML: {exc}"]) from exc
    return from_dict(apply_overrides(raw, overrides))
