"""Run configuration: schema, validation, YAML loading, canonical hashing.

Every knob of a run lives here, grouped into a scenario section (simulators,
noise, population, event window), an agent section (networks and learning
hyperparameters), and a pipeline section (datasets, episodes, seeds,
thresholds). Loading validates eagerly: unknown keys and out-of-range values
are rejected before anything runs, and every default is visible in the
dataclass definitions below.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .simulators import ReserveModel, TouSchedule

SCENARIO_SIGMAS = {1: 0.0, 2: 0.2, 3: 0.5}


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class McpParams:
    p1: float = -0.00042
    p2: float = 126.7125
    p3: float = -0.06412
    p4: float = 0.04937
    p5: float = -55.07590
    p6: float = 7.45740


@dataclass(frozen=True)
class EventConfig:
    start_slot: int = 52      # 13:00 on the quarter-hour grid
    n_slots: int = 8          # two-hour event
    slot_hours: float = 0.25


@dataclass(frozen=True)
class PopulationConfig:
    count: int = 16
    scale_min_kw: float = 20.0
    scale_max_kw: float = 200.0
    templates: tuple[str, ...] = ("flat", "peaked")
    participation_prob: float = 0.8
    offer_center_frac: float = 0.9
    offer_spread_frac: float = 0.3
    load_noise: float = 0.0   # day-to-day multiplicative load wobble


@dataclass(frozen=True)
class ScenarioConfig:
    noise_sigma: float = 0.0
    mcp: McpParams = field(default_factory=McpParams)
    tou: TouSchedule = field(default_factory=TouSchedule)
    reserve: ReserveModel = field(default_factory=ReserveModel)
    population: PopulationConfig = field(default_factory=PopulationConfig)
    event: EventConfig = field(default_factory=EventConfig)
    price_cap: float = 10.0
    quantity_cap: float = 200.0
    reward_scale: float = 100.0
    include_date: bool = True


@dataclass(frozen=True)
class AgentsConfig:
    """Learning hyperparameters shared by the two agents.

    The per-role fields override the shared value for one agent only; the
    price and quantity decisions sit on quite different reward landscapes (a
    win/lose cliff versus a narrow incentive band), so their exploration
    schedules, memory depths, and network widths benefit from diverging.
    """

    hidden_sizes: tuple[int, ...] = (300, 600, 400, 200)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    lr_decay_steps: int | None = None
    lr_end_factor: float = 0.1
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 64
    buffer_capacity: int = 100_000
    noise_kind: str = "gaussian"
    noise_start: float = 0.2
    noise_end: float = 0.02
    noise_decay_steps: int = 15_000
    noise_uniform_eps: float = 0.0
    final_init_scale: float = 1e-3
    price_hidden_sizes: tuple[int, ...] | None = None
    price_buffer_capacity: int | None = None
    price_noise_start: float | None = None
    price_noise_end: float | None = None
    price_noise_decay_steps: int | None = None
    price_noise_uniform_eps: float | None = None
    quantity_hidden_sizes: tuple[int, ...] | None = None
    quantity_buffer_capacity: int | None = None
    quantity_noise_start: float | None = None
    quantity_noise_end: float | None = None
    quantity_noise_decay_steps: int | None = None
    quantity_noise_uniform_eps: float | None = None

    def for_role(self, role: str, name: str):
        """Value of a shared field, honoring the role's override if set."""
        value = getattr(self, f"{role}_{name}")
        return getattr(self, name) if value is None else value


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 1
    offline_days: int = 15
    offline_episodes: int = 150
    validation_days: int = 15
    online_pretrain_days: int = 50
    online_pretrain_episodes: int = 40
    online_days: int = 5
    offline_success_threshold: float = 0.90
    online_success_threshold: float = 0.85
    checkpoint_interval: int = 50


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    agents: AgentsConfig = field(default_factory=AgentsConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    output_dir: str = "runs"


_TUPLE_FIELDS = {
    "hidden_sizes", "price_hidden_sizes", "quantity_hidden_sizes",
    "templates", "peak_hours", "semi_peak_hours",
}

_CONFIG_CLASSES = {
    McpParams, TouSchedule, ReserveModel, PopulationConfig, EventConfig,
    ScenarioConfig, AgentsConfig, PipelineConfig,
}
_CLASS_BY_NAME = {c.__name__: c for c in _CONFIG_CLASSES}


def _nested_class(f: dataclasses.Field):
    """Config class a field holds, or None for plain values. Field types are
    strings under postponed annotations, so resolve by name too."""
    t = f.type
    if isinstance(t, str):
        return _CLASS_BY_NAME.get(t)
    return t if t in _CONFIG_CLASSES else None


def _build(cls, data: dict, path: str):
    """Construct a (possibly nested) config dataclass, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        nested = _nested_class(fields[name])
        if nested is not None:
            kwargs[name] = _build(nested, value, f"{path}.{name}")
        elif name in _TUPLE_FIELDS and isinstance(value, list):
            kwargs[name] = _as_tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _as_tuple(value):
    return tuple(_as_tuple(v) if isinstance(v, list) else v for v in value)


_NESTED = {
    "scenario": ScenarioConfig,
    "agents": AgentsConfig,
    "pipeline": PipelineConfig,
}


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root: expected a mapping, got {type(data).__name__}")
    unknown = set(data) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ConfigError(f"config root: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, cls in _NESTED.items():
        if name in data:
            kwargs[name] = _build(cls, data[name], name)
    if "output_dir" in data:
        kwargs["output_dir"] = str(data["output_dir"])
    cfg = RunConfig(**kwargs)
    validate_config(cfg)
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Load a YAML run configuration; None gives the documented defaults."""
    if path is None:
        cfg = RunConfig()
        validate_config(cfg)
        return cfg
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return config_from_dict(data)


def validate_config(cfg: RunConfig) -> None:
    sc, ag, pl = cfg.scenario, cfg.agents, cfg.pipeline
    checks = [
        (sc.noise_sigma >= 0, "scenario.noise_sigma must be non-negative"),
        (sc.price_cap > 0, "scenario.price_cap must be positive"),
        (sc.quantity_cap > 0, "scenario.quantity_cap must be positive"),
        (sc.reward_scale > 0, "scenario.reward_scale must be positive"),
        (sc.population.count >= 1, "scenario.population.count must be at least 1"),
        (0 <= sc.population.participation_prob <= 1,
         "scenario.population.participation_prob must lie in [0, 1]"),
        (sc.population.scale_min_kw <= sc.population.scale_max_kw,
         "scenario.population scale range is inverted"),
        (sc.event.n_slots >= 1, "scenario.event.n_slots must be at least 1"),
        (sc.event.start_slot + sc.event.n_slots <= 96,
         "scenario.event must fit inside the 96-slot day"),
        (0 <= sc.reserve.v_min <= sc.reserve.v_max <= 1,
         "scenario.reserve band must satisfy 0 <= v_min <= v_max <= 1"),
        (len(ag.hidden_sizes) >= 1, "agents.hidden_sizes must not be empty"),
        (all(h >= 1 for h in ag.hidden_sizes), "agents.hidden_sizes must be positive"),
        (ag.actor_lr > 0 and ag.critic_lr > 0, "agents learning rates must be positive"),
        (0 <= ag.gamma <= 1, "agents.gamma must lie in [0, 1]"),
        (0 <= ag.tau <= 1, "agents.tau must lie in [0, 1]"),
        (ag.batch_size >= 1, "agents.batch_size must be at least 1"),
        (ag.buffer_capacity >= ag.batch_size,
         "agents.buffer_capacity must hold at least one batch"),
        (ag.noise_kind in ("gaussian", "ou"), "agents.noise_kind must be gaussian or ou"),
        (0 <= ag.noise_end <= ag.noise_start, "agents noise schedule must not increase"),
        (all(
            ag.for_role(role, "noise_end") <= ag.for_role(role, "noise_start")
            for role in ("price", "quantity")
        ), "per-agent noise schedules must not increase"),
        (all(
            ag.for_role(role, "buffer_capacity") >= ag.batch_size
            for role in ("price", "quantity")
        ), "per-agent buffers must hold at least one batch"),
        (pl.seed >= 0, "pipeline.seed must be non-negative"),
        (pl.offline_days >= 0, "pipeline.offline_days must be non-negative"),
        (pl.offline_episodes >= 0, "pipeline.offline_episodes must be non-negative"),
        (pl.online_days >= 0, "pipeline.online_days must be non-negative"),
        (0 <= pl.offline_success_threshold <= 1, "offline threshold must lie in [0, 1]"),
        (0 <= pl.online_success_threshold <= 1, "online threshold must lie in [0, 1]"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def with_scenario(cfg: RunConfig, scenario_id: int) -> RunConfig:
    """Apply one of the three noise scenarios to a configuration."""
    if scenario_id not in SCENARIO_SIGMAS:
        raise ConfigError(f"scenario must be one of {sorted(SCENARIO_SIGMAS)}, got {scenario_id}")
    scenario = dataclasses.replace(cfg.scenario, noise_sigma=SCENARIO_SIGMAS[scenario_id])
    return dataclasses.replace(cfg, scenario=scenario)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return dataclasses.replace(cfg, pipeline=dataclasses.replace(cfg.pipeline, seed=seed))


def override(cfg: RunConfig, dotted: str, value) -> RunConfig:
    """Replace one field addressed as section.field (or deeper)."""
    parts = dotted.split(".")
    def rec(node, parts):
        if len(parts) == 1:
            if not any(f.name == parts[0] for f in dataclasses.fields(node)):
                raise ConfigError(f"unknown config field {dotted!r}")
            v = value
            if parts[0] in _TUPLE_FIELDS and isinstance(v, list):
                v = _as_tuple(v)
            return dataclasses.replace(node, **{parts[0]: v})
        child = getattr(node, parts[0], None)
        if child is None or not dataclasses.is_dataclass(child):
            raise ConfigError(f"unknown config section in {dotted!r}")
        return dataclasses.replace(node, **{parts[0]: rec(child, parts[1:])})
    cfg = rec(cfg, parts)
    validate_config(cfg)
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: RunConfig) -> str:
    """Stable digest of the full configuration, for run manifests."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, default=list)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def save_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)
