"""Experiment orchestration: datasets, training protocols, metrics, grid search.

The offline protocol trains the two agents by iterating episodes over a
multi-day event dataset; the online protocol continues learning period by
period on fresh days, acting before it ever sees that period's clearing
price. Evaluation replays frozen price draws so that policy differences are
the only source of metric variance, and every metric can be recomputed from
the emitted per-slot CSV alone.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, override
from .ddpg import Agent, Transition, make_noise
from .environment import BiddingEnv, EnvAction, EventDay, StateEncoder
from .market import DBEvent, compute_cbl
from .simulators import (
    STREAM_AGENT_PRICE,
    STREAM_AGENT_QUANTITY,
    STREAM_ENV,
    STREAM_LOADS,
    STREAM_MCP,
    STREAM_PLANS,
    STREAM_POPULATION,
    STREAM_RESERVE,
    CustomerProfile,
    McpModel,
    ReserveModel,
    TouSchedule,
    generate_participation_plans,
    generate_population,
    make_rng,
    simulate_mcp,
    simulate_reserve,
)

SCHEMA_VERSION = 1

# dataset roles; each gets its own rng sub-streams and day-of-year offset
DATASET_TRAIN = 0
DATASET_VALIDATION = 1
DATASET_PRETRAIN = 2
DATASET_ONLINE = 3
_DAY_OFFSETS = {DATASET_TRAIN: 0, DATASET_VALIDATION: 100,
                DATASET_PRETRAIN: 140, DATASET_ONLINE: 200}

OUTCOME_FIELDS = [
    "episode", "day", "slot", "reserve", "mcp", "bid_price", "bid_quantity",
    "q_act", "execution_rate", "incentive_ratio", "win", "profit",
]


class TrainingDiverged(RuntimeError):
    """Raised when a learning step produces a non-finite loss or gradient."""


@dataclass
class Dataset:
    days: list[EventDay]
    dataset_id: int
    seed: int
    noise_sigma: float

    @property
    def periods(self) -> int:
        return sum(d.plans.shape[1] for d in self.days)


@dataclass(frozen=True)
class RunMetrics:
    """Period-level summary of an outcome log.

    A period succeeds when it earns strictly positive profit; a period is a
    won deal when the bid cleared the market and customers actually shed.
    """

    periods: int
    success_rate: float
    rate_tight: float   # execution rate within [0.8, 1.2]
    rate_loose: float   # execution rate within [0.6, 1.5]
    win_rate: float
    total_profit: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# --------------------------------------------------------------------------
# dataset construction and persistence
# --------------------------------------------------------------------------

def build_population(cfg: RunConfig) -> list[CustomerProfile]:
    pop = cfg.scenario.population
    return generate_population(
        pop.count,
        make_rng(cfg.pipeline.seed, STREAM_POPULATION),
        scale_range_kw=(pop.scale_min_kw, pop.scale_max_kw),
        templates=pop.templates,
        participation_prob=pop.participation_prob,
        offer_center_frac=pop.offer_center_frac,
        offer_spread_frac=pop.offer_spread_frac,
    )


def mcp_model(cfg: RunConfig) -> McpModel:
    m = cfg.scenario.mcp
    return McpModel(m.p1, m.p2, m.p3, m.p4, m.p5, m.p6,
                    noise_sigma=cfg.scenario.noise_sigma)


def event_of(cfg: RunConfig) -> DBEvent:
    ev = cfg.scenario.event
    return DBEvent(ev.start_slot, ev.n_slots, ev.slot_hours)


def make_encoder(cfg: RunConfig) -> StateEncoder:
    return StateEncoder(
        n_customers=cfg.scenario.population.count,
        price_cap=cfg.scenario.price_cap,
        v_max=cfg.scenario.reserve.v_max,
        include_date=cfg.scenario.include_date,
    )


def build_dataset(
    cfg: RunConfig,
    n_days: int,
    dataset_id: int,
    population: list[CustomerProfile] | None = None,
) -> Dataset:
    """Generate the event days one dataset role needs: offer plans, reserve
    forecasts, baselines, base loads, and frozen clearing-price draws."""
    population = population or build_population(cfg)
    seed = cfg.pipeline.seed
    tou = cfg.scenario.tou
    event = event_of(cfg)
    model = mcp_model(cfg)
    reserve_model = cfg.scenario.reserve
    load_noise = cfg.scenario.population.load_noise
    rng_plans = make_rng(seed, STREAM_PLANS, dataset_id)
    rng_res = make_rng(seed, STREAM_RESERVE, dataset_id)
    rng_mcp = make_rng(seed, STREAM_MCP, dataset_id)
    rng_loads = make_rng(seed, STREAM_LOADS, dataset_id)
    offset = _DAY_OFFSETS.get(dataset_id, 1000 * dataset_id)

    slots = list(event.slots())
    days = []
    for i in range(n_days):
        doy = (offset + i) % 365 + 1
        weekend = 1 if doy % 7 in (6, 0) else 0
        plans = np.array([
            plan.prices
            for plan in generate_participation_plans(population, event, tou, rng_plans,
                                                     price_cap=cfg.scenario.price_cap)
        ])
        reserve = np.array([
            simulate_reserve(reserve_model, offset + i, s, rng_res) for s in slots
        ])
        base_load = np.empty((len(population), len(slots)))
        cbl = np.empty(len(population))
        for c, profile in enumerate(population):
            shape = profile.base_load_kw[slots]
            factor = 1.0
            if load_noise > 0:
                factor = max(0.01, 1.0 + float(rng_loads.normal(0.0, load_noise)))
            base_load[c] = shape * factor
            maxima = []
            for _ in range(5):
                h = 1.0
                if load_noise > 0:
                    h = max(0.01, 1.0 + float(rng_loads.normal(0.0, load_noise)))
                maxima.append(float(shape.max() * h))
            cbl[c] = compute_cbl(maxima)
        frozen = np.array([
            simulate_mcp(model, s, float(reserve[n]), rng_mcp)
            for n, s in enumerate(slots)
        ])
        days.append(EventDay(
            index=i, day_of_year=doy, weekend=weekend, plans=plans,
            reserve=reserve, cbl=cbl, base_load=base_load, frozen_mcp=frozen,
        ))
    return Dataset(days=days, dataset_id=dataset_id, seed=seed,
                   noise_sigma=cfg.scenario.noise_sigma)


def _fmt(x: float) -> str:
    return repr(float(x))


def save_dataset(dataset: Dataset, directory: str | Path) -> None:
    """Write the dataset as versioned CSV tables plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "dataset_id": dataset.dataset_id,
        "seed": dataset.seed,
        "noise_sigma": dataset.noise_sigma,
        "n_days": len(dataset.days),
        "n_customers": int(dataset.days[0].plans.shape[0]) if dataset.days else 0,
        "n_slots": int(dataset.days[0].plans.shape[1]) if dataset.days else 0,
    }
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    def table(name, header, rows):
        with open(directory / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    table("days.csv", ["day", "day_of_year", "weekend"],
          [[d.index, d.day_of_year, d.weekend] for d in dataset.days])
    table("plans.csv", ["day", "customer", "slot_index", "offer"],
          [[d.index, c, n, _fmt(d.plans[c, n])]
           for d in dataset.days
           for c in range(d.plans.shape[0])
           for n in range(d.plans.shape[1])])
    table("reserve.csv", ["day", "slot_index", "reserve"],
          [[d.index, n, _fmt(d.reserve[n])]
           for d in dataset.days for n in range(len(d.reserve))])
    table("baselines.csv", ["day", "customer", "cbl_kw"],
          [[d.index, c, _fmt(d.cbl[c])]
           for d in dataset.days for c in range(len(d.cbl))])
    table("loads.csv", ["day", "customer", "slot_index", "base_load_kw"],
          [[d.index, c, n, _fmt(d.base_load[c, n])]
           for d in dataset.days
           for c in range(d.base_load.shape[0])
           for n in range(d.base_load.shape[1])])
    table("mcp.csv", ["day", "slot_index", "mcp"],
          [[d.index, n, _fmt(d.frozen_mcp[n])]
           for d in dataset.days for n in range(len(d.frozen_mcp))])


def load_dataset(directory: str | Path) -> Dataset:
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(
            f"dataset schema {manifest.get('schema_version')} unsupported "
            f"(expected {SCHEMA_VERSION})"
        )
    n_days = manifest["n_days"]
    n_cust = manifest["n_customers"]
    n_slots = manifest["n_slots"]

    def read(name):
        with open(directory / name, newline="") as fh:
            return list(csv.DictReader(fh))

    meta = {int(r["day"]): r for r in read("days.csv")}
    plans = np.zeros((n_days, n_cust, n_slots))
    for r in read("plans.csv"):
        plans[int(r["day"]), int(r["customer"]), int(r["slot_index"])] = float(r["offer"])
    reserve = np.zeros((n_days, n_slots))
    for r in read("reserve.csv"):
        reserve[int(r["day"]), int(r["slot_index"])] = float(r["reserve"])
    cbl = np.zeros((n_days, n_cust))
    for r in read("baselines.csv"):
        cbl[int(r["day"]), int(r["customer"])] = float(r["cbl_kw"])
    loads = np.zeros((n_days, n_cust, n_slots))
    for r in read("loads.csv"):
        loads[int(r["day"]), int(r["customer"]), int(r["slot_index"])] = float(r["base_load_kw"])
    mcp = np.zeros((n_days, n_slots))
    for r in read("mcp.csv"):
        mcp[int(r["day"]), int(r["slot_index"])] = float(r["mcp"])

    days = [
        EventDay(
            index=d, day_of_year=int(meta[d]["day_of_year"]),
            weekend=int(meta[d]["weekend"]), plans=plans[d], reserve=reserve[d],
            cbl=cbl[d], base_load=loads[d], frozen_mcp=mcp[d],
        )
        for d in range(n_days)
    ]
    return Dataset(days=days, dataset_id=manifest["dataset_id"],
                   seed=manifest["seed"], noise_sigma=manifest["noise_sigma"])


# --------------------------------------------------------------------------
# outcome logs and metrics
# --------------------------------------------------------------------------

def outcome_row(episode: int, day: EventDay, slot_index: int, outcome) -> dict:
    return {
        "episode": episode,
        "day": day.index,
        "slot": outcome.slot,
        "reserve": float(day.reserve[slot_index]),
        "mcp": outcome.mcp,
        "bid_price": outcome.bid.price,
        "bid_quantity": outcome.bid.quantity,
        "q_act": outcome.q_act,
        "execution_rate": outcome.execution_rate,
        "incentive_ratio": outcome.incentive_ratio,
        "win": int(outcome.win),
        "profit": outcome.profit,
    }


def write_outcome_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OUTCOME_FIELDS)
        for r in rows:
            w.writerow([
                r[k] if k in ("episode", "day", "slot", "win") else _fmt(r[k])
                for k in OUTCOME_FIELDS
            ])


def read_outcome_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = []
        for r in csv.DictReader(fh):
            rows.append({
                k: int(r[k]) if k in ("episode", "day", "slot", "win") else float(r[k])
                for k in OUTCOME_FIELDS
            })
        return rows


def compute_metrics(rows: list[dict]) -> RunMetrics:
    """Period-level rates from an outcome log; one row is one period."""
    if not rows:
        raise ValueError("cannot compute metrics from an empty outcome log")
    n = len(rows)
    success = sum(1 for r in rows if r["profit"] > 0)
    tight = sum(1 for r in rows
                if math.isfinite(r["execution_rate"]) and 0.8 <= r["execution_rate"] <= 1.2)
    loose = sum(1 for r in rows
                if math.isfinite(r["execution_rate"]) and 0.6 <= r["execution_rate"] <= 1.5)
    wins = sum(1 for r in rows if r["win"] and r["q_act"] > 0)
    return RunMetrics(
        periods=n,
        success_rate=success / n,
        rate_tight=tight / n,
        rate_loose=loose / n,
        win_rate=wins / n,
        total_profit=float(sum(r["profit"] for r in rows)),
    )


def write_metrics(metrics: RunMetrics, path: str | Path, tag: str = "") -> None:
    payload = metrics.to_dict()
    if tag:
        payload["tag"] = tag
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def write_profit_curve(curve: list[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "cumulative_profit"])
        for ep, value in enumerate(curve):
            w.writerow([ep, _fmt(value)])


# --------------------------------------------------------------------------
# agents and training protocols
# --------------------------------------------------------------------------

def make_agents(cfg: RunConfig, encoder: StateEncoder) -> tuple[Agent, Agent]:
    ag = cfg.agents
    seed = cfg.pipeline.seed

    def agent(role, stream, high):
        return Agent(
            role=role,
            state_dim=encoder.width,
            action_low=0.0,
            action_high=high,
            hidden_sizes=list(ag.for_role(role, "hidden_sizes")),
            actor_lr=ag.actor_lr,
            critic_lr=ag.critic_lr,
            buffer_capacity=ag.for_role(role, "buffer_capacity"),
            noise=make_noise(
                ag.noise_kind,
                start_scale=ag.for_role(role, "noise_start"),
                end_scale=ag.for_role(role, "noise_end"),
                decay_steps=ag.for_role(role, "noise_decay_steps"),
                uniform_eps=ag.for_role(role, "noise_uniform_eps"),
            ),
            rng=make_rng(seed, stream),
            final_init_scale=ag.final_init_scale,
            lr_decay_steps=ag.lr_decay_steps,
            lr_end_factor=ag.lr_end_factor,
        )

    price = agent("price", STREAM_AGENT_PRICE, cfg.scenario.price_cap)
    quantity = agent("quantity", STREAM_AGENT_QUANTITY, cfg.scenario.quantity_cap)
    return price, quantity


def make_env(cfg: RunConfig, population, frozen_prices: bool,
             rng: np.random.Generator | None = None,
             oracle_check: bool = True) -> BiddingEnv:
    return BiddingEnv(
        population=population,
        tou=cfg.scenario.tou,
        mcp_model=mcp_model(cfg),
        event=event_of(cfg),
        price_cap=cfg.scenario.price_cap,
        quantity_cap=cfg.scenario.quantity_cap,
        reward_scale=cfg.scenario.reward_scale,
        frozen_prices=frozen_prices,
        rng=rng,
        oracle_check=oracle_check,
    )


def _checked_learn(agent: Agent, batch_size: int, gamma: float, tau: float):
    diag = agent.learn_step(batch_size, gamma, tau)
    if diag is not None and not math.isfinite(diag["critic_loss"]):
        raise TrainingDiverged(
            f"{agent.role} agent critic loss became {diag['critic_loss']} "
            f"at learn step {agent.learn_steps}"
        )
    return diag


@dataclass
class TrainResult:
    profit_curve: list[float]
    rows: list[dict]            # per-slot training log, all episodes


def run_training_episode(
    env: BiddingEnv,
    encoder: StateEncoder,
    agents: tuple[Agent, Agent],
    day: EventDay,
    cfg: RunConfig,
    episode: int,
    rows: list[dict] | None,
    learn: bool = True,
    explore: bool = True,
) -> float:
    """One exploratory pass over one event day; returns its raw profit."""
    price_agent, quantity_agent = agents
    ag = cfg.agents
    state = env.reset(day)
    enc = encoder.encode(state)
    day_profit = 0.0
    for n in range(env.event.n_slots):
        a_price = price_agent.act(enc, explore=explore)
        a_qty = quantity_agent.act(enc, explore=explore)
        res = env.step(EnvAction(a_price, a_qty))
        next_enc = np.zeros(encoder.width) if res.terminal else encoder.encode(res.next_state)
        if learn:
            price_agent.observe(Transition(enc, a_price, res.reward, next_enc, res.terminal))
            quantity_agent.observe(Transition(enc, a_qty, res.reward, next_enc, res.terminal))
            _checked_learn(price_agent, ag.batch_size, ag.gamma, ag.tau)
            _checked_learn(quantity_agent, ag.batch_size, ag.gamma, ag.tau)
        if rows is not None:
            rows.append(outcome_row(episode, day, n, res.outcome))
        day_profit += res.outcome.profit
        enc = next_enc
    return day_profit


def train_offline(
    cfg: RunConfig,
    agents: tuple[Agent, Agent],
    dataset: Dataset,
    episodes: int | None = None,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Iterate full passes over the dataset, one episode per pass.

    Prices are redrawn from the scenario's noise model every episode; the
    dataset's frozen draws stay reserved for evaluation. The per-episode
    cumulative profit curve and the complete per-slot log are returned.
    """
    episodes = cfg.pipeline.offline_episodes if episodes is None else episodes
    env = make_env(cfg, build_population(cfg), frozen_prices=False,
                   rng=make_rng(cfg.pipeline.seed, STREAM_ENV, dataset.dataset_id))
    encoder = make_encoder(cfg)
    curve: list[float] = []
    rows: list[dict] = []
    for episode in range(episodes):
        total = 0.0
        for day in dataset.days:
            total += run_training_episode(env, encoder, agents, day, cfg, episode, rows)
        curve.append(total)
        if checkpoint_dir is not None and (
            (episode + 1) % cfg.pipeline.checkpoint_interval == 0
            or episode == episodes - 1
        ):
            for agent in agents:
                agent.save(checkpoint_dir)
    return TrainResult(profit_curve=curve, rows=rows)


def evaluate_policy(
    cfg: RunConfig,
    policy,
    dataset: Dataset,
    population=None,
) -> tuple[list[dict], RunMetrics]:
    """Replay the dataset's frozen price draws under a fixed policy.

    ``policy`` maps one encoded state to a (price, quantity) pair; agents and
    baselines share this exact code path, so comparisons differ only in the
    policy.
    """
    population = population or build_population(cfg)
    env = make_env(cfg, population, frozen_prices=True)
    encoder = make_encoder(cfg)
    rows: list[dict] = []
    for day in dataset.days:
        state = env.reset(day)
        enc = encoder.encode(state)
        for n in range(env.event.n_slots):
            a_price, a_qty = policy(enc)
            res = env.step(EnvAction(float(a_price), float(a_qty)))
            rows.append(outcome_row(0, day, n, res.outcome))
            if not res.terminal:
                enc = encoder.encode(res.next_state)
    return rows, compute_metrics(rows)


def agent_policy(agents: tuple[Agent, Agent]):
    price_agent, quantity_agent = agents
    def policy(enc):
        return (price_agent.act(enc, explore=False),
                quantity_agent.act(enc, explore=False))
    return policy


def train_online(
    cfg: RunConfig,
    agents: tuple[Agent, Agent],
    dataset: Dataset,
    learn: bool = True,
    explore: bool = True,
) -> tuple[list[dict], RunMetrics]:
    """Act-then-learn through the online test periods, in order.

    Each period is bid on before its clearing price is realized (asserted via
    the environment's draw counter), then its transition is stored and one
    learning step taken. With ``learn=False`` this reduces to evaluating the
    frozen policy on the same frozen draws.
    """
    price_agent, quantity_agent = agents
    ag = cfg.agents
    env = make_env(cfg, build_population(cfg), frozen_prices=True)
    encoder = make_encoder(cfg)
    rows: list[dict] = []
    periods_done = 0
    for day in dataset.days:
        state = env.reset(day)
        enc = encoder.encode(state)
        for n in range(env.event.n_slots):
            # acting must precede this period's price realization
            assert env.mcp_draws == periods_done, "clearing price realized before acting"
            a_price = price_agent.act(enc, explore=explore)
            a_qty = quantity_agent.act(enc, explore=explore)
            res = env.step(EnvAction(a_price, a_qty))
            periods_done += 1
            next_enc = np.zeros(encoder.width) if res.terminal else encoder.encode(res.next_state)
            if learn:
                price_agent.observe(Transition(enc, a_price, res.reward, next_enc, res.terminal))
                quantity_agent.observe(Transition(enc, a_qty, res.reward, next_enc, res.terminal))
                _checked_learn(price_agent, ag.batch_size, ag.gamma, ag.tau)
                _checked_learn(quantity_agent, ag.batch_size, ag.gamma, ag.tau)
            rows.append(outcome_row(0, day, n, res.outcome))
            enc = next_enc
    return rows, compute_metrics(rows)


# --------------------------------------------------------------------------
# grid search
# --------------------------------------------------------------------------

@dataclass
class GridTrial:
    params: dict
    metrics: RunMetrics
    qualified: bool


@dataclass
class GridSearchResult:
    qualified: bool
    best_params: dict | None
    best_metrics: RunMetrics | None
    trials: list[GridTrial] = field(default_factory=list)


def grid_search(cfg: RunConfig, grid: dict[str, list], mode: str = "offline") -> GridSearchResult:
    """Exhaustive search over dotted config overrides.

    A configuration qualifies when its validation success rate meets the
    mode's threshold. Among qualifying trials the highest validation profit
    wins; ties keep the lexicographically first candidate.
    """
    if not grid:
        raise ConfigError("grid search needs a non-empty grid")
    if mode not in ("offline", "online"):
        raise ConfigError(f"grid search mode must be offline or online, got {mode!r}")
    keys = sorted(grid)
    threshold = (cfg.pipeline.offline_success_threshold if mode == "offline"
                 else cfg.pipeline.online_success_threshold)
    trials: list[GridTrial] = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        candidate = cfg
        for key, value in params.items():
            candidate = override(candidate, key, value)
        population = build_population(candidate)
        if mode == "offline":
            train_set = build_dataset(candidate, candidate.pipeline.offline_days,
                                      DATASET_TRAIN, population)
            agents = make_agents(candidate, make_encoder(candidate))
            train_offline(candidate, agents, train_set)
            val_set = build_dataset(candidate, candidate.pipeline.validation_days,
                                    DATASET_VALIDATION, population)
            _, metrics = evaluate_policy(candidate, agent_policy(agents), val_set, population)
        else:
            train_set = build_dataset(candidate, candidate.pipeline.online_pretrain_days,
                                      DATASET_PRETRAIN, population)
            agents = make_agents(candidate, make_encoder(candidate))
            train_offline(candidate, agents, train_set,
                          episodes=candidate.pipeline.online_pretrain_episodes)
            online_set = build_dataset(candidate, candidate.pipeline.online_days,
                                       DATASET_ONLINE, population)
            _, metrics = train_online(candidate, agents, online_set)
        trials.append(GridTrial(params=params, metrics=metrics,
                                qualified=metrics.success_rate >= threshold))
    qualifying = [t for t in trials if t.qualified]
    if not qualifying:
        return GridSearchResult(qualified=False, best_params=None,
                                best_metrics=None, trials=trials)
    best = max(qualifying, key=lambda t: t.metrics.total_profit)
    # max keeps the first of equal-profit candidates: lexicographic tie-break
    return GridSearchResult(qualified=True, best_params=best.params,
                            best_metrics=best.metrics, trials=trials)
