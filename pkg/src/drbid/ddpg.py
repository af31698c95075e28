"""Two-agent deterministic policy gradient machinery.

A price agent and a quantity agent each own an actor-critic pair with target
networks, a replay buffer, and an exploration-noise process. The agents share
the environment state and reward but store and learn from their own scalar
action, so their parameters and buffers stay disjoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .neuralnet import AdamOptimizer, DenseNetwork, soft_update


@dataclass(frozen=True)
class Transition:
    """One (state, own action, shared reward, next state) record."""

    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Bounded ring of transitions with uniform sampling.

    Insertion overwrites the oldest record once capacity is reached; sampling
    draws indices uniformly with replacement over the occupied slots.
    """

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity)
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, tr: Transition) -> None:
        i = self._cursor
        self.states[i] = tr.state
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        self.next_states[i] = tr.next_state
        self.terminals[i] = float(tr.terminal)
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.terminals[idx],
        )


class GaussianNoise:
    """Zero-mean exploration noise whose scale decays linearly with use.

    Scales are fractions of the action range; the schedule never increases.
    ``uniform_eps`` keeps a small probability of replacing the action with a
    uniform draw over the whole range, so narrow reward plateaus stay
    discoverable after the Gaussian scale has decayed.
    """

    kind = "gaussian"

    def __init__(self, start_scale: float = 0.2, end_scale: float = 0.02,
                 decay_steps: int = 20_000, uniform_eps: float = 0.0):
        if start_scale < 0 or end_scale < 0 or end_scale > start_scale:
            raise ValueError("noise scales must satisfy 0 <= end <= start")
        if not 0.0 <= uniform_eps <= 1.0:
            raise ValueError(f"uniform_eps must lie in [0, 1], got {uniform_eps}")
        self.start_scale = start_scale
        self.end_scale = end_scale
        self.decay_steps = max(1, decay_steps)
        self.uniform_eps = uniform_eps

    def scale(self, step: int) -> float:
        frac = min(1.0, step / self.decay_steps)
        return self.start_scale + (self.end_scale - self.start_scale) * frac

    def sample(self, rng: np.random.Generator, step: int) -> float:
        return float(rng.normal(0.0, 1.0)) * self.scale(step)

    def reset(self) -> None:
        pass


class OUNoise:
    """Ornstein-Uhlenbeck exploration noise, selectable via config."""

    kind = "ou"

    def __init__(self, start_scale: float = 0.2, end_scale: float = 0.02,
                 decay_steps: int = 20_000, theta: float = 0.15,
                 uniform_eps: float = 0.0):
        self._gaussian = GaussianNoise(start_scale, end_scale, decay_steps, uniform_eps)
        self.theta = theta
        self._x = 0.0

    @property
    def uniform_eps(self) -> float:
        return self._gaussian.uniform_eps

    def scale(self, step: int) -> float:
        return self._gaussian.scale(step)

    def sample(self, rng: np.random.Generator, step: int) -> float:
        self._x += self.theta * (0.0 - self._x) + float(rng.normal(0.0, 1.0))
        return self._x * self.scale(step)

    def reset(self) -> None:
        self._x = 0.0


def make_noise(kind: str, **kwargs):
    if kind == "gaussian":
        return GaussianNoise(**kwargs)
    if kind == "ou":
        return OUNoise(**kwargs)
    raise ValueError(f"unknown noise kind {kind!r}")


class Agent:
    """One DDPG learner over a scalar action in [action_low, action_high].

    The actor squashes to [-1, 1] and is rescaled to physical units; the
    critic scores (state, normalized action) pairs. Target networks start as
    exact copies and track the online networks through soft updates.
    """

    def __init__(
        self,
        role: str,
        state_dim: int,
        action_low: float,
        action_high: float,
        hidden_sizes: list[int],
        actor_lr: float = 1e-4,
        critic_lr: float = 1e-3,
        buffer_capacity: int = 100_000,
        noise: GaussianNoise | OUNoise | None = None,
        rng: np.random.Generator | None = None,
        final_init_scale: float = 1e-3,
        lr_decay_steps: int | None = None,
        lr_end_factor: float = 0.1,
    ):
        if action_high <= action_low:
            raise ValueError(f"empty action range [{action_low}, {action_high}]")
        self.role = role
        self.state_dim = state_dim
        self.action_low = action_low
        self.action_high = action_high
        self.base_actor_lr = actor_lr
        self.base_critic_lr = critic_lr
        self.lr_decay_steps = lr_decay_steps
        self.lr_end_factor = lr_end_factor
        self.rng = rng or np.random.default_rng()
        self.actor = DenseNetwork(
            [state_dim] + hidden_sizes + [1], output_activation="tanh",
            rng=self.rng, final_init_scale=final_init_scale,
        )
        self.critic = DenseNetwork(
            [state_dim + 1] + hidden_sizes + [1], output_activation="identity",
            rng=self.rng,
        )
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = AdamOptimizer(self.actor, learning_rate=actor_lr)
        self.critic_opt = AdamOptimizer(self.critic, learning_rate=critic_lr)
        self.buffer = ReplayBuffer(buffer_capacity, state_dim)
        self.noise = noise or GaussianNoise()
        self.exploration_steps = 0
        self.learn_steps = 0

    # -- action scaling ----------------------------------------------------

    def to_normalized(self, physical: np.ndarray | float) -> np.ndarray | float:
        span = self.action_high - self.action_low
        return 2.0 * (physical - self.action_low) / span - 1.0

    def to_physical(self, normalized: np.ndarray | float) -> np.ndarray | float:
        span = self.action_high - self.action_low
        return self.action_low + (normalized + 1.0) * 0.5 * span

    def act(self, state_enc: np.ndarray, explore: bool,
            rng: np.random.Generator | None = None) -> float:
        """Actor forward, optional noise, clip to bounds, physical units."""
        raw = float(self.actor.predict(state_enc)[0, 0])
        action = float(self.to_physical(raw))
        if explore:
            gen = rng or self.rng
            eps = getattr(self.noise, "uniform_eps", 0.0)
            if eps > 0.0 and gen.random() < eps:
                action = float(gen.uniform(self.action_low, self.action_high))
            else:
                action += self.noise.sample(gen, self.exploration_steps) * (
                    self.action_high - self.action_low
                )
            self.exploration_steps += 1
        return float(np.clip(action, self.action_low, self.action_high))

    def observe(self, tr: Transition) -> None:
        self.buffer.add(tr)

    # -- learning ----------------------------------------------------------

    def _lr_factor(self) -> float:
        if self.lr_decay_steps is None:
            return 1.0
        frac = min(1.0, self.learn_steps / self.lr_decay_steps)
        return 1.0 + (self.lr_end_factor - 1.0) * frac

    def learn_step(self, batch_size: int, gamma: float, tau: float,
                   rng: np.random.Generator | None = None) -> dict | None:
        """One critic regression + one policy-gradient step + soft updates.

        Returns None (no-op) while the buffer holds fewer than batch_size
        transitions. Learning rates anneal linearly toward a floor when a
        decay horizon is configured, so late training stops rattling the fit.
        """
        if len(self.buffer) < batch_size:
            return None
        factor = self._lr_factor()
        self.actor_opt.learning_rate = self.base_actor_lr * factor
        self.critic_opt.learning_rate = self.base_critic_lr * factor
        gen = rng or self.rng
        states, actions, rewards, next_states, terminals = self.buffer.sample(batch_size, gen)
        critic_loss = self._update_critic(states, actions, rewards, next_states,
                                          terminals, gamma)
        actor_objective = self._update_actor(states)
        soft_update(self.target_actor, self.actor, tau)
        soft_update(self.target_critic, self.critic, tau)
        self.learn_steps += 1
        return {"critic_loss": critic_loss, "actor_objective": actor_objective}

    def critic_target(self, rewards: np.ndarray, next_states: np.ndarray,
                      terminals: np.ndarray, gamma: float) -> np.ndarray:
        """Bootstrapped regression target r + gamma * (1-terminal) * Q'(s', mu'(s'))."""
        next_actions = self.target_actor.predict(next_states)
        q_next = self.target_critic.predict(np.hstack([next_states, next_actions]))
        return rewards + gamma * (1.0 - terminals) * q_next[:, 0]

    def _update_critic(self, states, actions, rewards, next_states, terminals,
                       gamma) -> float:
        batch = len(states)
        y = self.critic_target(rewards, next_states, terminals, gamma)
        a_norm = np.reshape(self.to_normalized(actions), (batch, 1))
        q = self.critic.forward(np.hstack([states, a_norm]))[:, 0]
        err = q - y
        loss = float(np.mean(err * err))
        grads, _ = self.critic.backward((2.0 / batch) * err[:, None])
        self.critic_opt.step(self.critic, grads)
        return loss

    def _update_actor(self, states) -> float:
        batch = len(states)
        proposed = self.actor.forward(states)
        q = self.critic.forward(np.hstack([states, proposed]))
        objective = float(np.mean(q))
        # ascend mean Q: backprop -1/B through the critic to the action input,
        # then through the actor
        _, dq_dinput = self.critic.backward(np.full((batch, 1), -1.0 / batch))
        actor_grads, _ = self.actor.backward(dq_dinput[:, -1:])
        self.actor_opt.step(self.actor, actor_grads)
        return objective

    # -- persistence ---------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.actor.save(directory / f"{self.role}_actor.ckpt")
        self.critic.save(directory / f"{self.role}_critic.ckpt")
        self.target_actor.save(directory / f"{self.role}_target_actor.ckpt")
        self.target_critic.save(directory / f"{self.role}_target_critic.ckpt")
        manifest = {
            "role": self.role,
            "state_dim": self.state_dim,
            "action_low": self.action_low,
            "action_high": self.action_high,
            "actor_lr": self.actor_opt.learning_rate,
            "critic_lr": self.critic_opt.learning_rate,
            "buffer_capacity": self.buffer.capacity,
            "noise_kind": self.noise.kind,
            "exploration_steps": self.exploration_steps,
            "learn_steps": self.learn_steps,
        }
        with open(directory / f"{self.role}_manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)

    def restore(self, directory: str | Path) -> None:
        directory = Path(directory)
        self.actor = DenseNetwork.load(directory / f"{self.role}_actor.ckpt")
        self.critic = DenseNetwork.load(directory / f"{self.role}_critic.ckpt")
        self.target_actor = DenseNetwork.load(directory / f"{self.role}_target_actor.ckpt")
        self.target_critic = DenseNetwork.load(directory / f"{self.role}_target_critic.ckpt")
        self.actor_opt = AdamOptimizer(self.actor, self.actor_opt.learning_rate)
        self.critic_opt = AdamOptimizer(self.critic, self.critic_opt.learning_rate)
        with open(directory / f"{self.role}_manifest.json") as fh:
            manifest = json.load(fh)
        self.exploration_steps = manifest["exploration_steps"]
        self.learn_steps = manifest["learn_steps"]


def discounted_return(rewards, gamma: float) -> np.ndarray:
    """Reward-to-go per step, computed backward over one episode."""
    rewards = np.asarray(rewards, dtype=float)
    out = np.zeros_like(rewards)
    acc = 0.0
    for k in range(len(rewards) - 1, -1, -1):
        acc = rewards[k] + gamma * acc
        out[k] = acc
    return out
