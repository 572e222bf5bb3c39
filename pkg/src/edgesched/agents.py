"""Control policies: TD3, DDPG, a factored DQN, and static/threshold baselines.

All learning agents share one interface: act(obs, raw, t, explore, rng) for
action selection and learn(buffer, rng) for one gradient step. Continuous
agents think in the [-1, 1] unit box and are mapped to core/MB allocations
at the boundary; the replay buffer always stores domain-unit actions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .domain import (
    CPU_MAX,
    CPU_MIN,
    MEM_MAX,
    MEM_MIN,
    ActionVector,
    RawMetrics,
    StateVector,
    ValidationError,
    action_from_unit,
)
from .nets import AdamState, Mlp, soft_update
from .replay import ReplayBuffer

__all__ = [
    "TrainStats",
    "Td3Hyper",
    "DqnHyper",
    "Td3Agent",
    "DdpgAgent",
    "DqnAgent",
    "BaseKScheduler",
    "build_agent",
    "exploration_sigma",
    "epsilon_at",
    "batch_units_from_domain",
    "AGENT_KINDS",
]

AGENT_KINDS = ("td3", "ddpg", "dqn", "basek")


@dataclass(frozen=True)
class TrainStats:
    """Outcome of one learn() call."""

    skipped: bool = False
    critic_losses: tuple[float, ...] = ()
    actor_loss: float | None = None
    actor_updated: bool = False
    targets_updated: bool = False


@dataclass(frozen=True)
class Td3Hyper:
    """Twin-critic deterministic policy gradient hyperparameters."""

    gamma: float = 0.99
    tau: float = 0.005
    policy_freq: int = 2
    smoothing_sigma: float = 0.2
    smoothing_clip: float = 0.5
    sigma_init: float = 0.3
    tau_decay: float = 1000.0
    batch_size: int = 64
    warmup_transitions: int = 200
    hidden: int = 256
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    buffer_capacity: int = 100000

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValidationError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.policy_freq < 1:
            raise ValidationError(f"policy_freq must be >= 1, got {self.policy_freq}")
        if self.smoothing_clip <= 0:
            raise ValidationError("smoothing_clip must be positive")
        if self.smoothing_sigma < 0 or self.sigma_init < 0:
            raise ValidationError("noise scales must be >= 0")
        if self.tau_decay <= 0:
            raise ValidationError("tau_decay must be positive")
        if not (0.0 <= self.tau <= 1.0):
            raise ValidationError(f"tau must be in [0, 1], got {self.tau}")
        if self.batch_size < 1 or self.warmup_transitions < 0:
            raise ValidationError("bad batch_size/warmup_transitions")
        if self.hidden < 1 or self.buffer_capacity < 1:
            raise ValidationError("bad hidden width or buffer capacity")


@dataclass(frozen=True)
class DqnHyper:
    """Factored discrete-control hyperparameters."""

    gamma: float = 0.99
    levels: int = 10
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 500
    target_sync_every: int = 100
    batch_size: int = 64
    warmup_transitions: int = 200
    hidden: int = 256
    lr: float = 3e-4
    buffer_capacity: int = 100000

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValidationError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.levels < 2:
            raise ValidationError(f"need >= 2 allocation levels, got {self.levels}")
        if not (0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0):
            raise ValidationError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.epsilon_decay_steps < 1 or self.target_sync_every < 1:
            raise ValidationError("bad epsilon_decay_steps/target_sync_every")
        if self.batch_size < 1 or self.warmup_transitions < 0:
            raise ValidationError("bad batch_size/warmup_transitions")
        if self.hidden < 1 or self.buffer_capacity < 1:
            raise ValidationError("bad hidden width or buffer capacity")


def exploration_sigma(hyper: Td3Hyper, t: int) -> float:
    """Action-noise scale at global environment step t: sigma_init * exp(-t/tau_decay)."""
    return hyper.sigma_init * float(np.exp(-t / hyper.tau_decay))


def epsilon_at(hyper: DqnHyper, t: int) -> float:
    """Linear epsilon decay from epsilon_start to epsilon_end over decay_steps."""
    frac = min(t / hyper.epsilon_decay_steps, 1.0)
    return hyper.epsilon_start - (hyper.epsilon_start - hyper.epsilon_end) * frac


def batch_units_from_domain(actions: np.ndarray) -> np.ndarray:
    """Map a (B, 2N) array of core/MB allocations into the [-1, 1] unit box."""
    n = actions.shape[-1] // 2
    cpu = actions[..., :n]
    mem = actions[..., n:]
    u_cpu = (cpu - CPU_MIN) / (CPU_MAX - CPU_MIN) * 2.0 - 1.0
    u_mem = (mem - MEM_MIN) / (MEM_MAX - MEM_MIN) * 2.0 - 1.0
    return np.concatenate([u_cpu, u_mem], axis=-1)


class Td3Agent:
    """Deterministic actor with twin critics, smoothed delayed targets.

    n_critics=1 with smoothing disabled and policy_freq=1 degrades this to
    the single-critic variant; both paths share the same update code, so
    the min-over-critics target is exercised identically.
    """

    kind = "td3"
    trainable = True

    def __init__(self, n_services: int, hyper: Td3Hyper,
                 init_rng: np.random.Generator, n_critics: int = 2):
        if n_services < 1:
            raise ValidationError("need at least one service")
        if n_critics < 1:
            raise ValidationError("need at least one critic")
        self.n_services = n_services
        self.state_dim = 4 * n_services
        self.action_dim = 2 * n_services
        self.hyper = hyper
        self.actor = Mlp.create(self.state_dim, hyper.hidden, self.action_dim,
                                "tanh", init_rng)
        self.critics = [Mlp.create(self.state_dim + self.action_dim, hyper.hidden,
                                   1, "linear", init_rng)
                        for _ in range(n_critics)]
        self.target_actor = self.actor.copy()
        self.target_critics = [c.copy() for c in self.critics]
        self.actor_opt = AdamState(self.actor.params(), learning_rate=hyper.actor_lr)
        self.critic_opts = [AdamState(c.params(), learning_rate=hyper.critic_lr)
                            for c in self.critics]
        self.critic_update_count = 0
        self.actor_update_count = 0
        # diagnostics from the most recent target computation, for tests
        self.last_td_diag: dict | None = None

    def select_action(self, state: StateVector, t: int, explore: bool,
                      rng: np.random.Generator) -> ActionVector:
        """Greedy actor output, plus decaying Gaussian noise when exploring.

        The first warmup_transitions exploration steps are uniform over the
        unit box to seed the buffer before the policy drives the cluster.
        """
        if explore and t < self.hyper.warmup_transitions:
            return action_from_unit(rng.uniform(-1.0, 1.0, self.action_dim))
        u, _ = self.actor.forward(state.vec)
        if explore:
            sigma = exploration_sigma(self.hyper, t)
            u = u + sigma * rng.standard_normal(self.action_dim)
        return action_from_unit(np.clip(u, -1.0, 1.0))

    def act(self, obs: StateVector, raw: RawMetrics, t: int, explore: bool,
            rng: np.random.Generator) -> ActionVector:
        return self.select_action(obs, t, explore, rng)

    def smoothed_target_action(self, next_states: np.ndarray,
                               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray | None]:
        """Target-actor batch output with clipped Gaussian smoothing noise."""
        a, _ = self.target_actor.forward(next_states)
        noise = None
        if self.hyper.smoothing_sigma > 0:
            noise = np.clip(
                rng.normal(0.0, self.hyper.smoothing_sigma, size=a.shape),
                -self.hyper.smoothing_clip, self.hyper.smoothing_clip)
            assert np.all(np.abs(noise) <= self.hyper.smoothing_clip)
            a = a + noise
        return np.clip(a, -1.0, 1.0), noise

    def td_targets(self, rewards: np.ndarray, next_states: np.ndarray,
                   dones: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Bootstrapped targets y = r + gamma * min_i Q'_i(s', a') * (1 - done)."""
        a_next, noise = self.smoothed_target_action(next_states, rng)
        sa_next = np.concatenate([next_states, a_next], axis=1)
        q_next = [tc.forward(sa_next)[0] for tc in self.target_critics]
        q_min = q_next[0] if len(q_next) == 1 else np.minimum.reduce(q_next)
        y = rewards[:, None] + self.hyper.gamma * q_min * (1.0 - dones)[:, None]
        self.last_td_diag = {
            "q_targets": tuple(q.copy() for q in q_next),
            "q_min": q_min.copy(),
            "y": y.copy(),
            "rewards": rewards.copy(),
            "dones": dones.copy(),
            "smoothing_noise": None if noise is None else noise.copy(),
        }
        return y

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator) -> TrainStats:
        """One critic update, with a delayed actor/target update when due."""
        if len(buffer) <= self.hyper.batch_size:
            return TrainStats(skipped=True)
        batch = buffer.sample(self.hyper.batch_size, rng)
        b = len(batch)
        unit_actions = batch_units_from_domain(batch.actions)
        y = self.td_targets(batch.rewards, batch.next_states, batch.dones, rng)
        sa = np.concatenate([batch.states, unit_actions], axis=1)
        losses = []
        for critic, opt in zip(self.critics, self.critic_opts):
            q, cache = critic.forward(sa)
            err = q - y
            loss = float(np.mean(err ** 2))
            if not np.isfinite(loss):
                raise ValidationError(
                    f"non-finite critic loss at update {self.critic_update_count + 1}")
            grads, _ = critic.backward(cache, 2.0 * err / b)
            opt.step(critic.params(), grads)
            critic.check_finite()
            losses.append(loss)
        self.critic_update_count += 1

        if self.critic_update_count % self.hyper.policy_freq != 0:
            return TrainStats(critic_losses=tuple(losses))

        # delayed actor step: ascend mean Q_1(s, mu(s)) through the frozen critic
        u, actor_cache = self.actor.forward(batch.states)
        sa_pi = np.concatenate([batch.states, u], axis=1)
        q_pi, critic_cache = self.critics[0].forward(sa_pi)
        actor_loss = float(-np.mean(q_pi))
        if not np.isfinite(actor_loss):
            raise ValidationError(
                f"non-finite actor loss at update {self.actor_update_count + 1}")
        _, sa_grad = self.critics[0].backward(critic_cache, -np.ones((b, 1)) / b)
        actor_grads, _ = self.actor.backward(actor_cache, sa_grad[:, self.state_dim:])
        self.actor_opt.step(self.actor.params(), actor_grads)
        self.actor.check_finite()
        self.actor_update_count += 1

        soft_update(self.target_actor, self.actor, self.hyper.tau)
        for tc, c in zip(self.target_critics, self.critics):
            soft_update(tc, c, self.hyper.tau)
        return TrainStats(critic_losses=tuple(losses), actor_loss=actor_loss,
                          actor_updated=True, targets_updated=True)

    def learn(self, buffer: ReplayBuffer, rng: np.random.Generator) -> TrainStats:
        return self.train_step(buffer, rng)

    def policy_net(self) -> Mlp:
        return self.actor

    def load_policy(self, net: Mlp) -> None:
        if net.layer_sizes != self.actor.layer_sizes or net.output_activation != "tanh":
            raise ValidationError("loaded network does not match the actor architecture")
        self.actor = net
        self.target_actor = net.copy()


class DdpgAgent(Td3Agent):
    """Single critic, no target smoothing, actor updated every step."""

    kind = "ddpg"

    def __init__(self, n_services: int, hyper: Td3Hyper, init_rng: np.random.Generator):
        super().__init__(
            n_services,
            replace(hyper, smoothing_sigma=0.0, policy_freq=1),
            init_rng,
            n_critics=1,
        )


class DqnAgent:
    """Per-dimension discrete control: 2N heads, each over a fixed level grid.

    A joint grid over all allocation dimensions would have levels^(2N)
    actions; factoring per head keeps the network one forward pass while
    each head still sees the full state.
    """

    kind = "dqn"
    trainable = True

    def __init__(self, n_services: int, hyper: DqnHyper, init_rng: np.random.Generator):
        if n_services < 1:
            raise ValidationError("need at least one service")
        self.n_services = n_services
        self.state_dim = 4 * n_services
        self.n_heads = 2 * n_services
        self.hyper = hyper
        self.cpu_grid = CPU_MIN + np.arange(hyper.levels) * (CPU_MAX - CPU_MIN) / (hyper.levels - 1)
        self.mem_grid = MEM_MIN + np.arange(hyper.levels) * (MEM_MAX - MEM_MIN) / (hyper.levels - 1)
        self.q_net = Mlp.create(self.state_dim, hyper.hidden,
                                self.n_heads * hyper.levels, "linear", init_rng)
        self.target_net = self.q_net.copy()
        self.opt = AdamState(self.q_net.params(), learning_rate=hyper.lr)
        self.train_step_count = 0

    def levels_to_action(self, levels: np.ndarray) -> ActionVector:
        n = self.n_services
        return ActionVector(cpu_alloc=self.cpu_grid[levels[:n]],
                            mem_alloc=self.mem_grid[levels[n:]])

    def action_to_levels(self, actions: np.ndarray) -> np.ndarray:
        """Nearest grid index per dimension for a (B, 2N) domain-unit batch."""
        n = self.n_services
        k_cpu = np.rint((actions[..., :n] - CPU_MIN) * (self.hyper.levels - 1)
                        / (CPU_MAX - CPU_MIN))
        k_mem = np.rint((actions[..., n:] - MEM_MIN) * (self.hyper.levels - 1)
                        / (MEM_MAX - MEM_MIN))
        k = np.concatenate([k_cpu, k_mem], axis=-1)
        return np.clip(k, 0, self.hyper.levels - 1).astype(int)

    def greedy_levels(self, state: StateVector) -> np.ndarray:
        q, _ = self.q_net.forward(state.vec)
        return np.argmax(q.reshape(self.n_heads, self.hyper.levels), axis=1)

    def act(self, obs: StateVector, raw: RawMetrics, t: int, explore: bool,
            rng: np.random.Generator) -> ActionVector:
        if explore and t < self.hyper.warmup_transitions:
            levels = rng.integers(0, self.hyper.levels, size=self.n_heads)
            return self.levels_to_action(levels)
        levels = self.greedy_levels(obs)
        if explore:
            eps = epsilon_at(self.hyper, t)
            randomize = rng.random(self.n_heads) < eps
            if randomize.any():
                levels = levels.copy()
                levels[randomize] = rng.integers(0, self.hyper.levels,
                                                 size=int(randomize.sum()))
        return self.levels_to_action(levels)

    def learn(self, buffer: ReplayBuffer, rng: np.random.Generator) -> TrainStats:
        """Per-head TD(0) update with a periodically hard-synced target net."""
        if len(buffer) <= self.hyper.batch_size:
            return TrainStats(skipped=True)
        batch = buffer.sample(self.hyper.batch_size, rng)
        b = len(batch)
        h, nl = self.n_heads, self.hyper.levels
        levels = self.action_to_levels(batch.actions)

        q_next, _ = self.target_net.forward(batch.next_states)
        best_next = q_next.reshape(b, h, nl).max(axis=2)
        y = batch.rewards[:, None] + self.hyper.gamma * best_next * (1.0 - batch.dones)[:, None]

        q_all, cache = self.q_net.forward(batch.states)
        q_grid = q_all.reshape(b, h, nl)
        rows = np.arange(b)[:, None]
        heads = np.arange(h)[None, :]
        q_taken = q_grid[rows, heads, levels]
        err = q_taken - y
        loss = float(np.mean(err ** 2))
        if not np.isfinite(loss):
            raise ValidationError(
                f"non-finite loss at train step {self.train_step_count + 1}")
        grad_grid = np.zeros((b, h, nl))
        grad_grid[rows, heads, levels] = 2.0 * err / (b * h)
        grads, _ = self.q_net.backward(cache, grad_grid.reshape(b, h * nl))
        self.opt.step(self.q_net.params(), grads)
        self.q_net.check_finite()
        self.train_step_count += 1
        synced = self.train_step_count % self.hyper.target_sync_every == 0
        if synced:
            soft_update(self.target_net, self.q_net, 1.0)
        return TrainStats(critic_losses=(loss,), targets_updated=synced)

    def policy_net(self) -> Mlp:
        return self.q_net

    def load_policy(self, net: Mlp) -> None:
        if net.layer_sizes != self.q_net.layer_sizes or net.output_activation != "linear":
            raise ValidationError("loaded network does not match the value-net architecture")
        self.q_net = net
        self.target_net = net.copy()


class BaseKScheduler:
    """Non-learning allocator: static initial requests, or a threshold rule.

    Threshold mode nudges each allocation by +/-20 percent when measured
    utilization leaves the [0.3, 0.8] band; static mode ignores the input
    entirely.
    """

    kind = "basek"
    trainable = False

    def __init__(self, initial: ActionVector, mode: str = "static",
                 step_frac: float = 0.2, high_util: float = 0.8, low_util: float = 0.3):
        if mode not in ("static", "threshold"):
            raise ValidationError(f"unknown baseline mode {mode!r}")
        if not (0.0 < step_frac < 1.0):
            raise ValidationError("step_frac must be in (0, 1)")
        if not (0.0 <= low_util < high_util <= 1.0):
            raise ValidationError("need 0 <= low_util < high_util <= 1")
        self.initial = initial
        self.mode = mode
        self.step_frac = step_frac
        self.high_util = high_util
        self.low_util = low_util

    def decide(self, raw: RawMetrics) -> ActionVector:
        if self.mode == "static":
            return self.initial
        up, down = 1.0 + self.step_frac, 1.0 - self.step_frac

        def adjust(alloc: np.ndarray, used: np.ndarray) -> np.ndarray:
            util = used / alloc
            out = alloc.copy()
            out[util > self.high_util] *= up
            out[util < self.low_util] *= down
            return out

        return ActionVector(cpu_alloc=adjust(raw.cpu_alloc, raw.cpu_used),
                            mem_alloc=adjust(raw.mem_alloc, raw.mem_used))

    def act(self, obs: StateVector, raw: RawMetrics, t: int, explore: bool,
            rng: np.random.Generator) -> ActionVector:
        return self.decide(raw)

    def learn(self, buffer: ReplayBuffer, rng: np.random.Generator) -> TrainStats:
        return TrainStats(skipped=True)


def build_agent(kind: str, n_services: int, init_rng: np.random.Generator,
                td3: Td3Hyper | None = None, dqn: DqnHyper | None = None,
                initial_action: ActionVector | None = None,
                basek_mode: str = "static"):
    """Construct any of the four policies behind the common interface."""
    if kind == "td3":
        return Td3Agent(n_services, td3 or Td3Hyper(), init_rng)
    if kind == "ddpg":
        return DdpgAgent(n_services, td3 or Td3Hyper(), init_rng)
    if kind == "dqn":
        return DqnAgent(n_services, dqn or DqnHyper(), init_rng)
    if kind == "basek":
        if initial_action is None:
            raise ValidationError("baseline scheduler needs the initial allocation")
        return BaseKScheduler(initial_action, mode=basek_mode)
    raise ValidationError(f"unknown agent kind {kind!r}; expected one of {AGENT_KINDS}")
