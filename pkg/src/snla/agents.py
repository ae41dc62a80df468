"""
Link-adaptation agents.

Every agent maps the scalar SINR observation (dB) to an :class:`Action`.
Learners work internally in the unit box [-1, 1]^2 (power in dB, blocklength)
and share the same interface, so the harness can swap them freely:

    unit_action(obs, deterministic) -> np.ndarray in [-1, 1]^2
    select_action(obs, deterministic) -> Action
    learn(obs, unit_action, reward, next_obs, done) -> dict | None
    end_episode()
"""

from __future__ import annotations

import numpy as np

from .environment import Action, EnvConfig, action_from_unit, action_to_unit, db_to_linear
from .nnopt import (
    Adam,
    DenseNet,
    ReplayBuffer,
    SquashedGaussianHead,
)

STATE_DIM = 1
ACTION_DIM = 2
# observation conditioning for the networks: typical SINRs sit in 0..25 dB
OBS_CENTER_DB = 10.0
OBS_SCALE_DB = 10.0


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (update {step})")
        self.step = step


class EmptyBatchError(ValueError):
    pass


class CompatibilityError(ValueError):
    """Checkpoint records do not fit the agent being loaded."""


def normalize_obs(obs_db):
    return (np.asarray(obs_db, dtype=np.float64) - OBS_CENTER_DB) / OBS_SCALE_DB


def _state_batch(obs_db):
    return normalize_obs(obs_db).reshape(-1, STATE_DIM)


def _check_batch(batch):
    if batch is None or len(batch[2]) == 0:
        raise EmptyBatchError("update needs at least one transition")


class Agent:
    """Shared plumbing: action mapping and a default no-op learner."""

    algorithm = "base"
    learns = False

    def __init__(self, config: EnvConfig):
        self.config = config

    def unit_action(self, obs_db, deterministic=False) -> np.ndarray:
        raise NotImplementedError

    def select_action(self, obs_db, deterministic=False) -> Action:
        return action_from_unit(self.unit_action(obs_db, deterministic), self.config)

    def act(self, obs_db, deterministic=False):
        """(Action for the environment, token to hand back to ``learn``)."""
        u = self.unit_action(obs_db, deterministic)
        return action_from_unit(u, self.config), u

    def warmup_act(self):
        """Uniform exploratory action used to prime replay buffers."""
        return self.act(None)

    def act_batch(self, obs_db, deterministic=True) -> list:
        """Actions for a vector of observations from parallel episodes."""
        return [self.act(o, deterministic)[0] for o in np.asarray(obs_db, dtype=float)]

    def learn(self, obs_db, unit_action, reward, next_obs_db, done=False):
        return None

    def remember(self, obs_db, unit_action, reward, next_obs_db, done=False):
        """Record a transition without learning from it (defaults to ``learn``)."""
        return self.learn(obs_db, unit_action, reward, next_obs_db, done)

    def end_episode(self) -> None:
        pass

    @property
    def annealing(self) -> bool:
        """True while a scheduled exploration rate is still decaying."""
        return False

    def checkpoint_records(self) -> dict:
        return {}

    def load_records(self, records: dict) -> None:
        if records:
            raise CompatibilityError(f"{self.algorithm} takes no checkpoint records")


class MaxResourcePolicy(Agent):
    """Always transmit at maximum power and blocklength."""

    algorithm = "mr"

    def unit_action(self, obs_db, deterministic=False):
        return np.ones(ACTION_DIM)

    def select_action(self, obs_db=None, deterministic=False):
        return Action.max_resources(self.config)


class RandomPolicy(Agent):
    """Uniform power in dB and uniform integer blocklength, ignoring the state."""

    algorithm = "ra"

    def __init__(self, config: EnvConfig, seed=0):
        super().__init__(config)
        self.rng = np.random.default_rng(seed)

    def select_action(self, obs_db=None, deterministic=False):
        cfg = self.config
        p_db = self.rng.uniform(cfg.min_tx_snr_db, cfg.max_tx_snr_db)
        m = int(self.rng.integers(cfg.min_blocklength, cfg.max_blocklength + 1))
        return Action(float(db_to_linear(p_db)), m)

    def unit_action(self, obs_db=None, deterministic=False):
        return self.rng.uniform(-1.0, 1.0, ACTION_DIM)

    def act(self, obs_db=None, deterministic=False):
        a = self.select_action()
        return a, action_to_unit(a, self.config)


def mr_policy(config: EnvConfig) -> Action:
    return Action.max_resources(config)


def ra_policy(config: EnvConfig, rng: np.random.Generator) -> Action:
    p_db = rng.uniform(config.min_tx_snr_db, config.max_tx_snr_db)
    m = int(rng.integers(config.min_blocklength, config.max_blocklength + 1))
    return Action(float(db_to_linear(p_db)), m)


def _finite_or_raise(nets, step):
    for net in nets:
        if not net.all_finite():
            raise TrainingDivergedError("non-finite network parameters", step)


class OffPolicyAgent(Agent):
    """Replay-buffer learner: one gradient update per ``learn`` call once primed."""

    learns = True

    def __init__(self, config, seed=0, batch_size=256, buffer_capacity=1_000_000,
                 gamma=0.99, retention=0.995, dtype=np.float32):
        super().__init__(config)
        self.dtype = dtype
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < retention <= 1.0:
            raise ValueError("retention must lie in (0, 1]")
        self.rng = np.random.default_rng(seed)
        self.batch_size = batch_size
        self.gamma = gamma
        self.retention = retention
        self.buffer = ReplayBuffer(STATE_DIM, ACTION_DIM, buffer_capacity)
        self.updates = 0

    def warmup_act(self):
        u = self.rng.uniform(-1.0, 1.0, ACTION_DIM)
        return action_from_unit(u, self.config), u

    def remember(self, obs_db, unit_action, reward, next_obs_db, done=False):
        self.buffer.push(normalize_obs(obs_db), unit_action, reward, normalize_obs(next_obs_db), done)

    def learn(self, obs_db, unit_action, reward, next_obs_db, done=False):
        self.remember(obs_db, unit_action, reward, next_obs_db, done)
        if len(self.buffer) < self.batch_size:
            return None
        return self.update(self.buffer.sample(self.batch_size, self.rng))

    def unit_actions(self, obs_db, deterministic=True) -> np.ndarray:
        raise NotImplementedError

    def act_batch(self, obs_db, deterministic=True):
        if not deterministic:
            return super().act_batch(obs_db, deterministic)
        units = self.unit_actions(_state_batch(obs_db))
        return [action_from_unit(u, self.config) for u in units]

    def update(self, batch):
        raise NotImplementedError


class SacAgent(OffPolicyAgent):
    """Soft actor-critic with twin critics, target critics and fixed temperature."""

    algorithm = "sac"

    def __init__(self, config: EnvConfig, seed=0, hidden=(256, 256), learning_rate=3e-4,
                 temperature=0.02, **kw):
        super().__init__(config, seed=seed, **kw)
        if temperature <= 0:
            raise ValueError("temperature must be > 0")
        self.temperature = temperature
        init = np.random.default_rng([seed, 1])
        self.actor = DenseNet([STATE_DIM, *hidden, 2 * ACTION_DIM], init, self.dtype)
        self.critic1 = DenseNet([STATE_DIM + ACTION_DIM, *hidden, 1], init, self.dtype)
        self.critic2 = DenseNet([STATE_DIM + ACTION_DIM, *hidden, 1], init, self.dtype)
        self.target1 = self.critic1.copy()
        self.target2 = self.critic2.copy()
        self.actor_opt = Adam(self.actor.params, learning_rate)
        self.critic1_opt = Adam(self.critic1.params, learning_rate)
        self.critic2_opt = Adam(self.critic2.params, learning_rate)

    def head(self, states) -> SquashedGaussianHead:
        return SquashedGaussianHead.from_output(self.actor.forward(states))

    def unit_action(self, obs_db, deterministic=False):
        head = self.head(_state_batch(obs_db))
        return head.sample(self.rng, deterministic=deterministic).action[0]

    def unit_actions(self, states, deterministic=True):
        return np.tanh(self.head(states).mean)

    def critic_targets(self, r, s2, d):
        """Soft Bellman targets with a freshly sampled next action."""
        nxt = self.head(s2).sample(self.rng)
        sa2 = np.concatenate([s2, nxt.action], axis=1)
        q_next = np.minimum(self.target1.forward(sa2), self.target2.forward(sa2))[:, 0]
        return r + self.gamma * (1.0 - d) * (q_next - self.temperature * nxt.log_prob)

    def critic_step(self, s, a, y):
        """One Adam step of each critic on the squared error to ``y``."""
        sa = np.concatenate([s, a], axis=1)
        losses = []
        for critic, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            err = critic.forward(sa)[:, 0] - y
            losses.append(float(np.mean(err * err)))
            grads, _ = critic.backward((2.0 / len(y)) * err[:, None])
            opt.step(grads)
        return losses

    def actor_step(self, s):
        """One Adam step of the policy on mean(alpha * log pi - min Q)."""
        n = len(s)
        alpha = self.temperature
        head = self.head(s)
        smp = head.sample(self.rng)
        sa_new = np.concatenate([s, smp.action], axis=1)
        q1 = self.critic1.forward(sa_new)[:, 0]
        q2 = self.critic2.forward(sa_new)[:, 0]
        use1 = q1 <= q2
        q_min = np.where(use1, q1, q2)
        _, g1 = self.critic1.backward(use1[:, None] / n, param_grads=False)
        _, g2 = self.critic2.backward((~use1)[:, None] / n, param_grads=False)
        dq_da = (g1 + g2)[:, STATE_DIM:]
        grad_out = head.grad_wrt_output(smp, -dq_da, np.full(n, alpha / n))
        # the actor's forward cache still holds the pass made by self.head(s)
        grads, _ = self.actor.backward(grad_out)
        self.actor_opt.step(grads)
        return float(np.mean(alpha * smp.log_prob - q_min)), float(-np.mean(smp.log_prob))

    def update(self, batch):
        _check_batch(batch)
        s, a, r, s2, d = batch
        y = self.critic_targets(r, s2, d)
        losses = self.critic_step(s, a, y)
        actor_loss, entropy = self.actor_step(s)
        self.target1.soft_update_from(self.critic1, self.retention)
        self.target2.soft_update_from(self.critic2, self.retention)
        self.updates += 1
        _finite_or_raise((self.actor, self.critic1, self.critic2), self.updates)
        return {
            "critic1_loss": losses[0],
            "critic2_loss": losses[1],
            "actor_loss": actor_loss,
            "entropy": entropy,
        }

    def checkpoint_records(self):
        return {"actor": self.actor}

    def load_records(self, records):
        _load_net(self.actor, records, "actor")


def _load_net(net: DenseNet, records: dict, name: str):
    if name not in records:
        raise CompatibilityError(f"checkpoint has no '{name}' record")
    other = records[name]
    if not isinstance(other, DenseNet) or other.layer_dims != net.layer_dims:
        dims = getattr(other, "layer_dims", np.shape(other))
        raise CompatibilityError(f"'{name}' dims {dims} != expected {net.layer_dims}")
    net.load_params(other.params)


class DdpgAgent(OffPolicyAgent):
    """Deterministic tanh actor, single critic, Gaussian exploration noise."""

    algorithm = "ddpg"

    def __init__(self, config, seed=0, hidden=(400, 300), learning_rate=1e-3,
                 exploration_std=0.1, **kw):
        super().__init__(config, seed=seed, **kw)
        self.exploration_std = exploration_std
        init = np.random.default_rng([seed, 1])
        self.actor = DenseNet([STATE_DIM, *hidden, ACTION_DIM], init, self.dtype)
        self.critic1 = DenseNet([STATE_DIM + ACTION_DIM, *hidden, 1], init, self.dtype)
        self._build_targets_and_opts(learning_rate)

    def _build_targets_and_opts(self, lr):
        self.actor_target = self.actor.copy()
        self.target1 = self.critic1.copy()
        self.actor_opt = Adam(self.actor.params, lr)
        self.critic1_opt = Adam(self.critic1.params, lr)

    def policy(self, states, net=None):
        return np.tanh((net or self.actor).forward(states))

    def unit_action(self, obs_db, deterministic=False):
        a = self.policy(_state_batch(obs_db))[0]
        if not deterministic:
            a = np.clip(a + self.exploration_std * self.rng.standard_normal(ACTION_DIM), -1.0, 1.0)
        return a

    def unit_actions(self, states, deterministic=True):
        return self.policy(states)

    def target_q(self, s2):
        a2 = self.policy(s2, self.actor_target)
        return self.target1.forward(np.concatenate([s2, a2], axis=1))[:, 0]

    def critic_targets(self, r, s2, d):
        return r + self.gamma * (1.0 - d) * self.target_q(s2)

    def _critic_step(self, critic, opt, sa, y):
        err = critic.forward(sa)[:, 0] - y
        grads, _ = critic.backward((2.0 / len(y)) * err[:, None])
        opt.step(grads)
        return float(np.mean(err * err))

    def _actor_step(self, s):
        n = len(s)
        a = self.policy(s)
        sa = np.concatenate([s, a], axis=1)
        q = self.critic1.forward(sa)[:, 0]
        _, gin = self.critic1.backward(np.full((n, 1), 1.0 / n), param_grads=False)
        dz = -gin[:, STATE_DIM:] * (1.0 - a * a)
        self.actor.forward(s)
        grads, _ = self.actor.backward(dz)
        self.actor_opt.step(grads)
        return float(-np.mean(q))

    def update(self, batch):
        _check_batch(batch)
        s, a, r, s2, d = batch
        y = self.critic_targets(r, s2, d)
        sa = np.concatenate([s, a], axis=1)
        closs = self._critic_step(self.critic1, self.critic1_opt, sa, y)
        aloss = self._actor_step(s)
        self.actor_target.soft_update_from(self.actor, self.retention)
        self.target1.soft_update_from(self.critic1, self.retention)
        self.updates += 1
        _finite_or_raise((self.actor, self.critic1), self.updates)
        return {"critic1_loss": closs, "actor_loss": aloss}

    def checkpoint_records(self):
        return {"actor": self.actor}

    def load_records(self, records):
        _load_net(self.actor, records, "actor")


class Td3Agent(DdpgAgent):
    """DDPG plus twin critics, clipped target smoothing and delayed actor updates."""

    algorithm = "td3"

    def __init__(self, config, seed=0, hidden=(400, 300), learning_rate=1e-3,
                 exploration_std=0.1, target_noise=0.2, noise_clip=0.5, policy_delay=2, **kw):
        self.target_noise = target_noise
        self.noise_clip = noise_clip
        self.policy_delay = policy_delay
        super().__init__(config, seed=seed, hidden=hidden, learning_rate=learning_rate,
                         exploration_std=exploration_std, **kw)
        init = np.random.default_rng([seed, 2])
        self.critic2 = DenseNet([STATE_DIM + ACTION_DIM, *hidden, 1], init, self.dtype)
        self.target2 = self.critic2.copy()
        self.critic2_opt = Adam(self.critic2.params, learning_rate)

    def target_q(self, s2, smoothing=True):
        a2 = self.policy(s2, self.actor_target)
        if smoothing:
            noise = np.clip(self.target_noise * self.rng.standard_normal(a2.shape),
                            -self.noise_clip, self.noise_clip)
            a2 = np.clip(a2 + noise, -1.0, 1.0)
        sa2 = np.concatenate([s2, a2], axis=1)
        return np.minimum(self.target1.forward(sa2), self.target2.forward(sa2))[:, 0]

    def update(self, batch):
        _check_batch(batch)
        s, a, r, s2, d = batch
        y = self.critic_targets(r, s2, d)
        sa = np.concatenate([s, a], axis=1)
        out = {
            "critic1_loss": self._critic_step(self.critic1, self.critic1_opt, sa, y),
            "critic2_loss": self._critic_step(self.critic2, self.critic2_opt, sa, y),
        }
        self.updates += 1
        if self.updates % self.policy_delay == 0:
            out["actor_loss"] = self._actor_step(s)
            self.actor_target.soft_update_from(self.actor, self.retention)
            self.target1.soft_update_from(self.critic1, self.retention)
            self.target2.soft_update_from(self.critic2, self.retention)
        _finite_or_raise((self.actor, self.critic1, self.critic2), self.updates)
        return out


class TabularQAgent(Agent):
    """Epsilon-greedy Q-learning on binned SINR and a power x blocklength grid."""

    algorithm = "ql"
    learns = True

    def __init__(self, config, seed=0, state_bins=20, power_levels=5, blocklength_levels=5,
                 learning_rate=0.1, gamma=0.99, epsilon=1.0, epsilon_decay=0.99,
                 epsilon_min=0.01, obs_range=(-40.0, 60.0)):
        super().__init__(config)
        self.rng = np.random.default_rng(seed)
        self.state_bins = state_bins
        self.power_levels = power_levels
        self.blocklength_levels = blocklength_levels
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.epsilon = epsilon
        self.epsilon_decay = epsilon_decay
        self.epsilon_min = epsilon_min
        self.obs_range = obs_range
        self.q_table = np.zeros((state_bins, power_levels * blocklength_levels))
        p_db = np.linspace(config.min_tx_snr_db, config.max_tx_snr_db, power_levels)
        m = np.rint(np.linspace(config.min_blocklength, config.max_blocklength, blocklength_levels))
        self.grid = [Action(float(db_to_linear(p)), int(k)) for p in p_db for k in m]

    @property
    def n_actions(self):
        return len(self.grid)

    def state_index(self, obs_db) -> int:
        lo, hi = self.obs_range
        x = (float(obs_db) - lo) / (hi - lo)
        return int(np.clip(np.floor(x * self.state_bins), 0, self.state_bins - 1))

    def action_index(self, obs_db, deterministic=False) -> int:
        if not deterministic and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        # argmax returns the lowest index among ties
        return int(np.argmax(self.q_table[self.state_index(obs_db)]))

    def select_action(self, obs_db, deterministic=False):
        return self.grid[self.action_index(obs_db, deterministic)]

    def act(self, obs_db, deterministic=False):
        idx = self.action_index(obs_db, deterministic)
        return self.grid[idx], idx

    def warmup_act(self):
        idx = int(self.rng.integers(self.n_actions))
        return self.grid[idx], idx

    def unit_action(self, obs_db, deterministic=False):
        return action_to_unit(self.select_action(obs_db, deterministic), self.config)

    def update(self, s_idx, a_idx, reward, s2_idx, done=False):
        boot = 0.0 if done else self.gamma * self.q_table[s2_idx].max()
        q = self.q_table[s_idx, a_idx]
        self.q_table[s_idx, a_idx] = q + self.learning_rate * (reward + boot - q)
        return self.q_table

    def learn(self, obs_db, action, reward, next_obs_db, done=False):
        a_idx = action if isinstance(action, (int, np.integer)) else self.grid.index(action)
        self.update(self.state_index(obs_db), a_idx, reward, self.state_index(next_obs_db), done)
        return None

    def end_episode(self):
        self.epsilon = max(self.epsilon_min, self.epsilon * self.epsilon_decay)

    @property
    def annealing(self):
        return self.epsilon > self.epsilon_min

    def checkpoint_records(self):
        return {
            "q_table": self.q_table,
            "action_grid": np.array([self.power_levels, self.blocklength_levels], dtype=float),
        }

    def load_records(self, records):
        table = records.get("q_table")
        if table is None or np.shape(table) != self.q_table.shape:
            raise CompatibilityError(
                f"q_table shape {np.shape(table)} != expected {self.q_table.shape}")
        grid = records.get("action_grid")
        if grid is None or list(np.asarray(grid).astype(int)) != [self.power_levels, self.blocklength_levels]:
            raise CompatibilityError("action grid mismatch")
        self.q_table[...] = table


ALGORITHMS = {
    "sac": SacAgent,
    "ddpg": DdpgAgent,
    "td3": Td3Agent,
    "ql": TabularQAgent,
    "ra": RandomPolicy,
    "mr": MaxResourcePolicy,
}


def make_agent(algorithm: str, config: EnvConfig, seed: int = 0, **kw) -> Agent:
    try:
        cls = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {sorted(ALGORITHMS)}") from None
    if cls is MaxResourcePolicy:
        return cls(config)
    return cls(config, seed=seed, **kw)
