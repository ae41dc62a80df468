"""
Trial orchestration: train, test, gate, checkpoint, sweep.

A trial trains one agent at one outage weight, runs the deterministic test
phase over ``test_episodes`` fresh episodes, reduces the logs with
:mod:`snla.metrics` and saves a checkpoint only when the availability gate
holds.  Every random stream is seeded from a hash of
``(master_seed, trial_index, tag)``, so an experiment is a pure function of its
config.

Artifacts written by :func:`run_experiment` (all floats at 17 significant
digits)::

    manifest.json            config echo, per-trial seeds, package versions
    pareto.csv               label,energy,exceedance   (non-dominated points)
    points.csv               label,energy,exceedance   (all gate-passing points)
    trials.csv               trial,weight_outage,gate_passed,mean_energy_fraction,
                             exceedance_prob,max_run_length,checkpoint
                             (checkpoint file name, relative to the output dir)
    EMPTY_FRONT.txt          only when no trial passed the gate
    trial_NNN/reward_trace.csv     episode,mean_reward
    trial_NNN/episodes.csv         episode,availability,mean_scaled_energy
    trial_NNN/availability_cdf.csv value,cdf   (per-episode availability)
    trial_NNN/energy_cdf.csv       value,cdf   (per-step scaled energy)
    trial_NNN/consec_cdf.csv       value,cdf   (outage run lengths)
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .agents import ALGORITHMS, CompatibilityError, OffPolicyAgent, make_agent
from .environment import ConfigError, EnvConfig, SubnetworkEnv
from .nnopt import dump_checkpoint, load_checkpoint

WORKERS_ENV = "SNLA_WORKERS"
WEIGHT_RECORD = "weight_outage"
RANDOM_WEIGHT_RANGE = (0.05, 0.95)


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    algorithm: str = "sac"
    trials: int = 1
    train_budget_steps: int = 25_000
    warmup_steps: int = 1000
    convergence_window: int = 10
    convergence_tol: float = 0.005
    test_episodes: int = 1000
    test_steps: int = 500
    weight_list: list = field(default_factory=list)
    master_seed: int = 0
    output_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    def validate(self):
        self.env.validate()
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"must be one of {sorted(ALGORITHMS)}")
        for name in ("trials", "test_episodes", "test_steps", "convergence_window"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(name, "must be >= 1")
        for name in ("train_budget_steps", "warmup_steps", "master_seed"):
            if int(getattr(self, name)) < 0:
                raise ConfigError(name, "must be >= 0")
        if not self.convergence_tol >= 0:
            raise ConfigError("convergence_tol", "must be >= 0")
        for w in self.weight_list:
            if not 0.0 < w < 1.0:
                raise ConfigError("weight_list", f"weights must lie in (0, 1), got {w}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["env"] = asdict(self.env)
        return d


@dataclass
class TrialRecord:
    trial_index: int
    weight_outage: float
    checkpoint_path: str | None
    result: metrics.TrialResult
    training_reward_trace: list
    test_seed: int
    algorithm: str = ""
    train_steps: int = 0

    @property
    def label(self) -> str:
        return f"{self.algorithm} w={self.weight_outage:.4f} t={self.trial_index}"


# --- config files ---------------------------------------------------------

_EXPERIMENT_KEYS = {f.name: f for f in fields(ExperimentConfig) if f.name != "env"}
_ENV_KEYS = {f.name: f for f in fields(EnvConfig)}


def _coerce(name, text, default):
    try:
        if name == "weight_list":
            return [float(x) for x in text.split(",") if x.strip()]
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(name, f"cannot parse {text!r}") from exc
    return text


def parse_config_text(text: str) -> ExperimentConfig:
    """Flat ``key = value`` lines, ``#`` starts a comment; unknown keys are errors.

    Keys are the fields of :class:`ExperimentConfig` and :class:`EnvConfig`.
    """
    env_defaults = EnvConfig()
    env_kw, exp_kw = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _ENV_KEYS:
            env_kw[key] = _coerce(key, value, getattr(env_defaults, key))
        elif key in _EXPERIMENT_KEYS:
            f = _EXPERIMENT_KEYS[key]
            default = f.default_factory() if callable(f.default_factory) else f.default
            exp_kw[key] = _coerce(key, value, default)
        else:
            raise ConfigError(key, "unknown configuration key")
    return ExperimentConfig(env=EnvConfig(**env_kw), **exp_kw)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# --- seeds ----------------------------------------------------------------

def derive_seed(*parts) -> int:
    """Stable 63-bit seed from the textual form of ``parts``."""
    text = "/".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little") >> 1


def trial_weight(config: ExperimentConfig, trial_index: int) -> float:
    if config.weight_list:
        return float(config.weight_list[trial_index % len(config.weight_list)])
    rng = np.random.default_rng(derive_seed(config.master_seed, trial_index, "weight"))
    return float(rng.uniform(*RANDOM_WEIGHT_RANGE))


# --- phases ---------------------------------------------------------------

def converged(trace, window: int, tol: float) -> bool:
    """Mean reward of the last window improved on the one before by less than ``tol``."""
    if len(trace) < 2 * window:
        return False
    recent = float(np.mean(trace[-window:]))
    before = float(np.mean(trace[-2 * window:-window]))
    return recent - before < tol


def train_agent(agent, env_config: EnvConfig, config: ExperimentConfig, seed: int):
    """Run training episodes until convergence or budget; returns (trace, steps)."""
    env = SubnetworkEnv(env_config)
    budget = config.train_budget_steps
    if not agent.learns or budget == 0:
        return [], 0
    primes = isinstance(agent, OffPolicyAgent)
    trace = []
    steps = 0
    episode = 0
    while steps < budget:
        obs = env.reset(derive_seed(seed, "episode", episode))
        total = 0.0
        n = min(env_config.episode_steps, budget - steps)
        for _ in range(n):
            if primes and steps < config.warmup_steps:
                action, token = agent.warmup_act()
                out = env.step(action)
                agent.remember(obs, token, out.reward, out.next_state_sinr_db)
            else:
                action, token = agent.act(obs)
                out = env.step(action)
                # episodes end by time limit only, never in a terminal state
                agent.learn(obs, token, out.reward, out.next_state_sinr_db, False)
            total += out.reward
            obs = out.next_state_sinr_db
            steps += 1
        agent.end_episode()
        trace.append(total / n)
        episode += 1
        # a plateau under a still-decaying exploration rate is not convergence
        if not agent.annealing and converged(trace, config.convergence_window, config.convergence_tol):
            break
    return trace, steps


def run_test_phase(agent, env_config: EnvConfig, episodes: int, steps: int, seed: int):
    """Deterministic rollouts of ``episodes`` fresh episodes stepped in lockstep."""
    if hasattr(agent, "rng"):
        agent.rng = np.random.default_rng(derive_seed(seed, "policy"))
    envs = [SubnetworkEnv(env_config) for _ in range(episodes)]
    obs = np.array([env.reset(derive_seed(seed, "episode", k)) for k, env in enumerate(envs)])
    logs = [metrics.EpisodeLog() for _ in range(episodes)]
    for _ in range(steps):
        actions = agent.act_batch(obs, deterministic=True)
        for k, (env, action) in enumerate(zip(envs, actions)):
            out = env.step(action)
            logs[k].append(out)
            obs[k] = out.next_state_sinr_db
    return logs


def _check_writable(directory: Path):
    try:
        directory.mkdir(parents=True, exist_ok=True)
        # unique name: parallel trials probe the same directory
        with tempfile.TemporaryFile(dir=directory):
            pass
    except OSError as exc:
        raise OSError(f"output directory {directory} is not writable: {exc}") from exc


def checkpoint_bytes(agent, weight: float) -> bytes:
    records = dict(agent.checkpoint_records())
    records[WEIGHT_RECORD] = np.array([weight])
    return dump_checkpoint(agent.algorithm, records)


def run_trial(config: ExperimentConfig, trial_index: int, weight: float | None = None,
              save_logs: bool = False):
    """Train, test and gate one agent.  Returns a :class:`TrialRecord`.

    With ``save_logs`` the raw test-phase episode logs are returned as well.
    """
    config.validate()
    out_dir = Path(config.output_dir)
    _check_writable(out_dir)
    w = trial_weight(config, trial_index) if weight is None else float(weight)
    env_config = config.env.with_weight(w)
    seed = config.master_seed
    agent = make_agent(config.algorithm, env_config, seed=derive_seed(seed, trial_index, "agent"))
    trace, steps = train_agent(agent, env_config, config, derive_seed(seed, trial_index, "train"))
    test_seed = derive_seed(seed, trial_index, "test")
    logs = run_test_phase(agent, env_config, config.test_episodes, config.test_steps, test_seed)
    result = metrics.summarize(logs, env_config, w)
    ckpt = None
    if result.gate_passed:
        path = out_dir / f"{config.algorithm}_trial{trial_index:03d}.snla"
        path.write_bytes(checkpoint_bytes(agent, w))
        ckpt = str(path)
    record = TrialRecord(trial_index, w, ckpt, result, trace, test_seed, config.algorithm, steps)
    return (record, logs) if save_logs else record


def evaluate_checkpoint(checkpoint_path, config: ExperimentConfig, seed: int | None = None,
                        save_logs: bool = False):
    """Deterministic test phase of a saved policy on fresh seeded episodes."""
    data = Path(checkpoint_path).read_bytes()
    algorithm, records = load_checkpoint(data)
    if algorithm not in ALGORITHMS:
        raise CompatibilityError(f"unknown algorithm tag {algorithm!r}")
    weight = records.pop(WEIGHT_RECORD, None)
    w = float(weight[0]) if weight is not None else config.env.weight_outage
    env_config = config.env.with_weight(w)
    agent = make_agent(algorithm, env_config, seed=0)
    agent.load_records(records)
    if seed is None:
        seed = derive_seed(config.master_seed, "evaluate")
    logs = run_test_phase(agent, env_config, config.test_episodes, config.test_steps, seed)
    result = metrics.summarize(logs, env_config, w)
    return (result, logs) if save_logs else result


# --- experiments ------------------------------------------------------------

def worker_count(default: int = 1) -> int:
    text = os.environ.get(WORKERS_ENV, "")
    try:
        n = int(text) if text else default
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"must be an integer, got {text!r}") from None
    return max(1, n)


def _trial_job(args):
    config, index = args
    return run_trial(config, index, save_logs=True)


def write_trial_artifacts(directory: Path, record: TrialRecord, logs) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    metrics.write_csv(directory / "reward_trace.csv", ("episode", "mean_reward"),
                      enumerate(record.training_reward_trace))
    res = record.result
    metrics.write_csv(directory / "episodes.csv",
                      ("episode", "availability", "mean_scaled_energy"),
                      zip(range(len(logs)), res.episode_availability, res.episode_mean_energy))
    metrics.write_cdf_csv(directory / "availability_cdf.csv", res.episode_availability)
    metrics.write_cdf_csv(directory / "energy_cdf.csv",
                          np.concatenate([log.scaled_energies for log in logs]))
    runs = [k for k, c in res.run_length_histogram.items() for _ in range(c)] or [0]
    metrics.write_cdf_csv(directory / "consec_cdf.csv", runs)


def run_experiment(config: ExperimentConfig, workers: int | None = None):
    """All trials of ``config``; returns ``(records, front)`` and writes artifacts."""
    config.validate()
    out = Path(config.output_dir)
    _check_writable(out)
    n_workers = worker_count() if workers is None else max(1, workers)
    jobs = [(config, i) for i in range(config.trials)]
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
            done = list(pool.map(_trial_job, jobs))
    else:
        done = [_trial_job(j) for j in jobs]

    records = []
    for record, logs in done:
        write_trial_artifacts(out / f"trial_{record.trial_index:03d}", record, logs)
        records.append(record)

    points = [r.result.pareto_point(r.label) for r in records if r.result.gate_passed]
    front = metrics.pareto_filter(points)
    metrics.write_pareto_csv(out / "points.csv", points)
    metrics.write_pareto_csv(out / "pareto.csv", front)
    metrics.write_csv(
        out / "trials.csv",
        ("trial", "weight_outage", "gate_passed", "mean_energy_fraction",
         "exceedance_prob", "max_run_length", "checkpoint"),
        ((r.trial_index, r.weight_outage, r.result.gate_passed, r.result.mean_energy_fraction,
          r.result.exceedance_prob, r.result.max_run_length,
          Path(r.checkpoint_path).name if r.checkpoint_path else "")
         for r in records),
    )
    warning = out / "EMPTY_FRONT.txt"
    if not front:
        warning.write_text("no trial passed the availability gate; the Pareto front is empty\n",
                           encoding="utf-8")
    elif warning.exists():
        warning.unlink()
    manifest = {
        "config": config.to_dict(),
        "seeds": {str(r.trial_index): {"weight_outage": r.weight_outage,
                                        "agent": derive_seed(config.master_seed, r.trial_index, "agent"),
                                        "train": derive_seed(config.master_seed, r.trial_index, "train"),
                                        "test": r.test_seed}
                  for r in records},
        "versions": {"snla": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return records, front
