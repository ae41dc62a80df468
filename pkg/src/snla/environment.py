"""
In-factory subnetwork link simulator.

One desired short-packet link shares spectrum with ``n_interferers``
independent subnetworks.  Time advances in mini-slots.  Every link sees
Rayleigh block fading (unit-mean exponential power gain, redrawn every
``coherence_slots`` slots on its own countdown).  Interferers emit
``message_duration``-slot messages; an idle interferer starts a new one with
probability ``activation_factor`` per slot, so ``activation_factor = 1``
keeps every interferer permanently on.

Noise power is normalised to one, so transmit power is the transmit SNR
``zeta`` and every interferer's mean received power is its mean INR.

The agent observes the SINR (dB) that the *current* channel realisation
would give at the reference transmit SNR ``zeta_max``.  This keeps the
observation independent of the previous action.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .fblmath import LinkBudget, outage_probability

OBS_CLIP_DB = (-40.0, 60.0)
# "aggregate": one mean INR per episode for the total interference, split
# evenly over interferers; "per_interferer": an independent draw for each.
INR_MODES = ("aggregate", "per_interferer")
# "energy": 1 - normalised energy (linear in E); "bits_per_energy": min-max of b/E.
EE_NORMALIZATIONS = ("energy", "bits_per_energy")


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class EnvStateError(RuntimeError):
    pass


class ActionBoundsError(ValueError):
    pass


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass
class EnvConfig:
    n_interferers: int = 5
    activation_factor: float = 1.0
    message_duration: int = 10
    mean_inr_db_low: float = -10.0
    mean_inr_db_high: float = 5.0
    max_tx_snr_db: float = 20.0
    min_tx_snr_db: float = 0.0
    max_blocklength: int = 1000
    min_blocklength: int = 50
    info_bits: int = 50
    outage_threshold: float = 1e-5
    availability_target: float = 0.98
    consec_threshold: int = 2
    weight_outage: float = 0.3
    weight_ee: float = 0.7
    coherence_slots: int = 10
    episode_steps: int = 500
    rng_seed: int = 0
    inr_mode: str = "aggregate"
    ee_normalization: str = "energy"

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(name, msg)

        for name in ("n_interferers", "message_duration", "max_blocklength",
                     "min_blocklength", "info_bits", "consec_threshold",
                     "coherence_slots", "episode_steps", "rng_seed"):
            v = getattr(self, name)
            need(isinstance(v, (int, np.integer)) and not isinstance(v, bool),
                 name, f"must be an integer, got {v!r}")
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, str):
                need(math.isfinite(v), f.name, "must be finite")
        need(self.inr_mode in INR_MODES, "inr_mode", f"must be one of {INR_MODES}")
        need(self.ee_normalization in EE_NORMALIZATIONS, "ee_normalization",
             f"must be one of {EE_NORMALIZATIONS}")

        need(self.n_interferers >= 0, "n_interferers", "must be >= 0")
        need(0.0 <= self.activation_factor <= 1.0, "activation_factor", "must lie in [0, 1]")
        need(self.message_duration >= 1, "message_duration", "must be >= 1")
        need(self.mean_inr_db_low <= self.mean_inr_db_high, "mean_inr_db_high",
             "must be >= mean_inr_db_low")
        need(self.min_tx_snr_db < self.max_tx_snr_db, "min_tx_snr_db", "must be < max_tx_snr_db")
        need(self.min_blocklength >= 1, "min_blocklength", "must be >= 1")
        need(self.min_blocklength < self.max_blocklength, "min_blocklength",
             "must be < max_blocklength")
        need(self.info_bits >= 1, "info_bits", "must be >= 1")
        need(0.0 < self.outage_threshold < 1.0, "outage_threshold", "must lie in (0, 1)")
        need(0.0 < self.availability_target <= 1.0, "availability_target", "must lie in (0, 1]")
        need(self.consec_threshold >= 0, "consec_threshold", "must be >= 0")
        need(0.0 <= self.weight_outage <= 1.0, "weight_outage", "must lie in [0, 1]")
        need(0.0 <= self.weight_ee <= 1.0, "weight_ee", "must lie in [0, 1]")
        need(abs(self.weight_outage + self.weight_ee - 1.0) < 1e-9, "weight_ee",
             "weight_outage + weight_ee must equal 1")
        need(self.coherence_slots >= 1, "coherence_slots", "must be >= 1")
        need(self.episode_steps >= 1, "episode_steps", "must be >= 1")
        need(self.rng_seed >= 0, "rng_seed", "must be >= 0")

    def with_weight(self, weight_outage: float) -> "EnvConfig":
        d = asdict(self)
        d.update(weight_outage=float(weight_outage), weight_ee=1.0 - float(weight_outage))
        return EnvConfig(**d)

    @property
    def max_tx_snr(self) -> float:
        return float(db_to_linear(self.max_tx_snr_db))

    @property
    def min_tx_snr(self) -> float:
        return float(db_to_linear(self.min_tx_snr_db))

    @property
    def min_energy(self) -> float:
        return self.min_tx_snr * self.min_blocklength

    @property
    def max_energy(self) -> float:
        return self.max_tx_snr * self.max_blocklength


@dataclass(frozen=True)
class Action:
    """Transmit SNR (linear) and blocklength chosen for one mini-slot."""

    tx_snr_linear: float
    blocklength: int

    def check(self, config: EnvConfig) -> None:
        # small slack so dB round-trips of the box edges stay legal
        lo, hi = config.min_tx_snr * (1 - 1e-12), config.max_tx_snr * (1 + 1e-12)
        if not (math.isfinite(self.tx_snr_linear) and lo <= self.tx_snr_linear <= hi):
            raise ActionBoundsError(
                f"tx_snr_linear {self.tx_snr_linear} outside [{config.min_tx_snr}, {config.max_tx_snr}]")
        if int(self.blocklength) != self.blocklength:
            raise ActionBoundsError(f"blocklength must be integral, got {self.blocklength}")
        if not config.min_blocklength <= self.blocklength <= config.max_blocklength:
            raise ActionBoundsError(
                f"blocklength {self.blocklength} outside [{config.min_blocklength}, {config.max_blocklength}]")

    @classmethod
    def max_resources(cls, config: EnvConfig) -> "Action":
        return cls(config.max_tx_snr, config.max_blocklength)

    @classmethod
    def min_resources(cls, config: EnvConfig) -> "Action":
        return cls(config.min_tx_snr, config.min_blocklength)


def action_from_unit(u, config: EnvConfig) -> Action:
    """Map a point of [-1, 1]^2 onto the action box.

    Power is affine in dB, blocklength affine and rounded to an integer.
    """
    u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    p_db = config.min_tx_snr_db + 0.5 * (u[0] + 1.0) * (config.max_tx_snr_db - config.min_tx_snr_db)
    m = config.min_blocklength + 0.5 * (u[1] + 1.0) * (config.max_blocklength - config.min_blocklength)
    m = int(np.clip(np.rint(m), config.min_blocklength, config.max_blocklength))
    return Action(float(db_to_linear(p_db)), m)


def action_to_unit(action: Action, config: EnvConfig) -> np.ndarray:
    p_db = float(linear_to_db(action.tx_snr_linear))
    u0 = 2.0 * (p_db - config.min_tx_snr_db) / (config.max_tx_snr_db - config.min_tx_snr_db) - 1.0
    u1 = 2.0 * (action.blocklength - config.min_blocklength) / (
        config.max_blocklength - config.min_blocklength) - 1.0
    return np.clip(np.array([u0, u1]), -1.0, 1.0)


@dataclass
class InterfererState:
    mean_inr_db: float
    tx_power_linear: float
    fading_gain: float
    remaining_slots: int
    coherence_countdown: int

    @property
    def active(self) -> bool:
        return self.remaining_slots > 0


@dataclass(frozen=True)
class StepOutcome:
    next_state_sinr_db: float
    reward: float
    outage_prob: float
    scaled_energy: float
    outage_flag: bool
    consec_count: int
    violation_flag: bool


def aggregate_interference(interferers) -> float:
    """Received interference power sum_k p_k |h_k|^2 delta_k (noise units)."""
    total = 0.0
    for s in interferers:
        if s.remaining_slots > 0:
            total += s.tx_power_linear * s.fading_gain
    return total


def advance_traffic_and_fading(interferers, config: EnvConfig, rng: np.random.Generator):
    """Move every interferer one mini-slot forward, in place.

    A running message loses one slot; an interferer that is (or just became)
    idle starts a new ``message_duration`` message with probability
    ``activation_factor``.  Fading is redrawn when its countdown expires.
    Returns the same list for convenience.
    """
    if not interferers:
        return interferers
    starts = rng.random(len(interferers))
    for s, u in zip(interferers, starts):
        if s.remaining_slots > 0:
            s.remaining_slots -= 1
        if s.remaining_slots == 0 and u < config.activation_factor:
            s.remaining_slots = config.message_duration
        s.coherence_countdown -= 1
        if s.coherence_countdown <= 0:
            s.fading_gain = float(rng.exponential())
            s.coherence_countdown = config.coherence_slots
    return interferers


def energy_efficiency_score(scaled_energy: float, config: EnvConfig) -> float:
    """Min-max normalised efficiency over the action box: 1 at minimum energy, 0 at maximum.

    With ``ee_normalization="energy"`` the score is linear in the consumed
    energy, matching the mean-energy objective; ``"bits_per_energy"``
    normalises b/E instead, which is hyperbolic in E.
    """
    e_min, e_max = config.min_energy, config.max_energy
    if config.ee_normalization == "energy":
        score = (e_max - scaled_energy) / (e_max - e_min)
    else:
        b = config.info_bits
        hi, lo = b / e_min, b / e_max
        score = (b / scaled_energy - lo) / (hi - lo)
    return min(1.0, max(0.0, score))


class SubnetworkEnv:
    """Gym-style environment: ``reset()`` then repeated ``step(action)``."""

    def __init__(self, config: EnvConfig | None = None):
        self.config = config if config is not None else EnvConfig()
        self.config.validate()
        self.rng = None
        self.interferers: list[InterfererState] = []
        self.desired_gain = 1.0
        self.desired_countdown = 0
        self.consec_count = 0
        self.t = 0

    def reset(self, seed: int | None = None) -> float:
        cfg = self.config
        cfg.validate()
        if seed is None:
            seed = cfg.rng_seed
        if int(seed) < 0:
            raise ConfigError("rng_seed", "must be >= 0")
        self.rng = np.random.default_rng(int(seed))
        rng = self.rng
        n = cfg.n_interferers
        if cfg.inr_mode == "aggregate":
            total_db = rng.uniform(cfg.mean_inr_db_low, cfg.mean_inr_db_high)
            inr_db = np.full(n, total_db - 10.0 * math.log10(n)) if n else np.zeros(0)
        else:
            inr_db = rng.uniform(cfg.mean_inr_db_low, cfg.mean_inr_db_high, n)
        gains = rng.exponential(size=n)
        on = rng.random(n) < cfg.activation_factor
        remaining = rng.integers(1, cfg.message_duration + 1, n)
        countdown = rng.integers(1, cfg.coherence_slots + 1, n)
        self.interferers = [
            InterfererState(
                mean_inr_db=float(inr_db[k]),
                tx_power_linear=float(db_to_linear(inr_db[k])),
                fading_gain=float(gains[k]),
                remaining_slots=int(remaining[k]) if on[k] else 0,
                coherence_countdown=int(countdown[k]),
            )
            for k in range(n)
        ]
        self.desired_gain = float(rng.exponential())
        self.desired_countdown = int(rng.integers(1, cfg.coherence_slots + 1))
        self.consec_count = 0
        self.t = 0
        return self.observe()

    @property
    def interference(self) -> float:
        return aggregate_interference(self.interferers)

    @property
    def mean_inr_db(self) -> float:
        """Mean aggregate INR of the episode in dB (all interferers on); -inf if none."""
        total = sum(s.tx_power_linear for s in self.interferers)
        return 10.0 * math.log10(total) if total > 0 else -math.inf

    def sinr(self, tx_snr_linear: float) -> float:
        return tx_snr_linear * self.desired_gain / (1.0 + self.interference)

    def observe(self, tx_snr_linear: float | None = None) -> float:
        """SINR in dB at the reference transmit SNR (``zeta_max`` by default), clipped."""
        if self.rng is None:
            raise EnvStateError("environment not reset")
        ref = self.config.max_tx_snr if tx_snr_linear is None else tx_snr_linear
        rho = self.sinr(ref)
        db = 10.0 * math.log10(rho) if rho > 0 else -math.inf
        return min(max(db, OBS_CLIP_DB[0]), OBS_CLIP_DB[1])

    def outage_for(self, action: Action) -> float:
        """Outage probability ``action`` would see on the current realisation."""
        rho = self.sinr(action.tx_snr_linear)
        if rho <= 0.0:
            return 1.0
        return outage_probability(LinkBudget(rho, self.config.info_bits, int(action.blocklength)))

    def _advance(self):
        cfg = self.config
        advance_traffic_and_fading(self.interferers, cfg, self.rng)
        self.desired_countdown -= 1
        if self.desired_countdown <= 0:
            self.desired_gain = float(self.rng.exponential())
            self.desired_countdown = cfg.coherence_slots

    def step(self, action: Action) -> StepOutcome:
        if self.rng is None:
            raise EnvStateError("step() called before reset()")
        cfg = self.config
        action.check(cfg)
        eps = self.outage_for(action)
        outage = eps > cfg.outage_threshold
        self.consec_count = self.consec_count + 1 if outage else 0
        violation = self.consec_count > cfg.consec_threshold
        energy = action.tx_snr_linear * action.blocklength
        reward = -cfg.weight_outage * violation + cfg.weight_ee * energy_efficiency_score(energy, cfg)

        self._advance()
        self.t += 1
        return StepOutcome(
            next_state_sinr_db=self.observe(),
            reward=float(reward),
            outage_prob=float(eps),
            scaled_energy=float(energy),
            outage_flag=bool(outage),
            consec_count=int(self.consec_count),
            violation_flag=bool(violation),
        )
