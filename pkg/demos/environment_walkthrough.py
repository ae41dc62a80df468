"""Step the link-adaptation environment by hand with the two fixed policies.

Full resources (MR) keep outages rare at maximal energy; uniformly random
allocations (RA) save energy but pile up consecutive outages.

Run:  python demos/environment_walkthrough.py
"""

import numpy as np

from snla.agents import mr_policy, ra_policy
from snla.environment import EnvConfig, SubnetworkEnv

cfg = EnvConfig(weight_outage=0.9, weight_ee=0.1)
env = SubnetworkEnv(cfg)
obs = env.reset(seed=1)
print(f"episode mean INR {env.mean_inr_db:.2f} dB, first observation {obs:.2f} dB\n")

print(" step   policy  power dB  length   outage      counter  reward")
rng = np.random.default_rng(0)
for t in range(12):
    name, action = ("MR", mr_policy(cfg)) if t % 2 == 0 else ("RA", ra_policy(cfg, rng))
    out = env.step(action)
    print(f"{t:5d}   {name:>6}  {10 * np.log10(action.tx_snr_linear):8.2f}  {action.blocklength:6d}"
          f"  {out.outage_prob:10.3e}  {out.consec_count:7d}  {out.reward:6.3f}")

for name in ("MR", "RA"):
    energies, runs = [], []
    for ep in range(20):
        env.reset(seed=100 + ep)
        for _ in range(cfg.episode_steps):
            action = mr_policy(cfg) if name == "MR" else ra_policy(cfg, rng)
            out = env.step(action)
            energies.append(out.scaled_energy)
            runs.append(out.consec_count)
    frac = np.mean(energies) / (10 ** (cfg.max_tx_snr_db / 10) * cfg.max_blocklength)
    print(f"\n{name}: energy fraction {frac:.3f}, Pr(counter > {cfg.consec_threshold}) "
          f"{np.mean(np.array(runs) > cfg.consec_threshold):.4f}, longest run {max(runs)}")
