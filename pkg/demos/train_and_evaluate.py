"""Train a soft actor-critic link adapter, save it, and re-evaluate the checkpoint.

A short budget keeps the demo around two minutes; pass a larger one as the
first argument (25000 reproduces the desk-scale acceptance setup).

Run:  python demos/train_and_evaluate.py [budget_steps]
"""

import sys
import tempfile

import numpy as np

from snla.harness import ExperimentConfig, evaluate_checkpoint, run_trial

budget = int(sys.argv[1]) if len(sys.argv) > 1 else 8000
out = tempfile.mkdtemp(prefix="snla-demo-")

for algorithm in ("sac", "ra", "mr"):
    cfg = ExperimentConfig(algorithm=algorithm, train_budget_steps=budget, test_episodes=50,
                           weight_list=[0.9], output_dir=out)
    rec = run_trial(cfg, 0)
    res = rec.result
    frac = np.mean(np.asarray(res.episode_availability) >= cfg.env.availability_target)
    print(f"{algorithm:>3}: {len(rec.training_reward_trace):3d} training episodes, "
          f"gate {'passed' if res.gate_passed else 'failed'} ({frac:.2f} of episodes), "
          f"energy {res.mean_energy_fraction:.3f} of MR, "
          f"exceedance {res.exceedance_prob:.4f}, longest outage run {res.max_run_length}")
    if algorithm == "sac" and rec.checkpoint_path:
        again = evaluate_checkpoint(rec.checkpoint_path, cfg, seed=rec.test_seed)
        print(f"     checkpoint {rec.checkpoint_path} reproduces the test phase: {again == res}")

print(f"\nartifacts in {out}")
