"""Energy/reliability trade-off: sweep the outage weight and keep the non-dominated points.

Tabular Q-learning keeps this quick; swap ``ALGORITHM`` to "sac" for the
continuous-action learner (several minutes per weight).

Run:  python demos/pareto_sweep.py
"""

import tempfile
from pathlib import Path

from snla.environment import EnvConfig
from snla.harness import ExperimentConfig, run_experiment
from snla.metrics import read_pareto_csv

ALGORITHM = "ql"
out = Path(tempfile.mkdtemp(prefix="snla-pareto-"))
# a 0.95 availability target lets the coarse tabular policy through the gate
cfg = ExperimentConfig(env=EnvConfig(availability_target=0.95), algorithm=ALGORITHM,
                       trials=5, weight_list=[0.1, 0.3, 0.5, 0.7, 0.9],
                       test_episodes=50, output_dir=str(out))
records, front = run_experiment(cfg)

print("weight  gate    energy   exceedance")
for r in records:
    res = r.result
    print(f"{r.weight_outage:6.2f}  {str(res.gate_passed):5}  {res.mean_energy_fraction:7.4f}  "
          f"{res.exceedance_prob:10.5f}")
print("\nPareto front (from pareto.csv):")
for p in read_pareto_csv(out / "pareto.csv"):
    print(f"  {p.label:28s} energy {p.energy:.4f}  exceedance {p.exceedance:.5f}")
if not front:
    print("  empty; see", out / "EMPTY_FRONT.txt")
