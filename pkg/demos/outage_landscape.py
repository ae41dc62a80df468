"""How block outage falls with SINR and blocklength for a 50-bit packet.

Run:  python demos/outage_landscape.py
"""

import numpy as np

from snla.fblmath import LinkBudget, capacity, log_outage_probability

BITS = 50
sinr_db = np.arange(-5, 21, 5)
lengths = [50, 100, 250, 500, 1000]

print(f"log10 outage for a {BITS}-bit packet (rows: SINR dB, columns: blocklength)")
print("SINR dB " + "".join(f"{m:>9d}" for m in lengths))
for s in sinr_db:
    rho = 10 ** (s / 10)
    row = []
    for m in lengths:
        if BITS / m >= capacity(rho):
            row.append("   >=0.5 ")  # rate above capacity: outage is at least a coin flip
        else:
            row.append(f"{log_outage_probability(LinkBudget(rho, BITS, m)) / np.log(10):9.2f}")
    print(f"{s:7.0f} " + "".join(row))

# the reliability target used by the environment
target = 1e-5
print(f"\nsmallest blocklength meeting outage <= {target:g}:")
for s in sinr_db:
    rho = 10 ** (s / 10)
    ok = [m for m in range(10, 1001) if BITS / m < capacity(rho)
          and log_outage_probability(LinkBudget(rho, BITS, m)) <= np.log(target)]
    print(f"  {s:5.0f} dB -> {ok[0] if ok else 'none up to 1000'}")
