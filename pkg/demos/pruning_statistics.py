"""Empirical distribution of the pruning statistic against its closed forms.

Run with ``python3 demos/pruning_statistics.py``.
"""

import numpy as np

from iard.experiments import validate_distribution

for hyp, snr in (("h0", 17.0), ("h1", 17.0), ("h1", 21.0)):
    rows, ks = validate_distribution(hyp, snr, runs=2000, seed=3, bins=12)
    print(f"{hyp} at {snr:g} dB: KS distance {ks:.3f}")
    scale = 40 / max(rows[:, 1].max(), rows[:, 2].max())
    for rho, model, emp in rows:
        bar = "#" * int(round(emp * scale))
        mark = int(round(model * scale))
        line = list(bar.ljust(mark + 1))
        line[mark] = "|"
        print(f"  {rho:7.2f} {''.join(line)}")
    print()
