"""The fractional pseudophase behaves like a uniform random variable.

Tiny changes of the initial condition shift Xi by many turns (Xi ~ 1/eps),
so over a small ball of initial data its fractional part spreads evenly over
[0, 1).  A short ensemble is enough to see it; the acceptance suite uses
2000 samples at eps = 1e-4.
"""

import math

import numpy as np

from resphase import example_system
from resphase.experiments import UniformityConfig, run_uniformity

rep = run_uniformity(example_system(), UniformityConfig(sample_count=300, epsilon=5e-4, seed=1))
crit = 1.63 / math.sqrt(rep.n_used)
print(f"{rep.n_used} crossings, KS distance to uniform {rep.ks_statistic:.4f} (5% critical value {crit:.4f})")
print(f"fraction in [{rep.alpha}, {rep.beta}): {rep.fraction_in_interval:.3f}, uniform expects {rep.expected_fraction:.3f}")

hist, _ = np.histogram(rep.xi_frac, bins=10, range=(0, 1))
for i, h in enumerate(hist):
    print(f"  [{i / 10:.1f}, {(i + 1) / 10:.1f})  {'#' * int(h)}")
