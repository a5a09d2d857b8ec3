"""Path decomposition at the running maximum.

Counts excursions below the maximum that reach depth delta while the
maximum sits inside a level band.  The count is Poisson with mean
-log P[M > top]; the demo compares the empirical histogram with that
pmf and shows one decomposed sample path.
"""

import math

import numpy as np

from ddkit import McConfig, brownian, extract_excursions, max_tail
from ddkit.laws import DrawdownQuery
from ddkit.mc import excursion_counts, sample_trajectory

model = brownian()
delta = 1.0
band = (0.0, 1.0)

mean = -math.log(max_tail(model, DrawdownQuery(0.0, delta), band[1]))
# a grid walk undershoots true depths by O(sqrt(dt)), so count at two
# step sizes and extrapolate: 2 * fine - coarse cancels the sqrt term
coarse = McConfig(n_paths=4000, dt=0.01, t_max=12800.0, seed=21)
fine = McConfig(n_paths=4000, dt=0.0025, t_max=12800.0, seed=21)
counts_c, _ = excursion_counts(model, 0.0, band[1], delta, coarse)
counts_f, done = excursion_counts(model, 0.0, band[1], delta, fine)
extrap = 2.0 * counts_f.mean() - counts_c.mean()
print(f"band ]{band[0]:g}, {band[1]:g}], depth {delta:g}")
print(f"analytic mean {mean:.4f}   extrapolated {extrap:.4f}"
      f"   (fine {counts_f.mean():.4f}, coarse {counts_c.mean():.4f})")
print(f"var/mean {counts_f.var(ddof=1) / counts_f.mean():.4f}"
      f"   paths finished inside the horizon: {done.mean():.1%}\n")

print(f"  {'k':>3}  {'observed':>9}  {'poisson':>9}")
for k in range(7):
    obs = float(np.mean(counts_f == k))
    pmf = math.exp(-mean) * mean ** k / math.factorial(k)
    print(f"  {k:>3}  {obs:9.4f}  {pmf:9.4f}")

# one concrete path, decomposed; scan for a path that has a deep
# excursion inside its first 40 time units
for idx in range(40):
    path = sample_trajectory(model, 0.0, fine, n_steps=16000,
                             path_index=idx)
    records = extract_excursions(path, fine.dt, delta, band)
    if records:
        break
print(f"\npath {idx}: {len(records)} deep excursion(s) in the band")
for rec in records:
    print(f"  from level {rec.level:7.4f}  depth {rec.depth:6.3f}"
          f"  lifetime {rec.lifetime:8.2f}")
