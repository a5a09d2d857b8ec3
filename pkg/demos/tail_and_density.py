"""Tail and density of the running maximum at the drawdown time.

Prints P[M > y] and its density for each catalog model on a short
grid.  For standard Brownian motion the tail is exactly exp(-y/delta),
which makes a handy eyeball check on the first block.
"""

import numpy as np

from ddkit import (DrawdownQuery, brownian, drifted_brownian,
                   geometric_brownian, ornstein_uhlenbeck, tail_curve)

cases = [
    (brownian(), 0.0, 1.0, np.linspace(0.0, 4.0, 9)),
    (drifted_brownian(1.0, 1.0), 0.0, 1.0, np.linspace(0.0, 4.0, 9)),
    (geometric_brownian(0.05, 0.09), 1.0, 0.3, np.linspace(1.0, 2.0, 9)),
    (ornstein_uhlenbeck(1.0), 0.0, 1.0, np.linspace(0.0, 2.0, 9)),
]

for model, x, delta, grid in cases:
    q = DrawdownQuery(x=x, delta=delta)
    curve = tail_curve(model, q, grid)
    print(f"\n{model.model_id}  (start {x}, drawdown size {delta})")
    print(f"  {'y':>6}  {'P[M > y]':>12}  {'density':>12}")
    for y, t, d in zip(curve.grid, curve.tail, curve.density):
        print(f"  {y:6.2f}  {t:12.6f}  {d:12.6f}")
    # mass left of the grid end plus the remaining tail must be one
    total = np.trapezoid(curve.density, curve.grid) + curve.tail[-1]
    print(f"  integral + tail = {total:.6f}")
