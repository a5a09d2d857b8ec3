"""Joint transform E[exp(-alpha tau - beta M)] on a rate grid.

Shows the two sanity limits: alpha -> 0 recovers E[exp(-beta M)]
(drawdown happens eventually, tau drops out), and the value at beta = 0
for Brownian motion reproduces sech(sqrt(2 alpha) delta).
"""

import math

from ddkit import DrawdownQuery, brownian, drifted_brownian, joint_transform

bm = brownian()
dbm = drifted_brownian(1.0, 1.0)

print("standard Brownian motion, delta 1, beta 0")
print(f"  {'alpha':>8}  {'transform':>12}  {'sech ref':>12}")
for alpha in (1e-6, 0.01, 0.1, 0.5, 2.0, 8.0):
    r = joint_transform(bm, DrawdownQuery(0.0, 1.0, alpha=alpha))
    ref = 1.0 / math.cosh(math.sqrt(2.0 * alpha))
    print(f"  {alpha:8.3g}  {r.value:12.9f}  {ref:12.9f}")

print("\ndrifted Brownian motion mu=1, delta 1")
print(f"  {'alpha':>8}  {'beta':>6}  {'transform':>12}  {'abs err est':>12}")
for beta in (0.0, 0.5):
    for alpha in (1e-6, 0.1, 0.5, 2.0):
        r = joint_transform(dbm, DrawdownQuery(0.0, 1.0, alpha=alpha,
                                               beta=beta))
        print(f"  {alpha:8.3g}  {beta:6.2f}  {r.value:12.9f}"
              f"  {r.abs_error_estimate:12.3e}")
# the beta = 0 column tends to 1 as alpha -> 0: the drawdown is certain
