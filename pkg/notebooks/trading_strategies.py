# %% [markdown]
# # Rolling bond positions and the no-arbitrage check
#
# Hold a bonds of maturity T1 and b of maturity T2. At a stopping time
# sigma1 the T1 position is sold and the proceeds buy T2 bonds; at sigma2
# everything is closed out into the long bond. The gains are read off the
# path, and the discounted value is tested for the supermartingale
# property.

# %%
import numpy as np

from longbond import ModelParams, flat_curve
from longbond.paths import TimeGrid, simulate_path
from longbond.strategies import (
    Ensemble,
    LevelCrossing,
    bundled_strategies,
    evaluate,
    no_arbitrage_check,
    roll_example,
    supermartingale_test,
    tameness_check,
)

params = ModelParams(1.0, flat_curve(0.05, 10.0))
grid = TimeGrid.uniform(3.0, 2**-7)

# %%
s = roll_example(params, 1.0, 2.0, 1.0, 0.5, sigma1=LevelCrossing(1.0, 0.6), sigma2=2.0, level=2.0)
rep = evaluate(s, params, simulate_path(params, grid, seed=3))
print("endowment", s.endowment(params))
print("gains at t = 1, 2, 3:", rep.gains[[grid.index(1.0), grid.index(2.0), -1]])
print("max |self-financing residual|:", np.max(np.abs(rep.residual)))

# %% [markdown]
# Long-only positions are tame. Their discounted value shows no upward
# drift beyond Monte Carlo noise.

# %%
ens = Ensemble(grid, 20_000, seed=1)
print(tameness_check(s, params, ens))
sm = supermartingale_test(s, params, ens, [0.0, 1.0, 2.0, 3.0])
for t, m, se in zip(sm.checkpoints, sm.means, sm.stderrs):
    print(f"t = {t:.1f}: {m:.5f} +- {se:.5f}")

# %% [markdown]
# Zero-cost strategies should not produce a positive expected discounted
# payoff.

# %%
for strat in bundled_strategies(params):
    out = no_arbitrage_check(strat, params, Ensemble(TimeGrid.uniform(2.0, 2**-7), 20_000, seed=11))
    print(f"{out['name']:32s} {out['mean']:+.2e} +- {out['stderr']:.1e}  passed: {out['passed']}")
