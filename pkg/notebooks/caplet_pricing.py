# %% [markdown]
# # Caplets: Monte Carlo against the normal approximation
#
# A caplet on the simple rate over [T, T'] is a put on the T' bond. For
# small sigma the model price is close to a Black-type formula with
# volatility sigma * log(P(0,T)/P(0,T')).

# %%
import numpy as np

from longbond import MCConfig, ModelParams, flat_curve
from longbond.pricing import CapletSpec, caplet_price, caplet_price_approx

params = ModelParams(0.2, flat_curve(0.05, 10.0))
cfg = MCConfig(n_paths=100_000, seed=42)

# %%
print(" cap     MC          stderr      approx")
for cap in np.linspace(0.03, 0.08, 6):
    spec = CapletSpec(1.0, 1.25, float(cap))
    mc = caplet_price(params, 0.0, spec, cfg)
    print(f"{cap:.3f}  {mc.mean:.6f}  {mc.stderr:.6f}  {caplet_price_approx(params, 0.0, spec):.6f}")

# %% [markdown]
# The approximation degrades as sigma grows, since it linearises the
# exponent of the terminal bond price.

# %%
spec = CapletSpec(1.0, 1.25, 0.05)
for sigma in (0.1, 0.5, 1.0, 2.0):
    p = ModelParams(sigma, params.curve)
    mc = caplet_price(p, 0.0, spec, cfg)
    print(f"sigma {sigma:.1f}: MC {mc.mean:.6f} +- {mc.stderr:.6f}, approx {caplet_price_approx(p, 0.0, spec):.6f}")
