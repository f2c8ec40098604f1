"""A critical model with <Vbar v_L, v_L> = 0.

Offspring live on the diagonal, so the V component only moves through
immigration. The estimator converges at a faster rate than in the
nondegenerate case and has a different limit.

Run with ``python3 demos/degenerate_regime.py``.
"""
import numpy as np

from gwi2 import preset
from gwi2.laws import degeneracy_indicators, mixed_variance
from gwi2.mcharness import McConfig, mc_compare

model = preset("modelD")
ind = degeneracy_indicators(model)
print("Vbar =\n", mixed_variance(model))
print(f"<Vbar v_L, v_L> = {ind.vbar_v:g}, <V_eps v_L, v_L> = {ind.veps_v:g}, M = {ind.M:g}")
print("fully degenerate:", ind.full_degenerate)

report = mc_compare(model, McConfig(reps=1000, n=1000, seed=3), "mxi_degenerate")
print(f"\nKS(estimator, limit) = {report.ks:.4f}")
for level in ("5%", "50%", "95%"):
    e, l = report.quantiles["estimator"][level], report.quantiles["limit"][level]
    print(f"  {level:>4}  {e: .4f}  {l: .4f}")
print("limit paths resampled:", report.resamples)
print("spread ratio:", np.subtract(*[report.quantiles["estimator"][k] for k in ("95%", "5%")]) /
      np.subtract(*[report.quantiles["limit"][k] for k in ("95%", "5%")]))
