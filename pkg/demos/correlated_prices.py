"""
Thresholds that follow the price
================================

When tomorrow's price depends on today's, each threshold becomes a
function of the current effective price psi. The grid engine tabulates
those functions and resolves the stage thresholds at the fixed point
where psi equals its own expected continuation cost.
"""
import numpy as np

from flexload import AffineSeasonality, Gaussian, LoadSpec, PriceModel, PricePair, StageDistribution
from flexload.threshold_engine import compile_correlated, compile_independent

T = 6
spec = LoadSpec(demand=3.0, capacity=1.0, horizon=T, shortfall_penalty=80.0)
stages = tuple(StageDistribution(Gaussian(0.0, 4.0)) for _ in range(T))

for rho in (0.0, 0.5, 0.9):
    # psi_{t+1} = (1 - rho) * 40 + rho * psi_t + noise
    seas = AffineSeasonality(np.full(T, (1 - rho) * 40.0), np.full(T, rho), np.zeros(T), np.zeros(T))
    model = PriceModel(stages, seas, PricePair(40.0, 0.0))
    sol = compile_correlated(spec, model, delta=0.05)
    print(f"rho={rho}: stage-0 thresholds", np.round(sol.thresholds.values[0, 1:4], 3))
    for psi in (25.0, 40.0, 55.0):
        print(f"    next-stage coefficients given psi={psi}:", np.round(sol.coefficients(1, psi)[1:4], 3))

# with no memory the grid engine reduces to the closed-form recursion
indep = PriceModel(tuple(StageDistribution(Gaussian(40.0, 4.0)) for _ in range(T)))
print("independent engine:", np.round(compile_independent(spec, indep).values[0, 1:4], 3))
