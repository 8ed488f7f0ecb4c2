"""
A two-slot charging decision, by hand and by the library
=========================================================

One load needs 1.5 MWh within two hourly slots and can draw at most 1 MWh
per slot. Anything left over at the deadline costs 10 $/MWh. Prices are
known in advance: slot 0 costs 5 $/MWh for energy and pays 1 $/MWh for
reserve capacity; slot 1 costs 7 and pays nothing.
"""
import numpy as np

from flexload import LoadSpec, PricePair, compile_deterministic, rollout, value_function

spec = LoadSpec(demand=1.5, capacity=1.0, horizon=2, shortfall_penalty=10.0)
path = [PricePair(5.0, 1.0), PricePair(7.0, 0.0)]

# offering the consumed energy as reserve makes slot 0 effectively 5 - 1 = 4
print("effective prices:", [p.effective for p in path])

# row t, column i: marginal cost of the i-th MWh still owed at stage t
table = compile_deterministic(spec, path)
print("threshold table:")
print(table.values)

# the optimal cost-to-go is piecewise linear in remaining demand
for d in np.arange(0.0, 2.01, 0.5):
    print(f"  J0({d:.1f}) = {value_function(table, spec, d):.2f}")

# buy the first MWh at 4, the last half at 7: 4 + 3.5 = 7.5
records, total = rollout(table, path, spec)
for r in records:
    print(r)
print("total cost:", total)
