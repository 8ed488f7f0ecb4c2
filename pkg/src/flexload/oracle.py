"""Brute-force dynamic programming over demand and price lattices.

The solver enumerates every (consumption, reserve) pair on an action lattice
and takes exact expectations over discrete price atoms.  It shares nothing
with the threshold recursion beyond the problem data, which is what makes it
usable as ground truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetExceeded, ValidationError
from .policy import LoadState, optimal_decision
from .price_model import PointMass, PriceModel, PricePair, StageDistribution, effective_price
from .threshold_engine import (
    CorrelatedSolution,
    LoadSpec,
    ThresholdTable,
    compile_independent,
    value_function,
)

__all__ = [
    "DiscreteInstance",
    "OracleSolution",
    "CompareReport",
    "solve_dp",
    "compare",
    "compare_correlated",
    "random_instance",
    "check_instance",
    "piece_shift_identities",
    "split_identity",
    "events",
]

DEFAULT_BUDGET = 10**7
TIE_TOL = 1e-9


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(10**6)


@dataclass(frozen=True, eq=False)
class DiscreteInstance:
    spec: LoadSpec
    atoms: tuple
    demand_step: Fraction = Fraction(1, 4)
    action_step: Fraction = Fraction(1, 4)
    seasonality: Callable | None = None
    initial_state: PricePair = PricePair(0.0, 0.0)
    max_demand: float | None = None

    def __post_init__(self):
        atoms = tuple(tuple((p if isinstance(p, PricePair) else PricePair(*p), float(w)) for p, w in stage)
                      for stage in self.atoms)
        if len(atoms) != self.spec.horizon:
            raise ValidationError(f"{len(atoms)} atom stages for horizon {self.spec.horizon}")
        for t, stage in enumerate(atoms):
            if not stage:
                raise ValidationError(f"stage {t} has no atoms")
            total = sum(w for _, w in stage)
            if abs(total - 1.0) > 1e-12 or any(w < 0 for _, w in stage):
                raise ValidationError(f"stage {t} probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "atoms", atoms)
        ds, as_ = _frac(self.demand_step), _frac(self.action_step)
        if ds <= 0 or not 0 < as_ <= 1:
            raise ValidationError("lattice steps must be positive and the action step at most one capacity")
        unit = Fraction(math.gcd(ds.numerator * as_.denominator, as_.numerator * ds.denominator),
                        ds.denominator * as_.denominator)
        if (1 / unit).denominator != 1:
            raise ValidationError("capacity must be a whole number of lattice units")
        object.__setattr__(self, "demand_step", ds)
        object.__setattr__(self, "action_step", as_)

    @property
    def unit(self) -> Fraction:
        ds, as_ = self.demand_step, self.action_step
        return Fraction(math.gcd(ds.numerator * as_.denominator, as_.numerator * ds.denominator),
                        ds.denominator * as_.denominator)

    @property
    def independent(self) -> bool:
        return self.seasonality is None

    def price_model(self) -> PriceModel:
        """The same price law as a PriceModel (joint empirical innovations)."""
        stages = tuple(
            StageDistribution(PointMass(0.0), joint=[(p.energy, p.reserve, w) for p, w in stage]) for stage in self.atoms
        )
        return PriceModel(stages, self.seasonality, self.initial_state)

    @property
    def top_demand(self) -> float:
        if self.max_demand is not None:
            return self.max_demand
        return max((self.spec.horizon + 1) * self.spec.capacity, self.spec.demand)

    def demand_grid(self) -> np.ndarray:
        top = self.top_demand
        step = float(self.demand_step) * self.spec.capacity
        n = int(math.floor(top / step + 1e-9))
        return step * np.arange(n + 1)


@dataclass(eq=False)
class OracleSolution:
    inst: DiscreteInstance
    demand: np.ndarray
    states: list
    values: list
    _index: list = field(repr=False)

    def state_index(self, t: int, state=None) -> int:
        if self.inst.independent:
            return 0
        key = effective_price(self.inst.initial_state) if (t == 0 and state is None) else state
        return self._index[t][key]

    def lattice_index(self, d: float) -> int:
        u = float(self.inst.unit) * self.inst.spec.capacity
        k = round(d / u)
        if abs(k * u - d) > 1e-9 * max(1.0, abs(d)) or not 0 <= k < self.demand.size:
            raise ValidationError(f"demand {d} is not on the oracle lattice")
        return k

    def value(self, t: int, d: float, state=None) -> float:
        return float(self.values[t][self.state_index(t, state), self.lattice_index(d)])

    def slopes(self, t: int, state=None) -> np.ndarray:
        """Per-piece slopes of V(t, ., state) over [(i-1)c, ic] for i = 1..T."""
        cap = self.inst.spec.capacity
        v = np.array([self.value(t, i * cap, state) for i in range(self.inst.spec.horizon + 1)])
        return np.diff(v) / cap

    def q_values(self, t: int, d: float, atom: int, state=None):
        """(e, r, Q) arrays over every lattice action at (t, d, atom)."""
        inst = self.inst
        cap = inst.spec.capacity
        u = float(inst.unit) * cap
        k = self.lattice_index(d)
        a_units = int(inst.action_step / inst.unit)
        cap_units = int(1 / inst.unit)
        price, nxt = self._transition(t, self.state_index(t, state), atom)
        vnext = self.values[t + 1][nxt]
        es, rs, qs = [], [], []
        for j in range(0, min(k, cap_units) // a_units + 1):
            e = j * a_units * u
            for l in range(j + 1):
                r = l * a_units * u
                es.append(e)
                rs.append(r)
                qs.append(price.energy * e - price.reserve * r + vnext[k - j * a_units])
        return np.array(es), np.array(rs), np.array(qs)

    def is_minimizer(self, t: int, d: float, atom: int, e: float, r: float, state=None) -> bool:
        es, rs, qs = self.q_values(t, d, atom, state)
        hit = (np.abs(es - e) <= 1e-9) & (np.abs(rs - r) <= 1e-9)
        return bool(hit.any() and qs[hit].min() <= qs.min() + TIE_TOL)

    def _transition(self, t: int, s: int, atom: int):
        eps, _ = self.inst.atoms[t][atom]
        if self.inst.independent:
            return eps, 0
        psi = self.states[t][s]
        me, mr = self.inst.seasonality(t, np.array(psi))
        price = PricePair(float(me) + eps.energy, float(mr) + eps.reserve)
        return price, self._index[t + 1][effective_price(price)]


def solve_dp(inst: DiscreteInstance, budget: int = DEFAULT_BUDGET) -> OracleSolution:
    spec = inst.spec
    T, cap = spec.horizon, spec.capacity
    u = float(inst.unit) * cap
    K = int(math.floor(inst.top_demand / u + 1e-9))
    demand = u * np.arange(K + 1)
    a_units = int(inst.action_step / inst.unit)
    cap_units = int(1 / inst.unit)
    n_e = cap_units // a_units + 1
    pairs = [(j, l) for j in range(n_e) for l in range(j + 1)]

    # reachable price states, keyed by the previous effective price
    if inst.independent:
        states = [[None] for _ in range(T + 1)]
    else:
        states = [[effective_price(inst.initial_state)]]
        for t in range(T):
            nxt = {}
            for psi in states[t]:
                me, mr = inst.seasonality(t, np.array(psi))
                for eps, _ in inst.atoms[t]:
                    nxt.setdefault(effective_price(PricePair(float(me) + eps.energy, float(mr) + eps.reserve)), None)
            states.append(list(nxt))
    index = [{s: n for n, s in enumerate(level)} for level in states]

    work = sum(len(states[t]) * len(inst.atoms[t]) * (K + 1) * len(pairs) for t in range(T))
    if work > budget:
        raise BudgetExceeded(f"oracle needs {work} evaluations, budget is {budget}")

    values = [None] * (T + 1)
    values[T] = np.tile(spec.shortfall_penalty * demand, (len(states[T]), 1))
    sol = OracleSolution(inst, demand, states, values, index)
    for t in range(T - 1, -1, -1):
        vt = np.zeros((len(states[t]), K + 1))
        for s in range(len(states[t])):
            for a, (_, w) in enumerate(inst.atoms[t]):
                price, nxt = sol._transition(t, s, a)
                vnext = values[t + 1][nxt]
                best = np.full(K + 1, np.inf)
                for j, l in pairs:
                    shift = j * a_units
                    e, r = shift * u, l * a_units * u
                    q = np.full(K + 1, np.inf)
                    q[shift:] = price.energy * e - price.reserve * r + vnext[: K + 1 - shift]
                    np.minimum(best, q, out=best)
                vt[s] += w * best
        values[t] = vt
    return sol


@dataclass
class CompareReport:
    max_deviation: float
    all_optimal: bool
    n_values: int
    n_actions: int
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.all_optimal and self.max_deviation < 1e-9


def compare(inst: DiscreteInstance, table: ThresholdTable, solution: OracleSolution | None = None) -> CompareReport:
    """Value and action agreement between a threshold table and the oracle."""
    if not inst.independent:
        raise ValidationError("compare() takes independent instances; use compare_correlated")
    sol = solution or solve_dp(inst)
    spec = inst.spec
    grid = inst.demand_grid()
    dev = float(np.max(np.abs(np.array([sol.value(0, d) for d in grid]) - value_function(table, spec, grid))))
    failures, n_actions = [], 0
    for t in range(spec.horizon):
        for d in grid:
            for a, (price, _) in enumerate(inst.atoms[t]):
                dec = optimal_decision(table, LoadState(float(d), t), price, spec)
                n_actions += 1
                if not sol.is_minimizer(t, float(d), a, dec.consume, dec.reserve_offer):
                    failures.append((t, float(d), a, dec))
    return CompareReport(dev, not failures, grid.size, n_actions, failures)


def compare_correlated(inst: DiscreteInstance, solution: CorrelatedSolution,
                       oracle: OracleSolution | None = None) -> CompareReport:
    """Slopes at every reachable price state plus threshold-policy actions."""
    sol = oracle or solve_dp(inst)
    spec = inst.spec
    dev, failures, n_actions, n_values = 0.0, [], 0, 0
    for t in range(spec.horizon):
        for psi in sol.states[t]:
            got = solution.grid.coefficients(t, psi)[1:]
            dev = max(dev, float(np.max(np.abs(got - sol.slopes(t, psi)))))
            n_values += got.size
            for d in inst.demand_grid():
                for a in range(len(inst.atoms[t])):
                    price, _ = sol._transition(t, sol.state_index(t, psi), a)
                    dec = optimal_decision(solution.thresholds, LoadState(float(d), t), price, spec)
                    n_actions += 1
                    if not sol.is_minimizer(t, float(d), a, dec.consume, dec.reserve_offer, psi):
                        failures.append((t, psi, float(d), a, dec))
    return CompareReport(dev, not failures, n_values, n_actions, failures)


def random_instance(rng: np.random.Generator, max_horizon: int = 6, max_atoms: int = 5,
                    price_range=(-5.0, 60.0), reserve_range=(-5.0, 20.0)) -> DiscreteInstance:
    """Random independent instance; prices on a 1/8 grid so ties actually occur."""
    T = int(rng.integers(1, max_horizon + 1))
    cap = float(rng.choice([0.5, 1.0, 2.0]))
    penalty = float(np.round(rng.uniform(10.0, 70.0) * 8) / 8)
    atoms = []
    for _ in range(T):
        n = int(rng.integers(1, max_atoms + 1))
        e = np.round(rng.uniform(*price_range, n) * 8) / 8
        r = np.round(rng.uniform(*reserve_range, n) * 8) / 8
        w = rng.dirichlet(np.ones(n))
        w[-1] = 1.0 - w[:-1].sum()
        atoms.append(tuple((PricePair(float(a), float(b)), float(p)) for a, b, p in zip(e, r, w)))
    demand = float(rng.integers(0, 4 * (T + 1) + 1)) * cap / 4
    return DiscreteInstance(LoadSpec(demand, cap, T, penalty), tuple(atoms))


def check_instance(inst: DiscreteInstance) -> CompareReport:
    table = compile_independent(inst.spec, inst.price_model())
    return compare(inst, table)


# ---------------------------------------------------------------------------
# algebraic facts the threshold structure rests on; generic over number types


def _pos(x):
    return x if x > 0 else x - x


def piece_shift_identities(d, e, cap):
    """Both sides of the two piece-shifting identities; requires 0 <= e <= cap, 0 <= d."""
    i = math.floor(d / cap)
    dt = d - i * cap
    lhs1 = min(_pos(d - e - (i - 1) * cap), cap)
    rhs1 = cap - _pos(e - dt)
    lhs2 = _pos(dt - e)
    rhs2 = dt - min(e, dt)
    return (lhs1, rhs1), (lhs2, rhs2)


def split_identity(dt, e):
    """e == (e - dt)^+ + min(e, dt) for e, dt >= 0."""
    return e, _pos(e - dt) + min(e, dt)


def events(price, lower, upper) -> tuple[bool, bool, bool]:
    """Which of the three consumption regions a price falls in.

    ``lower``/``upper`` are the slopes of the pieces below and at the current
    demand; ``lower`` may be -inf.
    """
    e1 = upper <= price
    e2 = lower <= price < upper
    e3 = price < lower
    return e1, e2, e3
