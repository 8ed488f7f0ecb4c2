"""Decision rules: the multi-threshold optimal policy and comparison baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .price_model import PricePair, effective_price
from .threshold_engine import LoadSpec, ThresholdTable

__all__ = [
    "Decision",
    "LoadState",
    "BASELINES",
    "optimal_decision",
    "reserve_rule",
    "baseline_decision",
    "batch_consumption",
    "rollout",
]

BASELINES = ("immediate", "uniform-rate", "certainty-equivalent", "no-as-optimal")


@dataclass(frozen=True)
class Decision:
    consume: float
    reserve_offer: float


@dataclass(frozen=True)
class LoadState:
    remaining_demand: float
    stage: int


def _piece_count(row: np.ndarray, price: float, penalty: float) -> float:
    """Largest piece index whose threshold sits strictly below ``price``.

    Pieces past the table all carry the penalty, so a price above it clears
    every piece.
    """
    if price > penalty:
        return math.inf
    return int(np.count_nonzero(row[1:] < price))


def optimal_decision(table: ThresholdTable, state: LoadState, prices: PricePair, spec: LoadSpec) -> Decision:
    t = state.stage
    if not 0 <= t < table.horizon:
        raise ValidationError(f"stage {t} outside [0, {table.horizon})")
    d = state.remaining_demand
    if d < 0:
        raise ValidationError("remaining demand must be >= 0")
    k = _piece_count(table.values[t + 1], effective_price(prices), table.penalty)
    e = 0.0 if math.isinf(k) else min(max(d - k * spec.capacity, 0.0), spec.capacity)
    return Decision(e, reserve_rule(e, prices.reserve))


def reserve_rule(e: float, reserve_price: float) -> float:
    if e < 0:
        raise ValidationError("consumption must be >= 0")
    return e if reserve_price >= 0 else 0.0


def batch_consumption(rows: np.ndarray, demand: np.ndarray, price: np.ndarray, capacity, penalty) -> np.ndarray:
    """Vectorised threshold rule; ``rows[n]`` is the decision row for load ``n``."""
    k = np.count_nonzero(rows[:, 1:] < price[:, None], axis=1)
    e = np.minimum(np.maximum(demand - k * capacity, 0.0), capacity)
    return np.where(price > penalty, 0.0, e)


def baseline_decision(kind: str, state: LoadState, prices: PricePair, spec: LoadSpec, aux: dict | None = None) -> Decision:
    """Reference policies; none of them offers reserve.

    ``aux`` keys: ``initial_demand`` (uniform-rate, defaults to spec.demand),
    ``mean_table`` (certainty-equivalent), ``no_as_table`` (no-as-optimal).
    """
    aux = aux or {}
    d = state.remaining_demand
    if kind == "immediate":
        e = min(d, spec.capacity)
    elif kind == "uniform-rate":
        d0 = aux.get("initial_demand", spec.demand)
        e = min(d, d0 / spec.horizon, spec.capacity)
    elif kind in ("certainty-equivalent", "no-as-optimal"):
        key = "mean_table" if kind == "certainty-equivalent" else "no_as_table"
        if key not in aux:
            raise ValidationError(f"{kind} baseline needs aux[{key!r}]")
        # energy-only decision: the reserve price never enters
        e = optimal_decision(aux[key], state, PricePair(prices.energy, 0.0), spec).consume
    else:
        raise ValidationError(f"unknown baseline {kind!r}")
    return Decision(e, 0.0)


def rollout(table: ThresholdTable, path, spec: LoadSpec, decide=None) -> tuple[list[dict], float]:
    """Run a policy along a realised price path.

    Returns one record per stage plus a terminal record holding the shortfall
    charge, and the total realised cost.
    """
    if len(path) != spec.horizon:
        raise ValidationError(f"price path has {len(path)} stages, expected {spec.horizon}")
    decide = decide or (lambda state, p: optimal_decision(table, state, p, spec))
    d, total, records = spec.demand, 0.0, []
    for t, p in enumerate(path):
        dec = decide(LoadState(d, t), p)
        cost = p.energy * dec.consume - p.reserve * dec.reserve_offer
        records.append({"t": t, "pi_e": p.energy, "pi_r": p.reserve, "d": d,
                        "e": dec.consume, "r": dec.reserve_offer, "stage_cost": cost})
        total += cost
        d = d - dec.consume
    cost = spec.shortfall_penalty * d
    records.append({"t": spec.horizon, "pi_e": None, "pi_r": None, "d": d, "e": 0.0, "r": 0.0, "stage_cost": cost})
    return records, total + cost
