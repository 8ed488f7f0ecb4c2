"""Monte Carlo evaluation of charging policies over a fleet of flexible loads.

Every scenario draws a set of sessions and one price path over a two-day
window; all policies then run against those same draws.  Threshold tables
depend only on the price law, so they are compiled once per deadline and
shared by every scenario.
"""
from __future__ import annotations

import csv
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import NumericalError, ValidationError
from .policy import batch_consumption
from .price_model import Gaussian, PointMass, PriceModel, StageDistribution, sample_paths
from .threshold_engine import LoadSpec, ThresholdTable, augment_horizon, compile_independent

__all__ = [
    "POLICIES",
    "SessionSpec",
    "SimConfig",
    "SimResult",
    "ThresholdCache",
    "default_energy_profile",
    "default_arrival_weights",
    "run",
    "par",
    "sample_sessions",
]

POLICIES = ("as-optimal", "no-as-optimal", "certainty-equivalent", "immediate", "uniform-rate")
REFERENCE = "no-as-optimal"


def default_energy_profile(slots_per_day: int = 24) -> np.ndarray:
    """Two-peak diurnal mean energy price in $/MWh (morning and evening)."""
    h = np.arange(slots_per_day) * 24.0 / slots_per_day
    return 30.0 + 15.0 * np.exp(-((h - 8.0) ** 2) / 8.0) + 25.0 * np.exp(-((h - 19.0) ** 2) / 8.0)


def default_arrival_weights(slots_per_day: int = 24) -> np.ndarray:
    """Bimodal arrival histogram: a morning bump and a larger evening one."""
    h = np.arange(slots_per_day) * 24.0 / slots_per_day
    w = 0.4 * np.exp(-((h - 8.0) ** 2) / 4.0) + 0.6 * np.exp(-((h - 18.0) ** 2) / 4.0) + 0.02
    return w / w.sum()


@dataclass(frozen=True)
class SessionSpec:
    arrival: int
    dwell: int
    demand: float
    capacity: float

    @property
    def deadline(self) -> int:
        return self.arrival + self.dwell

    def __post_init__(self):
        if self.arrival < 0 or self.dwell < 1:
            raise ValidationError(f"session needs arrival >= 0 and dwell >= 1, got {self}")
        if not (self.demand >= 0 and self.capacity > 0):
            raise ValidationError(f"session needs demand >= 0 and capacity > 0, got {self}")


@dataclass
class SimConfig:
    n_scenarios: int = 200
    fleet_size: int = 100
    slot_minutes: int = 60
    seed: int = 0
    workers: int = 1
    policies: tuple = POLICIES
    # prices, $/MWh; one value per slot of the day
    energy_mean: list | None = None
    energy_sigma: float = 10.0
    reserve_price: list | float = 4.0
    shortfall_penalty: float = 150.0
    # sessions
    capacity: float = 0.0033
    arrival_weights: list | None = None
    dwell_median_hours: float = 8.0
    dwell_log_sigma: float = 0.5
    min_dwell_hours: float = 3.0
    max_dwell_hours: float = 24.0
    demand_median: float = 0.010
    demand_log_sigma: float = 0.5
    # overrides: a fixed session list and/or a full-window price model
    sessions: list | None = None
    price_model: PriceModel | None = field(default=None, repr=False)

    def __post_init__(self):
        self.policies = tuple(self.policies)

    @property
    def slots_per_day(self) -> int:
        return (24 * 60) // self.slot_minutes

    @property
    def window(self) -> int:
        return 2 * self.slots_per_day

    def validate(self) -> None:
        if self.slot_minutes <= 0 or (24 * 60) % self.slot_minutes:
            raise ValidationError(f"slot length {self.slot_minutes} min does not divide a day")
        if self.n_scenarios < 1 or self.fleet_size < 1:
            raise ValidationError("need at least one scenario and one load")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        unknown = set(self.policies) - set(POLICIES)
        if unknown or not self.policies:
            raise ValidationError(f"unknown policies {sorted(unknown)}; choose from {POLICIES}")
        if not (self.energy_sigma >= 0 and self.capacity > 0 and math.isfinite(self.shortfall_penalty)):
            raise ValidationError("need sigma >= 0, capacity > 0 and a finite penalty")
        if not 0 < self.min_dwell_hours <= self.max_dwell_hours <= 24:
            raise ValidationError("dwell bounds must satisfy 0 < min <= max <= 24 h")
        if self.demand_median <= 0 or self.dwell_median_hours <= 0:
            raise ValidationError("medians must be positive")
        spd = self.slots_per_day
        for name in ("energy_mean", "arrival_weights"):
            v = getattr(self, name)
            if v is not None and len(v) != spd:
                raise ValidationError(f"{name} needs {spd} entries, got {len(v)}")
        if np.ndim(self.reserve_price) and len(self.reserve_price) != spd:
            raise ValidationError(f"reserve_price needs {spd} entries")
        if self.arrival_weights is not None:
            w = np.asarray(self.arrival_weights, dtype=float)
            if np.any(w < 0) or w.sum() <= 0:
                raise ValidationError("arrival weights must be nonnegative and not all zero")
        if self.price_model is not None:
            if not self.price_model.independent or self.price_model.horizon != self.window:
                raise ValidationError(f"price model must be independent with {self.window} stages")
        for s in self.sessions or ():
            if s.deadline > self.window:
                raise ValidationError(f"session {s} ends after the {self.window}-slot window")
            if s.capacity != self.capacity:
                raise ValidationError("fixed sessions must share the configured capacity")

    def build_price_model(self) -> PriceModel:
        if self.price_model is not None:
            return self.price_model
        spd = self.slots_per_day
        mean = np.asarray(self.energy_mean if self.energy_mean is not None else default_energy_profile(spd), float)
        res = np.broadcast_to(np.asarray(self.reserve_price, dtype=float), (spd,))
        stages = []
        for s in range(self.window):
            h = s % spd
            energy = Gaussian(float(mean[h]), self.energy_sigma) if self.energy_sigma > 0 else PointMass(float(mean[h]))
            stages.append(StageDistribution(energy, PointMass(float(res[h]))))
        return PriceModel(tuple(stages))

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("price_model", "sessions", "workers")}
        d["policies"] = list(self.policies)
        for k in ("energy_mean", "arrival_weights", "reserve_price"):
            if isinstance(d[k], np.ndarray):
                d[k] = d[k].tolist()
        d["sessions"] = None if self.sessions is None else [asdict(s) for s in self.sessions]
        d["price_model"] = None if self.price_model is None else self.price_model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown config keys {sorted(extra)}")
        d = dict(d)
        if d.get("sessions") is not None:
            d["sessions"] = [SessionSpec(**s) for s in d["sessions"]]
        if d.get("price_model") is not None:
            try:
                d["price_model"] = PriceModel.from_dict(d["price_model"])
            except (KeyError, ValueError, TypeError) as exc:
                raise ValidationError(f"bad price model: {exc}") from None
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None


class ThresholdCache:
    """Tables keyed by (deadline, capacity); shorter dwells reuse a suffix.

    A longer dwell for a known deadline extends the stored table backwards
    instead of recompiling it.  Inserted tables are never mutated.
    """

    def __init__(self, model: PriceModel, penalty: float):
        self.model = model
        self.penalty = float(penalty)
        self._tables: dict[tuple[int, float], ThresholdTable] = {}
        self._lock = threading.Lock()
        self.compiled = 0
        self.augmented = 0

    def __len__(self):
        return len(self._tables)

    def get(self, deadline: int, horizon: int, capacity: float) -> ThresholdTable:
        key = (deadline, capacity)
        with self._lock:
            table = self._tables.get(key)
            if table is None or table.horizon < horizon:
                spec = LoadSpec(0.0, capacity, horizon, self.penalty)
                sub = self.model.slice(deadline - horizon, deadline)
                if table is None:
                    table = compile_independent(spec, sub)
                    self.compiled += 1
                else:
                    table = augment_horizon(table, spec, sub)
                    self.augmented += 1
                self._tables[key] = table
        return table if table.horizon == horizon else table.suffix(horizon)


def sample_sessions(config: SimConfig, rng: np.random.Generator) -> list[SessionSpec]:
    if config.sessions is not None:
        return list(config.sessions)
    spd, n = config.slots_per_day, config.fleet_size
    per_hour = spd / 24.0
    w = np.asarray(config.arrival_weights if config.arrival_weights is not None else default_arrival_weights(spd), float)
    arrival = rng.choice(spd, size=n, p=w / w.sum())
    hours = rng.lognormal(math.log(config.dwell_median_hours), config.dwell_log_sigma, n)
    hours = np.clip(hours, config.min_dwell_hours, config.max_dwell_hours)
    dwell = np.clip(np.round(hours * per_hour).astype(int),
                    math.ceil(config.min_dwell_hours * per_hour - 1e-9),
                    int(config.max_dwell_hours * per_hour + 1e-9))
    demand = rng.lognormal(math.log(config.demand_median), config.demand_log_sigma, n)
    demand = np.clip(demand, config.capacity, dwell * config.capacity)
    return [SessionSpec(int(a), int(L), float(d), config.capacity) for a, L, d in zip(arrival, dwell, demand)]


def par(load) -> float:
    load = np.asarray(load, dtype=float)
    if load.size == 0 or np.any(load < 0):
        raise ValidationError("load must be a nonempty nonnegative vector")
    mean = load.mean()
    if mean == 0:
        raise ValidationError("peak-to-average ratio of an all-zero load is undefined")
    return float(load.max() / mean)


@dataclass
class SimResult:
    policies: tuple
    seed: int
    n_scenarios: int
    n_sessions: int
    slots_per_day: int
    scenario_cost: np.ndarray        # (scenarios, policies): mean realised cost per session
    scenario_normalized: np.ndarray  # (scenarios, policies): total cost / no-AS optimal total cost
    diurnal: np.ndarray              # (policies, slots_per_day): mean aggregate consumption
    as_capacity: np.ndarray          # (policies,): mean reserve offered per scenario
    dominance_violations: int
    dominance_checked: int
    worst_dominance_gap: float
    conservation_error: float
    tables_cached: int
    # how the cache got there depends on thread timing, so these stay out of the summary
    tables_compiled: int = 0
    tables_augmented: int = 0

    def _ci(self, x: np.ndarray):
        n = x.shape[0]
        mean = x.mean(axis=0)
        if n < 2:
            return mean, np.full_like(mean, np.nan)
        return mean, stats.t.ppf(0.975, n - 1) * x.std(axis=0, ddof=1) / math.sqrt(n)

    @property
    def mean_cost(self) -> dict:
        m, _ = self._ci(self.scenario_cost)
        return dict(zip(self.policies, m.tolist()))

    @property
    def cost_halfwidth(self) -> dict:
        _, h = self._ci(self.scenario_cost)
        return dict(zip(self.policies, h.tolist()))

    @property
    def normalized(self) -> dict:
        m, _ = self._ci(self.scenario_normalized)
        return dict(zip(self.policies, m.tolist()))

    @property
    def normalized_halfwidth(self) -> dict:
        _, h = self._ci(self.scenario_normalized)
        return dict(zip(self.policies, h.tolist()))

    @property
    def par(self) -> dict:
        return {p: par(self.diurnal[k]) for k, p in enumerate(self.policies)}

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "n_scenarios": self.n_scenarios,
            "n_sessions": self.n_sessions,
            "policies": list(self.policies),
            "mean_cost": self.mean_cost,
            "cost_halfwidth": self.cost_halfwidth,
            "normalized_cost": self.normalized,
            "normalized_halfwidth": self.normalized_halfwidth,
            "par": self.par,
            "as_capacity_offered": dict(zip(self.policies, self.as_capacity.tolist())),
            "dominance_violations": self.dominance_violations,
            "dominance_checked": self.dominance_checked,
            "worst_dominance_gap": self.worst_dominance_gap,
            "conservation_error": self.conservation_error,
            "tables_cached": self.tables_cached,
        }

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "costs.csv", out / "diurnal.csv", out / "summary.json"]
        mean, half = self.mean_cost, self.cost_halfwidth
        norm, nhalf = self.normalized, self.normalized_halfwidth
        with open(paths[0], "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["policy", "mean", "halfwidth", "normalized", "normalized_halfwidth"])
            for p in self.policies:
                w.writerow([p, _fmt(mean[p]), _fmt(half[p]), _fmt(norm[p]), _fmt(nhalf[p])])
        with open(paths[1], "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["slot", "policy", "mean_load"])
            for s in range(self.slots_per_day):
                for k, p in enumerate(self.policies):
                    w.writerow([s, p, _fmt(self.diurnal[k, s])])
        with open(paths[2], "w", encoding="utf-8") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)
            f.write("\n")
        return paths


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def _scenario_seed(seed: int, k: int) -> np.random.SeedSequence:
    # counter-based: scenario k's stream does not depend on how many scenarios run
    return np.random.SeedSequence(seed, spawn_key=(k,))


class _Prepared:
    """Per-run shared state: price model, caches, and per-session decision rows."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.model = config.build_price_model()
        pen = config.shortfall_penalty
        self.caches = {}
        if "as-optimal" in config.policies:
            self.caches["as-optimal"] = ThresholdCache(self.model, pen)
        no_as = self.model.with_reserve(0.0)
        if "no-as-optimal" in config.policies:
            self.caches["no-as-optimal"] = ThresholdCache(no_as, pen)
        if "certainty-equivalent" in config.policies:
            self.caches["certainty-equivalent"] = ThresholdCache(no_as.mean_model(), pen)
        self.width = int(round(config.max_dwell_hours * config.slots_per_day / 24.0)) + 1
        self._rows: dict = {}
        self._lock = threading.Lock()

    def rows(self, policy: str, s: SessionSpec) -> np.ndarray:
        """Decision rows for every stage of the session, padded with the penalty."""
        key = (policy, s.deadline, s.dwell)
        with self._lock:
            hit = self._rows.get(key)
        if hit is not None:
            return hit
        table = self.caches[policy].get(s.deadline, s.dwell, s.capacity)
        width = max(self.width, s.dwell + 1)
        rows = np.full((s.dwell, width), table.penalty)
        rows[:, : s.dwell + 1] = table.values[1:]
        rows.setflags(write=False)
        with self._lock:
            return self._rows.setdefault(key, rows)


def _simulate_scenario(prep: _Prepared, k: int):
    cfg = prep.config
    rng = np.random.default_rng(_scenario_seed(cfg.seed, k))
    sessions = sample_sessions(cfg, rng)
    path = sample_paths(prep.model, rng, 1)[0]
    W, spd = cfg.window, cfg.slots_per_day
    n = len(sessions)
    arr = np.array([s.arrival for s in sessions])
    dl = np.array([s.deadline for s in sessions])
    dwell = np.array([s.dwell for s in sessions])
    d0 = np.array([s.demand for s in sessions])
    cap, pen = cfg.capacity, cfg.shortfall_penalty

    costs = np.zeros((len(cfg.policies), n))
    load = np.zeros((len(cfg.policies), spd))
    offered = np.zeros(len(cfg.policies))
    conservation = 0.0
    for p_idx, policy in enumerate(cfg.policies):
        rows = None
        if policy in prep.caches:
            width = max(prep.width, int(dwell.max()) + 1)
            rows = np.full((n, int(dwell.max()), width), pen)
            for j, s in enumerate(sessions):
                r = prep.rows(policy, s)
                rows[j, : s.dwell, : r.shape[1]] = r
        d = d0.copy()
        used = np.zeros(n)
        for slot in range(W):
            act = np.nonzero((arr <= slot) & (slot < dl))[0]
            if act.size == 0:
                continue
            pe, pr = path[slot]
            t = slot - arr[act]
            if policy == "immediate":
                e = np.minimum(d[act], cap)
            elif policy == "uniform-rate":
                e = np.minimum(np.minimum(d[act], d0[act] / dwell[act]), cap)
            else:
                price = pe - max(pr, 0.0) if policy == "as-optimal" else pe
                e = batch_consumption(rows[act, t], d[act], np.full(act.size, price), cap, pen)
            r = e if (policy == "as-optimal" and pr >= 0) else np.zeros_like(e)
            costs[p_idx, act] += pe * e - pr * r
            offered[p_idx] += r.sum()
            np.add.at(load[p_idx], slot % spd, e.sum())
            d[act] -= e
            used[act] += e
        costs[p_idx] += pen * d
        conservation = max(conservation, float(np.max(np.abs(used + d - d0))))
    return costs, load, offered, conservation


def run(config: SimConfig) -> SimResult:
    config.validate()
    prep = _Prepared(config)

    def chunk(ks):
        return [_simulate_scenario(prep, k) for k in ks]

    ks = list(range(config.n_scenarios))
    workers = min(config.workers, config.n_scenarios)
    if workers > 1:
        parts = [ks[i::workers] for i in range(workers)]
        with ThreadPoolExecutor(workers) as pool:
            done = list(pool.map(chunk, parts))
        by_k = {}
        for part, res in zip(parts, done):
            by_k.update(zip(part, res))
        results = [by_k[k] for k in ks]
    else:
        results = chunk(ks)

    pols = config.policies
    n_pol = len(pols)
    scen_cost = np.zeros((config.n_scenarios, n_pol))
    scen_norm = np.full((config.n_scenarios, n_pol), np.nan)
    diurnal = np.zeros((n_pol, config.slots_per_day))
    offered = np.zeros(n_pol)
    violations = checked = 0
    worst_gap = 0.0
    conservation = 0.0
    n_sessions = 0
    ref = pols.index(REFERENCE) if REFERENCE in pols else None
    with_as = pols.index("as-optimal") if "as-optimal" in pols else None
    for k, (costs, load, off, cons) in enumerate(results):
        n_sessions += costs.shape[1]
        scen_cost[k] = costs.mean(axis=1)
        totals = costs.sum(axis=1)
        if ref is not None:
            if not totals[ref] > 0:
                raise NumericalError(f"scenario {k}: no-AS optimal cost {totals[ref]} is not positive")
            scen_norm[k] = totals / totals[ref]
        if ref is not None and with_as is not None:
            scale = np.maximum(1.0, np.abs(costs[ref]))
            gap = costs[with_as] - costs[ref]
            violations += int(np.count_nonzero(gap > 1e-9 * scale))
            checked += costs.shape[1]
            worst_gap = max(worst_gap, float(gap.max()))
        diurnal += load
        offered += off
        conservation = max(conservation, cons)
    diurnal /= config.n_scenarios
    offered /= config.n_scenarios
    tables = list(prep.caches.values())
    return SimResult(
        policies=pols,
        seed=config.seed,
        n_scenarios=config.n_scenarios,
        n_sessions=n_sessions,
        slots_per_day=config.slots_per_day,
        scenario_cost=scen_cost,
        scenario_normalized=scen_norm,
        diurnal=diurnal,
        as_capacity=offered,
        dominance_violations=violations,
        dominance_checked=checked,
        worst_dominance_gap=worst_gap,
        conservation_error=conservation,
        tables_cached=sum(len(c) for c in tables),
        tables_compiled=sum(c.compiled for c in tables),
        tables_augmented=sum(c.augmented for c in tables),
    )
