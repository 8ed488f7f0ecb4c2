"""Compile threshold tables for the flexible-load consumption/reserve problem.

Conventions used throughout the package:

* ``values[t, i]`` is the slope of the stage-``t`` cost-to-go on the demand
  piece ``[(i - 1) * capacity, i * capacity)``; column 0 is the ``-inf``
  sentinel and row ``T`` is the shortfall penalty.  Pieces beyond column ``T``
  always carry the penalty.
* The decision at stage ``t`` compares the effective price against row
  ``t + 1``; row 0 only feeds the value function.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import FixedPointError, NonMonotoneError, ValidationError
from .price_model import PriceModel, StageDistribution, effective_price

__all__ = [
    "NEG_INF",
    "LoadSpec",
    "ThresholdTable",
    "CoefficientGrid",
    "CorrelatedSolution",
    "g_integral",
    "compile_independent",
    "compile_deterministic",
    "compile_correlated",
    "value_function",
    "augment_horizon",
]

# "below every price": only ever compared against, never used in arithmetic
NEG_INF = -math.inf


@dataclass(frozen=True)
class LoadSpec:
    demand: float
    capacity: float
    horizon: int
    shortfall_penalty: float

    def __post_init__(self):
        if not (math.isfinite(self.demand) and self.demand >= 0):
            raise ValidationError(f"demand must be finite and >= 0, got {self.demand}")
        if not (math.isfinite(self.capacity) and self.capacity > 0):
            raise ValidationError(f"capacity must be finite and > 0, got {self.capacity}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValidationError(f"horizon must be an integer >= 1, got {self.horizon}")
        if not math.isfinite(self.shortfall_penalty):
            raise ValidationError("shortfall penalty must be finite")
        object.__setattr__(self, "horizon", int(self.horizon))

    def with_horizon(self, horizon: int) -> "LoadSpec":
        return LoadSpec(self.demand, self.capacity, horizon, self.shortfall_penalty)

    def to_dict(self) -> dict:
        return {
            "demand": self.demand,
            "capacity": self.capacity,
            "horizon": self.horizon,
            "shortfall_penalty": self.shortfall_penalty,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LoadSpec":
        try:
            return cls(float(d["demand"]), float(d["capacity"]), d["horizon"], float(d["shortfall_penalty"]))
        except KeyError as exc:
            raise ValidationError(f"load spec is missing {exc}") from None


@dataclass(frozen=True, eq=False)
class ThresholdTable:
    values: np.ndarray
    capacity: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 2:
            raise ValidationError("threshold table must be (T+1) x (T+1) with T >= 1")
        if not np.all(np.isneginf(v[:, 0])):
            raise ValidationError("column 0 of a threshold table must be -inf")
        if not np.all(np.isfinite(v[:, 1:])):
            raise ValidationError("threshold table entries beyond column 0 must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    @property
    def penalty(self) -> float:
        return float(self.values[-1, 1])

    def row(self, t: int) -> np.ndarray:
        return self.values[t]

    def suffix(self, k: int) -> "ThresholdTable":
        """Table for the last ``k`` stages (same deadline)."""
        if not 1 <= k <= self.horizon:
            raise ValidationError(f"suffix length {k} outside [1, {self.horizon}]")
        return ThresholdTable(self.values[self.horizon - k:, : k + 1], self.capacity)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, ThresholdTable) and np.array_equal(self.values, other.values)

    __hash__ = None


def _as_effective(dist):
    return dist.effective if isinstance(dist, StageDistribution) else dist


def g_integral(dist, z: float, z2: float) -> float:
    """Integral of the effective-price CDF over ``[z, z2]`` (``z`` may be -inf)."""
    if math.isnan(z) or math.isnan(z2) or math.isinf(z2) or (math.isinf(z) and z > 0):
        raise ValidationError("g_integral needs finite z2 and z in [-inf, z2]")
    if z > z2:
        raise ValidationError(f"g_integral needs z <= z2, got z={z}, z2={z2}")
    return float(_as_effective(dist).g(np.array(z), np.array(z2)))


def _next_row(dist, nxt: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Entries ``lo..hi-1`` (1-based pieces) of a stage row from the next row."""
    z = nxt[lo - 1: hi - 1]
    z2 = nxt[lo:hi]
    m = z2 - dist.g(z, z2)
    # G lies in [0, z2 - z]; keep rounding from leaking outside that sandwich
    return np.minimum(np.maximum(m, z), z2)


def _chunks(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(int(workers), n))
    edges = np.linspace(1, n + 1, workers + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _fill_rows(values: np.ndarray, model: PriceModel, stages, workers: int) -> None:
    T = values.shape[0] - 1
    parts = _chunks(T, workers)
    pool = ThreadPoolExecutor(len(parts)) if len(parts) > 1 else None
    try:
        for t in stages:
            dist = model.effective_distribution(t)
            nxt = values[t + 1]
            if pool is None:
                values[t, 1:] = _next_row(dist, nxt, 1, T + 1)
            else:
                # barrier per stage: every piece of row t needs only row t+1
                futs = [(a, b, pool.submit(_next_row, dist, nxt, a, b)) for a, b in parts]
                for a, b, f in futs:
                    values[t, a:b] = f.result()
    finally:
        if pool is not None:
            pool.shutdown()


def _blank_table(T: int, penalty: float) -> np.ndarray:
    values = np.full((T + 1, T + 1), float(penalty))
    values[:, 0] = NEG_INF
    return values


def compile_independent(spec: LoadSpec, model: PriceModel, workers: int = 1) -> ThresholdTable:
    """Threshold table for independent prices: ``m[t,i] = m[t+1,i] - G_t(m[t+1,i-1], m[t+1,i])``."""
    if not model.independent:
        raise ValidationError("compile_independent needs a model without seasonality")
    if model.horizon != spec.horizon:
        raise ValidationError(f"model horizon {model.horizon} != load horizon {spec.horizon}")
    if not math.isfinite(spec.shortfall_penalty):
        raise ValidationError("shortfall penalty must be finite")
    values = _blank_table(spec.horizon, spec.shortfall_penalty)
    _fill_rows(values, model, range(spec.horizon - 1, -1, -1), workers)
    return ThresholdTable(values, spec.capacity)


def compile_deterministic(spec: LoadSpec, prices) -> ThresholdTable:
    """Thresholds for a known price path (sequence of PricePair or (energy, reserve) rows)."""
    return compile_independent(spec, PriceModel.deterministic(prices))


def augment_horizon(table: ThresholdTable, spec: LoadSpec, model: PriceModel, workers: int = 1) -> ThresholdTable:
    """Extend ``table`` backwards to ``spec.horizon`` stages, reusing its rows verbatim.

    ``model`` covers the extended horizon; its last ``table.horizon`` stages
    must be the ones the table was compiled from.
    """
    if table.capacity is not None and table.capacity != spec.capacity:
        raise ValidationError(f"capacity mismatch: table {table.capacity}, spec {spec.capacity}")
    if table.penalty != spec.shortfall_penalty:
        raise ValidationError(f"terminal penalty mismatch: table {table.penalty}, spec {spec.shortfall_penalty}")
    if not model.independent:
        raise ValidationError("augment_horizon needs an independent model")
    if model.horizon != spec.horizon:
        raise ValidationError(f"model horizon {model.horizon} != load horizon {spec.horizon}")
    old = table.horizon
    if spec.horizon < old:
        raise ValidationError("cannot shorten a table; use suffix()")
    if spec.horizon == old:
        return table
    values = _blank_table(spec.horizon, spec.shortfall_penalty)
    offset = spec.horizon - old
    values[offset:, : old + 1] = table.values
    _fill_rows(values, model, range(offset - 1, -1, -1), workers)
    return ThresholdTable(values, spec.capacity if table.capacity is None else table.capacity)


def value_function(coefficients, spec: LoadSpec, d):
    """Expected optimal cost for remaining demand ``d`` at the start of the horizon.

    ``coefficients`` is a ThresholdTable (row 0 is used) or a length-(T+1)
    vector of stage-0 slopes with the sentinel in slot 0.
    """
    if isinstance(coefficients, ThresholdTable):
        slopes = coefficients.values[0, 1:]
    else:
        slopes = np.asarray(coefficients, dtype=float)[1:]
    T, cap = spec.horizon, spec.capacity
    if slopes.size != T:
        raise ValidationError(f"expected {T} slopes, got {slopes.size}")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValidationError("remaining demand must be >= 0")
    pieces = np.clip(d[..., None] - cap * np.arange(T), 0.0, cap)
    out = (pieces * slopes).sum(axis=-1) + spec.shortfall_penalty * np.maximum(d - T * cap, 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# correlated prices: scalar effective-price state on a grid


@dataclass(frozen=True, eq=False)
class CoefficientGrid:
    """Tabulated slopes ``values[t, i, n]`` at effective-price states ``psi[n]``."""

    psi: np.ndarray
    values: np.ndarray

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    def coefficients(self, t: int, psi):
        """Slopes at stage ``t`` for state(s) ``psi``; slot 0 is the sentinel."""
        psi = np.asarray(psi, dtype=float)
        out = np.empty(psi.shape + (self.values.shape[1],))
        out[..., 0] = NEG_INF
        for i in range(1, self.values.shape[1]):
            out[..., i] = np.interp(psi, self.psi, self.values[t, i])
        return out


@dataclass(frozen=True, eq=False)
class CorrelatedSolution:
    grid: CoefficientGrid
    thresholds: ThresholdTable
    initial_psi: float
    spec: LoadSpec

    def coefficients(self, t: int, psi=None):
        return self.grid.coefficients(t, self.initial_psi if psi is None else psi)

    def value(self, d, psi=None):
        return value_function(self.coefficients(0, psi), self.spec, d)


def _zero_seasonality(t, psi):
    z = np.zeros_like(np.asarray(psi, dtype=float))
    return z, z


def _auto_grid(model: PriceModel, spec: LoadSpec, delta: float, max_iter: int = 500) -> np.ndarray:
    seas = model.seasonality or _zero_seasonality
    psi0 = effective_price(model.initial_state)
    ranges = []
    for stage in model.stages:
        ee, er, _ = stage.nodes()
        ranges.append((ee.min(), ee.max(), er.min(), er.max()))
    lo = hi = psi0
    for _ in range(max_iter):
        nlo, nhi = lo, hi
        probe = np.linspace(lo, hi, 5)
        for t, (emin, emax, rmin, rmax) in enumerate(ranges):
            me, mr = seas(t, probe)
            nlo = min(nlo, me.min() + emin - max(mr.max() + rmax, 0.0))
            nhi = max(nhi, me.max() + emax - max(mr.min() + rmin, 0.0))
        grown = nlo < lo - delta / 2 or nhi > hi + delta / 2
        lo, hi = min(lo, nlo), max(hi, nhi)
        if not grown:
            break
    else:
        raise FixedPointError("reachable price range does not settle; pass an explicit grid")
    anchors = np.array([psi0, spec.shortfall_penalty])
    lo, hi = min(lo, anchors.min()), max(hi, anchors.max())
    n = int(math.ceil((hi - lo) / delta)) + 1
    return np.unique(np.concatenate([lo + delta * np.arange(n), anchors]))


def _fixed_point(psi: np.ndarray, c: np.ndarray, tol: float) -> float:
    """Smallest psi with psi - c(psi) >= 0 on the piecewise-linear interpolant."""
    h = psi - c
    if h[-1] < -tol:
        raise FixedPointError(f"fixed point above grid support (max {psi[-1]})")
    ok = h >= -tol if h[-1] < 0 else h >= 0
    j = int(np.argmax(ok))
    if j == 0:
        if h[0] > tol:
            raise FixedPointError(f"fixed point below grid support (min {psi[0]})")
        return float(psi[0])
    if h[j] <= 0:
        return float(psi[j])
    x0, x1, h0, h1 = psi[j - 1], psi[j], h[j - 1], h[j]
    return float(x0 + (-h0) * (x1 - x0) / (h1 - h0))


def _correlated_pieces(lo, hi, pa, w, nxt_vals, nxt_thr, psi):
    out = np.empty((hi - lo, psi.size))
    cache = {}

    def at(i):
        if i not in cache:
            cache[i] = np.interp(pa, psi, nxt_vals[i])
        return cache[i]

    for k, i in enumerate(range(lo, hi)):
        upper = at(i)
        if i == 1:
            m = np.where(pa >= nxt_thr[i], upper, pa)
        else:
            m = np.where(pa >= nxt_thr[i], upper, np.where(pa >= nxt_thr[i - 1], pa, at(i - 1)))
        out[k] = m @ w
    return out


def compile_correlated(
    spec: LoadSpec,
    model: PriceModel,
    delta: float = 1e-2,
    grid=None,
    workers: int = 1,
    monotone_tol: float = 1e-9,
) -> CorrelatedSolution:
    """Grid-based backward recursion for Markov prices with a scalar effective-price state.

    Slopes ``m[t,i](psi)`` are tabulated on ``grid`` (built from the reachable
    price range at resolution ``delta`` when not given) and interpolated
    linearly.  Expectations use the stage quadrature nodes (exact for discrete
    innovations).
    """
    if model.horizon != spec.horizon:
        raise ValidationError(f"model horizon {model.horizon} != load horizon {spec.horizon}")
    if not (delta > 0):
        raise ValidationError("grid resolution must be > 0")
    T, pen = spec.horizon, float(spec.shortfall_penalty)
    seas = model.seasonality or _zero_seasonality
    psi = _auto_grid(model, spec, delta) if grid is None else np.unique(np.asarray(grid, dtype=float))
    N = psi.size
    if N < 2:
        raise ValidationError("grid needs at least two points")
    scale = max(1.0, float(np.abs(psi).max()), abs(pen))

    vals = np.empty((T + 1, T + 1, N))
    vals[:, 0, :] = NEG_INF
    vals[T, 1:, :] = pen
    thr = _blank_table(T, pen)
    parts = _chunks(T, workers)
    pool = ThreadPoolExecutor(len(parts)) if len(parts) > 1 else None
    try:
        for t in range(T - 1, -1, -1):
            ee, er, w = model.stages[t].nodes()
            me, mr = seas(t, psi)
            pa = (me[:, None] + ee) - np.maximum(mr[:, None] + er, 0.0)
            args = (pa, w, vals[t + 1], thr[t + 1], psi)
            if pool is None:
                vals[t, 1:] = _correlated_pieces(1, T + 1, *args)
            else:
                futs = [(a, b, pool.submit(_correlated_pieces, a, b, *args)) for a, b in parts]
                for a, b, f in futs:
                    vals[t, a:b] = f.result()
            steps = np.diff(vals[t, 1:], axis=1)
            if np.any(steps < -monotone_tol * scale):
                i, n = np.unravel_index(np.argmin(steps), steps.shape)
                raise NonMonotoneError(
                    f"slope m[{t},{i + 1}] decreases in the price state near psi={psi[n]:.6g}; "
                    "the seasonality map must keep effective prices monotone"
                )
            for i in range(1, T + 1):
                thr[t, i] = _fixed_point(psi, vals[t, i], 1e-12 * scale)
    finally:
        if pool is not None:
            pool.shutdown()
    return CorrelatedSolution(
        CoefficientGrid(psi, vals),
        ThresholdTable(thr, spec.capacity),
        effective_price(model.initial_state),
        spec,
    )
