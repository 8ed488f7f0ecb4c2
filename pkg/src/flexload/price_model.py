"""Stochastic energy/reserve price process.

Prices evolve as ``pi_t = lam_t(psi_{t-1}) + eps_t`` where ``psi`` is the
effective price of the previous stage and ``eps_t`` is drawn independently per
stage.  Without a seasonality map the innovations *are* the prices (the
independent case).

Four marginal innovation kinds are supported: point-mass, gaussian, empirical
samples and tabulated (piecewise-linear) CDFs.  Within a stage the energy and
reserve coordinates are independent unless a joint sample list is given.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import ValidationError

__all__ = [
    "PricePair",
    "PointMass",
    "Gaussian",
    "Empirical",
    "TabulatedCDF",
    "StageDistribution",
    "AffineSeasonality",
    "PriceModel",
    "DiscreteEffective",
    "effective_price",
    "effective_cdf",
    "sample_path",
    "sample_paths",
    "distribution_from_dict",
]

# equal-probability cells per gaussian marginal (fewer when both marginals are gaussian)
GAUSSIAN_CELLS = 256
GAUSSIAN_CELLS_PAIRED = 64
TABULATED_NODES_PER_SEGMENT = 8
GAUSSIAN_TAIL = 12.0
QUAD_EPSABS = 1e-10


@dataclass(frozen=True)
class PricePair:
    energy: float
    reserve: float

    def __post_init__(self):
        if not (math.isfinite(self.energy) and math.isfinite(self.reserve)):
            raise ValidationError(f"non-finite price pair {self!r}")

    @property
    def effective(self) -> float:
        return effective_price(self)


def effective_price(p: PricePair) -> float:
    """Energy price net of the (positive part of the) reserve price."""
    return p.energy - max(p.reserve, 0.0)


# ---------------------------------------------------------------------------
# marginal distributions


def _normalized(w: np.ndarray) -> np.ndarray:
    # idempotent: weights that already sum to 1 up to rounding keep their bits,
    # so a model survives a JSON round trip unchanged
    total = w.sum()
    if abs(total - 1.0) <= 8 * np.finfo(float).eps * w.size:
        return w
    return w / total


class _Marginal:
    kind: str
    is_discrete: bool = False

    def mean(self) -> float:
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def partial_expectation(self, y):
        """E[(y - X)^+], vectorised over ``y``."""
        raise NotImplementedError

    def positive_part_mean(self) -> float:
        return self.mean() + float(self.partial_expectation(0.0))

    def shifted_positive_expectation(self, c):
        """E[(c + X^+)^+], vectorised over ``c``."""
        c = np.asarray(c, dtype=float)
        mu = self.mean()
        neg = mu + c + self.partial_expectation(np.maximum(-c, 0.0))
        return np.where(c >= 0, c + self.positive_part_mean(), neg)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class PointMass(_Marginal):
    value: float
    kind = "point-mass"
    is_discrete = True

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError("point-mass value must be finite")

    def mean(self):
        return float(self.value)

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.value).astype(float)

    def partial_expectation(self, y):
        return np.maximum(np.asarray(y, dtype=float) - self.value, 0.0)

    def atoms(self):
        return np.array([self.value], dtype=float), np.array([1.0])

    def nodes(self):
        return self.atoms()

    def support(self):
        return self.value, self.value

    def sample(self, rng, size):
        return np.full(size, self.value, dtype=float)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True, eq=False)
class Gaussian(_Marginal):
    loc: float
    scale: float
    kind = "gaussian"

    def __post_init__(self):
        if not (math.isfinite(self.loc) and math.isfinite(self.scale)) or self.scale <= 0:
            raise ValidationError("gaussian needs finite loc and scale > 0")

    def mean(self):
        return float(self.loc)

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.loc) / self.scale)

    def pdf(self, x):
        u = (np.asarray(x, dtype=float) - self.loc) / self.scale
        return np.exp(-0.5 * u * u) / (self.scale * math.sqrt(2 * math.pi))

    def partial_expectation(self, y):
        y = np.asarray(y, dtype=float)
        u = (y - self.loc) / self.scale
        phi = np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        return (y - self.loc) * special.ndtr(u) + self.scale * phi

    def nodes(self, cells: int = GAUSSIAN_CELLS):
        # conditional mean of each equal-probability cell: exact for integrands
        # linear within a cell, so only cells holding a kink contribute error
        edges = special.ndtri(np.linspace(0.0, 1.0, cells + 1))
        phi = np.exp(-0.5 * edges * edges) / math.sqrt(2 * math.pi)
        return self.loc + self.scale * cells * (phi[:-1] - phi[1:]), np.full(cells, 1.0 / cells)

    def support(self):
        return self.loc - GAUSSIAN_TAIL * self.scale, self.loc + GAUSSIAN_TAIL * self.scale

    def sample(self, rng, size):
        return rng.normal(self.loc, self.scale, size)

    def to_dict(self):
        return {"kind": self.kind, "loc": self.loc, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class Empirical(_Marginal):
    values: np.ndarray
    weights: np.ndarray = None
    kind = "empirical-samples"
    is_discrete = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        w = np.ones_like(v) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if v.size == 0 or v.shape != w.shape:
            raise ValidationError("empirical distribution needs matching, non-empty values/weights")
        if not np.all(np.isfinite(v)) or np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
            raise ValidationError("empirical values must be finite and weights nonnegative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", _normalized(w))

    def mean(self):
        return float(np.dot(self.weights, self.values))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return ((self.values <= x[..., None]) * self.weights).sum(axis=-1)

    def partial_expectation(self, y):
        y = np.asarray(y, dtype=float)
        return (np.maximum(y[..., None] - self.values, 0.0) * self.weights).sum(axis=-1)

    def atoms(self):
        return self.values, self.weights

    def nodes(self):
        return self.atoms()

    def support(self):
        return float(self.values.min()), float(self.values.max())

    def sample(self, rng, size):
        idx = rng.choice(self.values.size, size=size, p=self.weights)
        return self.values[idx]

    def to_dict(self):
        return {"kind": self.kind, "values": self.values.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class TabulatedCDF(_Marginal):
    """Piecewise-linear CDF through ``(x[k], p[k])`` with p[0] = 0 and p[-1] = 1."""

    x: np.ndarray
    p: np.ndarray
    kind = "tabulated-cdf"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        p = np.asarray(self.p, dtype=float).ravel()
        if x.size < 2 or x.shape != p.shape:
            raise ValidationError("tabulated CDF needs at least two matching breakpoints")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(p) < 0):
            raise ValidationError("tabulated CDF breakpoints must increase and probabilities not decrease")
        if p[0] != 0.0 or p[-1] != 1.0:
            raise ValidationError("tabulated CDF must run from 0 to 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def _segments(self):
        return self.x[:-1], self.x[1:], np.diff(self.p)

    def mean(self):
        a, b, m = self._segments
        return float(np.dot(m, 0.5 * (a + b)))

    def cdf(self, x):
        return np.interp(np.asarray(x, dtype=float), self.x, self.p, left=0.0, right=1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        dens = np.diff(self.p) / np.diff(self.x)
        k = np.clip(np.searchsorted(self.x, x, side="right") - 1, 0, dens.size - 1)
        inside = (x >= self.x[0]) & (x < self.x[-1])
        return np.where(inside, dens[k], 0.0)

    def partial_expectation(self, y):
        y = np.asarray(y, dtype=float)[..., None]
        a, b, m = self._segments
        inside = m * (np.clip(y, a, b) - a) ** 2 / (2 * (b - a))
        above = m * (y - 0.5 * (a + b))
        return np.where(y >= b, above, np.where(y <= a, 0.0, inside)).sum(axis=-1)

    def nodes(self):
        g, gw = np.polynomial.legendre.leggauss(TABULATED_NODES_PER_SEGMENT)
        a, b, m = self._segments
        pts = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * g
        wts = 0.5 * m[:, None] * gw
        keep = m > 0
        return pts[keep].ravel(), wts[keep].ravel()

    def support(self):
        return float(self.x[0]), float(self.x[-1])

    def sample(self, rng, size):
        return np.interp(rng.random(size), self.p, self.x)

    def to_dict(self):
        return {"kind": self.kind, "x": self.x.tolist(), "p": self.p.tolist()}


def distribution_from_dict(d: dict) -> _Marginal:
    kind = d.get("kind")
    if kind == "point-mass":
        return PointMass(float(d["value"]))
    if kind == "gaussian":
        return Gaussian(float(d["loc"]), float(d["scale"]))
    if kind == "empirical-samples":
        return Empirical(d["values"], d.get("weights"))
    if kind == "tabulated-cdf":
        return TabulatedCDF(d["x"], d["p"])
    raise ValidationError(f"unknown distribution kind {kind!r}")


# ---------------------------------------------------------------------------
# effective-price distributions  (X = E - R^+)


class _Effective:
    def cdf(self, x):
        raise NotImplementedError

    def partial_expectation(self, y):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def g(self, z, z2):
        """Integral of the CDF over [z, z2]; ``z`` may hold -inf."""
        z = np.asarray(z, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        below = np.isneginf(z)
        lower = np.where(below, 0.0, self.partial_expectation(np.where(below, 0.0, z)))
        return self.partial_expectation(z2) - lower


@dataclass(frozen=True, eq=False)
class DiscreteEffective(_Effective):
    values: np.ndarray
    weights: np.ndarray

    def mean(self):
        return float(np.dot(self.weights, self.values))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return ((self.values <= x[..., None]) * self.weights).sum(axis=-1)

    def partial_expectation(self, y):
        y = np.asarray(y, dtype=float)
        return (np.maximum(y[..., None] - self.values, 0.0) * self.weights).sum(axis=-1)

    def g(self, z, z2):
        # sum of step-CDF rectangles: each atom x contributes w * (z2 - max(z, x))^+
        z = np.asarray(z, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        below = np.isneginf(z)
        lo = np.maximum(np.where(below, -np.inf, z)[..., None], self.values)
        return np.maximum(z2[..., None] - lo, 0.0) @ self.weights


@dataclass(frozen=True, eq=False)
class _ShiftMixture(_Effective):
    """Continuous energy, discrete reserve: X = E - s with s = r^+ drawn from atoms."""

    energy: _Marginal
    shifts: np.ndarray
    weights: np.ndarray

    def mean(self):
        return self.energy.mean() - float(np.dot(self.weights, self.shifts))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return (self.energy.cdf(x[..., None] + self.shifts) * self.weights).sum(axis=-1)

    def partial_expectation(self, y):
        y = np.asarray(y, dtype=float)
        return (self.energy.partial_expectation(y[..., None] + self.shifts) * self.weights).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class _ReserveConditioned(_Effective):
    """Discrete energy, continuous reserve."""

    energy_values: np.ndarray
    energy_weights: np.ndarray
    reserve: _Marginal

    def mean(self):
        return float(np.dot(self.energy_weights, self.energy_values)) - self.reserve.positive_part_mean()

    def cdf(self, x):
        c = self.energy_values - np.asarray(x, dtype=float)[..., None]
        tail = np.where(c <= 0, 1.0, 1.0 - self.reserve.cdf(np.maximum(c, 0.0)))
        return (tail * self.energy_weights).sum(axis=-1)

    def partial_expectation(self, y):
        c = np.asarray(y, dtype=float)[..., None] - self.energy_values
        return (self.reserve.shifted_positive_expectation(c) * self.energy_weights).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class _QuadEffective(_Effective):
    """Both coordinates continuous; adaptive quadrature at absolute tolerance 1e-10."""

    energy: _Marginal
    reserve: _Marginal

    def mean(self):
        return self.energy.mean() - self.reserve.positive_part_mean()

    def _pe_scalar(self, y):
        lo, hi = self.energy.support()
        f = lambda e: float(self.reserve.shifted_positive_expectation(y - e)) * float(self.energy.pdf(e))
        pts = [p for p in (y,) if lo < p < hi]
        if isinstance(self.energy, TabulatedCDF):
            pts += [p for p in self.energy.x[1:-1] if lo < p < hi]
        val, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=QUAD_EPSABS, epsrel=0, limit=200)
        return val

    def _cdf_scalar(self, x):
        rlo, rhi = self.reserve.support()
        if rhi <= 0:
            return float(self.energy.cdf(x))
        f = lambda r: float(self.energy.cdf(x + r)) * float(self.reserve.pdf(r))
        val, _ = integrate.quad(f, max(rlo, 0.0), rhi, epsabs=QUAD_EPSABS, epsrel=0, limit=200)
        return float(self.reserve.cdf(0.0)) * float(self.energy.cdf(x)) + val

    def partial_expectation(self, y):
        return np.vectorize(self._pe_scalar, otypes=[float])(np.asarray(y, dtype=float))

    def cdf(self, x):
        return np.vectorize(self._cdf_scalar, otypes=[float])(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# stages, seasonality and the model


@dataclass(frozen=True, eq=False)
class StageDistribution:
    """Innovation law for one stage.

    ``joint`` optionally holds rows ``(eps_e, eps_r, weight)``; when given it
    overrides the marginals for every purpose.
    """

    energy: _Marginal
    reserve: _Marginal = field(default_factory=lambda: PointMass(0.0))
    joint: np.ndarray | None = None

    def __post_init__(self):
        if self.joint is not None:
            j = np.asarray(self.joint, dtype=float)
            if j.ndim != 2 or j.shape[1] != 3 or j.shape[0] == 0:
                raise ValidationError("joint samples must be rows of (eps_e, eps_r, weight)")
            if not np.all(np.isfinite(j)) or np.any(j[:, 2] < 0) or j[:, 2].sum() <= 0:
                raise ValidationError("joint samples must be finite with nonnegative weights")
            j = j.copy()
            j[:, 2] = _normalized(j[:, 2])
            object.__setattr__(self, "joint", j)
            object.__setattr__(self, "energy", Empirical(j[:, 0], j[:, 2]))
            object.__setattr__(self, "reserve", Empirical(j[:, 1], j[:, 2]))

    @cached_property
    def effective(self) -> _Effective:
        """Distribution of eps_e - (eps_r)^+ (the effective price when lam = 0)."""
        if self.joint is not None:
            e, r, w = self.joint.T
            return DiscreteEffective(e - np.maximum(r, 0.0), w)
        en, re = self.energy, self.reserve
        if re.is_discrete:
            rv, rw = re.atoms()
            shifts = np.maximum(rv, 0.0)
            if en.is_discrete:
                ev, ew = en.atoms()
                return DiscreteEffective((ev[:, None] - shifts).ravel(), (ew[:, None] * rw).ravel())
            return _ShiftMixture(en, shifts, rw)
        if en.is_discrete:
            ev, ew = en.atoms()
            return _ReserveConditioned(ev, ew, re)
        return _QuadEffective(en, re)

    def nodes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Quadrature nodes (eps_e, eps_r, weight) for expectations over the stage."""
        if self.joint is not None:
            return self.joint[:, 0], self.joint[:, 1], self.joint[:, 2]
        if isinstance(self.energy, Gaussian) and isinstance(self.reserve, Gaussian):
            (ex, ew), (rx, rw) = self.energy.nodes(GAUSSIAN_CELLS_PAIRED), self.reserve.nodes(GAUSSIAN_CELLS_PAIRED)
        else:
            (ex, ew), (rx, rw) = self.energy.nodes(), self.reserve.nodes()
        return (
            np.repeat(ex, rx.size),
            np.tile(rx, ex.size),
            (ew[:, None] * rw).ravel(),
        )

    def mean(self) -> PricePair:
        return PricePair(self.energy.mean(), self.reserve.mean())

    def sample(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        if self.joint is not None:
            idx = rng.choice(self.joint.shape[0], size=size, p=self.joint[:, 2])
            return self.joint[idx, 0], self.joint[idx, 1]
        return self.energy.sample(rng, size), self.reserve.sample(rng, size)

    def to_dict(self) -> dict:
        if self.joint is not None:
            return {"joint": self.joint.tolist()}
        return {"energy": self.energy.to_dict(), "reserve": self.reserve.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "StageDistribution":
        if "joint" in d:
            return cls(PointMass(0.0), joint=d["joint"])
        reserve = distribution_from_dict(d["reserve"]) if "reserve" in d else PointMass(0.0)
        return cls(distribution_from_dict(d["energy"]), reserve)


@dataclass(frozen=True, eq=False)
class AffineSeasonality:
    """Per-stage affine mean map of the previous effective price.

    ``lam_t(psi) = (energy_intercept[t] + energy_slope[t] * psi,
                    reserve_intercept[t] + reserve_slope[t] * psi)``
    """

    energy_intercept: np.ndarray
    energy_slope: np.ndarray
    reserve_intercept: np.ndarray
    reserve_slope: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, k), dtype=float).ravel() for k in
                ("energy_intercept", "energy_slope", "reserve_intercept", "reserve_slope")]
        if len({a.size for a in arrs}) != 1:
            raise ValidationError("seasonality coefficient arrays must share one length")
        if np.any(arrs[1] < 0) or np.any(arrs[3] < 0):
            raise ValidationError("seasonality must be monotone nondecreasing (slopes >= 0)")
        for k, a in zip(("energy_intercept", "energy_slope", "reserve_intercept", "reserve_slope"), arrs):
            object.__setattr__(self, k, a)

    def __len__(self):
        return self.energy_intercept.size

    def __call__(self, t: int, psi):
        psi = np.asarray(psi, dtype=float)
        return (
            self.energy_intercept[t] + self.energy_slope[t] * psi,
            self.reserve_intercept[t] + self.reserve_slope[t] * psi,
        )

    def slice(self, start: int, stop: int) -> "AffineSeasonality":
        return AffineSeasonality(
            self.energy_intercept[start:stop], self.energy_slope[start:stop],
            self.reserve_intercept[start:stop], self.reserve_slope[start:stop],
        )

    def to_dict(self) -> dict:
        return {
            "kind": "affine",
            "energy_intercept": self.energy_intercept.tolist(),
            "energy_slope": self.energy_slope.tolist(),
            "reserve_intercept": self.reserve_intercept.tolist(),
            "reserve_slope": self.reserve_slope.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineSeasonality":
        if d.get("kind", "affine") != "affine":
            raise ValidationError(f"unsupported seasonality kind {d.get('kind')!r}")
        return cls(d["energy_intercept"], d["energy_slope"], d["reserve_intercept"], d["reserve_slope"])


Seasonality = Callable[[int, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class PriceModel:
    stages: tuple[StageDistribution, ...]
    seasonality: Seasonality | None = None
    initial_state: PricePair = PricePair(0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ValidationError("price model needs at least one stage")
        if self.seasonality is not None and hasattr(self.seasonality, "__len__"):
            if len(self.seasonality) != len(self.stages):
                raise ValidationError("seasonality length must equal the horizon")

    @property
    def horizon(self) -> int:
        return len(self.stages)

    @property
    def independent(self) -> bool:
        return self.seasonality is None

    def effective_distribution(self, t: int) -> _Effective:
        return self.stages[t].effective

    def slice(self, start: int, stop: int) -> "PriceModel":
        """Sub-model for stages ``start..stop-1`` (independent models only keep exact semantics)."""
        if not 0 <= start <= stop <= self.horizon or start == stop:
            raise ValidationError(f"bad stage slice [{start}, {stop})")
        seas = self.seasonality
        if seas is not None:
            if not hasattr(seas, "slice"):
                raise ValidationError("cannot slice a model with an opaque seasonality map")
            seas = seas.slice(start, stop)
        return PriceModel(self.stages[start:stop], seas, self.initial_state)

    def with_reserve(self, value: float = 0.0) -> "PriceModel":
        """Same energy law with the reserve price pinned to ``value``."""
        # joint samples collapse to their energy marginal once the reserve is pinned
        stages = tuple(StageDistribution(s.energy, PointMass(value)) for s in self.stages)
        return PriceModel(stages, self.seasonality, self.initial_state)

    def mean_model(self) -> "PriceModel":
        """Point-mass model at the stage means (independent models)."""
        if not self.independent:
            raise ValidationError("mean model is only defined for independent prices")
        return PriceModel(
            tuple(StageDistribution(PointMass(s.energy.mean()), PointMass(s.reserve.mean())) for s in self.stages),
            None,
            self.initial_state,
        )

    def to_dict(self) -> dict:
        if self.seasonality is not None and not hasattr(self.seasonality, "to_dict"):
            raise ValidationError("seasonality map is not serialisable")
        return {
            "horizon": self.horizon,
            "initial_state": {"energy": self.initial_state.energy, "reserve": self.initial_state.reserve},
            "stages": [s.to_dict() for s in self.stages],
            "seasonality": None if self.seasonality is None else self.seasonality.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriceModel":
        stages = tuple(StageDistribution.from_dict(s) for s in d["stages"])
        if "horizon" in d and int(d["horizon"]) != len(stages):
            raise ValidationError("horizon does not match the number of stages")
        seas = d.get("seasonality")
        init = d.get("initial_state") or {"energy": 0.0, "reserve": 0.0}
        return cls(
            stages,
            None if seas is None else AffineSeasonality.from_dict(seas),
            PricePair(float(init["energy"]), float(init["reserve"])),
        )

    @classmethod
    def deterministic(cls, prices: Sequence[PricePair] | np.ndarray) -> "PriceModel":
        arr = np.asarray([(p.energy, p.reserve) if isinstance(p, PricePair) else p for p in prices], dtype=float)
        return cls(tuple(StageDistribution(PointMass(e), PointMass(r)) for e, r in arr))


def effective_cdf(model: PriceModel, t: int, x):
    """P[eps_e - (eps_r)^+ <= x] for stage ``t`` of an independent model."""
    if not model.independent:
        raise ValidationError("effective_cdf needs an independent model; use the grid engine for correlated prices")
    if not 0 <= t < model.horizon:
        raise IndexError(f"stage {t} outside [0, {model.horizon})")
    return model.effective_distribution(t).cdf(x)


def sample_paths(model: PriceModel, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` price paths as an array of shape (n, T, 2) holding (energy, reserve)."""
    out = np.empty((n, model.horizon, 2))
    psi = np.full(n, effective_price(model.initial_state))
    for t, stage in enumerate(model.stages):
        ee, er = stage.sample(rng, n)
        if model.seasonality is not None:
            me, mr = model.seasonality(t, psi)
            ee, er = me + ee, mr + er
        out[:, t, 0] = ee
        out[:, t, 1] = er
        psi = ee - np.maximum(er, 0.0)
    return out


def sample_path(model: PriceModel, seed) -> list[PricePair]:
    rng = np.random.default_rng(seed)
    path = sample_paths(model, rng, 1)[0]
    return [PricePair(float(e), float(r)) for e, r in path]
