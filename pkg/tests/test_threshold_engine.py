import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from flexload.errors import FixedPointError, NonMonotoneError, ValidationError
from flexload.oracle import DiscreteInstance, compare_correlated
from flexload.price_model import (
    AffineSeasonality,
    Empirical,
    Gaussian,
    PointMass,
    PriceModel,
    PricePair,
    StageDistribution,
    TabulatedCDF,
)
from flexload.threshold_engine import (
    LoadSpec,
    ThresholdTable,
    augment_horizon,
    compile_correlated,
    compile_deterministic,
    compile_independent,
    g_integral,
    value_function,
)

NEG = -math.inf
dyadic = st.integers(-800, 800).map(lambda k: k / 8)


@pytest.fixture
def worked():
    spec = LoadSpec(1.5, 1.0, 2, 10.0)
    return spec, compile_deterministic(spec, [(5.0, 1.0), (7.0, 0.0)])


def test_worked_instance_rows(worked):
    _, table = worked
    assert table.values.tolist() == [[NEG, 4.0, 7.0], [NEG, 7.0, 10.0], [NEG, 10.0, 10.0]]


def test_worked_instance_value(worked):
    spec, table = worked
    assert value_function(table, spec, 1.5) == 7.5
    assert value_function(table, spec, 0.0) == 0.0


def test_prices_above_penalty_leave_the_table_flat():
    spec = LoadSpec(3.0, 1.0, 3, 10.0)
    table = compile_independent(spec, PriceModel((StageDistribution(Empirical([20.0, 30.0])),) * 3))
    assert np.all(table.values[:, 1:] == 10.0)
    d = (spec.horizon + 1) * spec.capacity
    assert value_function(table, spec, d) == pytest.approx(d * 10.0)


def test_g_integral_examples():
    assert g_integral(StageDistribution(PointMass(2.0)), 1.0, 3.0) == 1.0
    assert g_integral(StageDistribution(PointMass(2.0)), 2.5, 2.5) == 0.0
    assert g_integral(StageDistribution(Empirical([1.0, 3.0])), 0.0, 4.0) == 2.0
    assert g_integral(StageDistribution(Empirical([1.0, 3.0])), NEG, 4.0) == 2.0
    with pytest.raises(ValidationError):
        g_integral(StageDistribution(PointMass(2.0)), 3.0, 1.0)


@given(dyadic, dyadic, dyadic)
def test_point_mass_g_is_the_closed_form(a, b, eps):
    z, z2 = min(a, b), max(a, b)
    assert g_integral(StageDistribution(PointMass(eps)), z, z2) == max(z2 - max(z, eps), 0.0)


@given(st.floats(-50, 50), st.floats(0, 40))
def test_gaussian_g_matches_quadrature(z, width):
    stage = StageDistribution(Gaussian(5.0, 7.0), TabulatedCDF([-1.0, 3.0], [0.0, 1.0]))
    eff = stage.effective
    ref, _ = integrate.quad(lambda u: float(eff.cdf(u)), z, z + width, epsabs=1e-11)
    assert g_integral(stage, z, z + width) == pytest.approx(ref, abs=1e-8)


def _closed_form_recursion(eps, penalty):
    T = len(eps)
    m = [[NEG] + [penalty] * T for _ in range(T + 1)]
    for t in range(T - 1, -1, -1):
        for i in range(1, T + 1):
            z, z2 = m[t + 1][i - 1], m[t + 1][i]
            m[t][i] = min(z2, max(z, eps[t]))
    return m


@given(st.lists(dyadic, min_size=1, max_size=8), dyadic)
def test_point_mass_compile_matches_closed_form(eps, penalty):
    spec = LoadSpec(0.0, 1.0, len(eps), penalty)
    table = compile_deterministic(spec, [(e, 0.0) for e in eps])
    assert table.values.tolist() == _closed_form_recursion(eps, penalty)


def _random_stage(draw):
    kind = draw(st.sampled_from(["point", "empirical", "gauss", "tab", "mixed"]))
    loc = draw(st.floats(0, 80))
    if kind == "point":
        return StageDistribution(PointMass(loc), PointMass(draw(st.floats(-5, 10))))
    if kind == "empirical":
        vals = draw(st.lists(st.floats(-20, 100), min_size=1, max_size=5))
        return StageDistribution(Empirical(vals), Empirical([draw(st.floats(-5, 10)), 0.0]))
    if kind == "gauss":
        return StageDistribution(Gaussian(loc, draw(st.floats(0.5, 20))), PointMass(draw(st.floats(0, 8))))
    if kind == "tab":
        return StageDistribution(TabulatedCDF([loc, loc + draw(st.floats(1, 30))], [0.0, 1.0]))
    return StageDistribution(Empirical([loc, loc + 10]), Gaussian(2.0, draw(st.floats(0.5, 5))))


@st.composite
def models(draw, max_horizon=6):
    T = draw(st.integers(1, max_horizon))
    return PriceModel(tuple(_random_stage(draw) for _ in range(T))), draw(st.floats(-10, 120))


def assert_structure(table: ThresholdTable, penalty: float):
    v = table.values
    T = table.horizon
    assert np.all(np.isneginf(v[:, 0]))
    assert np.all(v[T, 1:] == penalty)
    assert np.all(np.diff(v[:, 1:], axis=1) >= 0)
    for t in range(T):
        assert np.all(v[t, 1:] <= v[t + 1, 1:])
        assert np.all(v[t, 1:] >= v[t + 1, :-1])


@given(models())
def test_compiled_tables_keep_their_structure(mp):
    model, penalty = mp
    spec = LoadSpec(0.0, 1.0, model.horizon, penalty)
    assert_structure(compile_independent(spec, model), penalty)


@given(models(), st.lists(st.floats(0, 8), min_size=3, max_size=3))
def test_value_function_is_convex(mp, ds):
    model, penalty = mp
    spec = LoadSpec(0.0, 0.5, model.horizon, penalty)
    table = compile_independent(spec, model)
    a, b, _ = sorted(ds)
    fa, fb, fm = value_function(table, spec, np.array([a, b, 0.5 * (a + b)]))
    assert fm <= 0.5 * (fa + fb) + 1e-9 * (1 + abs(fa) + abs(fb))


def test_trailing_pieces_carry_the_penalty():
    spec = LoadSpec(0.0, 1.0, 5, 50.0)
    table = compile_independent(spec, PriceModel((StageDistribution(Gaussian(30.0, 9.0)),) * 5))
    for t in range(6):
        assert np.all(table.values[t, 5 - t + 1:] == 50.0)
        assert np.all(table.values[t, 1: 5 - t + 1] < 50.0)


def test_workers_do_not_change_the_table():
    T = 40
    model = PriceModel(tuple(StageDistribution(Gaussian(30.0 + t, 8.0), PointMass(3.0)) for t in range(T)))
    spec = LoadSpec(0.0, 1.0, T, 90.0)
    base = compile_independent(spec, model, workers=1)
    for w in (2, 3, 7):
        assert compile_independent(spec, model, workers=w) == base


def test_augment_matches_full_recompute():
    stages = (StageDistribution(Empirical([3.0, 9.0])), StageDistribution(Gaussian(6.0, 2.0)),
              StageDistribution(PointMass(4.0), PointMass(1.0)))
    full_model = PriceModel(stages)
    spec3 = LoadSpec(0.0, 1.0, 3, 12.0)
    short = compile_independent(spec3.with_horizon(2), full_model.slice(1, 3))
    grown = augment_horizon(short, spec3, full_model)
    assert grown == compile_independent(spec3, full_model)
    assert np.array_equal(grown.values[1:, :3], short.values)
    assert augment_horizon(short, spec3.with_horizon(2), full_model.slice(1, 3)) is short


def test_augment_rejects_mismatches():
    model = PriceModel((StageDistribution(PointMass(3.0)),) * 2)
    table = compile_independent(LoadSpec(0.0, 1.0, 1, 12.0), model.slice(1, 2))
    with pytest.raises(ValidationError):
        augment_horizon(table, LoadSpec(0.0, 2.0, 2, 12.0), model)
    with pytest.raises(ValidationError):
        augment_horizon(table, LoadSpec(0.0, 1.0, 2, 11.0), model)


def test_suffix_is_the_tail_of_the_table():
    model = PriceModel(tuple(StageDistribution(Gaussian(20.0 + 3 * t, 5.0)) for t in range(5)))
    spec = LoadSpec(0.0, 1.0, 5, 60.0)
    table = compile_independent(spec, model)
    assert table.suffix(3) == compile_independent(spec.with_horizon(3), model.slice(2, 5))


def test_input_validation():
    seas = AffineSeasonality([0.0], [1.0], [0.0], [0.0])
    with pytest.raises(ValidationError):
        compile_independent(LoadSpec(0.0, 1.0, 1, 5.0), PriceModel((StageDistribution(PointMass(1.0)),), seas))
    with pytest.raises(ValidationError):
        compile_independent(LoadSpec(0.0, 1.0, 2, 5.0), PriceModel((StageDistribution(PointMass(1.0)),)))
    for bad in [dict(demand=-1.0), dict(capacity=0.0), dict(horizon=0), dict(shortfall_penalty=math.inf)]:
        kw = dict(demand=1.0, capacity=1.0, horizon=2, shortfall_penalty=5.0) | bad
        with pytest.raises(ValidationError):
            LoadSpec(**kw)
    with pytest.raises(ValidationError):
        ThresholdTable(np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        value_function(np.array([NEG, 1.0]), LoadSpec(0.0, 1.0, 1, 5.0), -0.5)


# correlated engine


def _zero_seasonality(T):
    z = np.zeros(T)
    return AffineSeasonality(z, z, z, z)


def test_correlated_engine_without_memory_matches_independent():
    stages = (StageDistribution(Empirical([3.0, 9.0, 14.0])), StageDistribution(Empirical([2.0, 6.0]), Empirical([0.0, 2.0])),
              StageDistribution(PointMass(5.0)))
    spec = LoadSpec(2.0, 1.0, 3, 20.0)
    indep = compile_independent(spec, PriceModel(stages))
    sol = compile_correlated(spec, PriceModel(stages, _zero_seasonality(3)), delta=1e-3)
    for t in range(4):
        np.testing.assert_allclose(sol.coefficients(t, 0.0)[1:], indep.values[t, 1:], atol=1e-9)
        np.testing.assert_allclose(sol.coefficients(t, 37.0)[1:], indep.values[t, 1:], atol=1e-9)


def test_correlated_engine_with_gaussian_innovations_tracks_the_closed_form():
    T = 4
    spec = LoadSpec(2.0, 1.0, T, 80.0)
    seas = AffineSeasonality(np.full(T, 40.0), np.zeros(T), np.zeros(T), np.zeros(T))
    sol = compile_correlated(spec, PriceModel((StageDistribution(Gaussian(0.0, 4.0), PointMass(1.5)),) * T, seas),
                             delta=0.02)
    indep = compile_independent(spec, PriceModel((StageDistribution(Gaussian(40.0, 4.0), PointMass(1.5)),) * T))
    np.testing.assert_allclose(sol.thresholds.values[:T, 1:], indep.values[:T, 1:], atol=1e-4)


def test_gaussian_cells_keep_the_mean_and_sum_to_one():
    x, w = Gaussian(3.0, 2.0).nodes()
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert x @ w == pytest.approx(3.0, abs=1e-12)
    assert np.all(np.diff(x) > 0)


def test_correlated_terminal_row_is_flat():
    T = 3
    seas = AffineSeasonality(np.full(T, 2.0), np.full(T, 0.8), np.zeros(T), np.zeros(T))
    model = PriceModel((StageDistribution(Empirical([-3.0, 4.0])),) * T, seas, PricePair(10.0, 0.0))
    sol = compile_correlated(LoadSpec(1.0, 1.0, T, 40.0), model, delta=0.05)
    assert np.all(sol.grid.values[T, 1:] == 40.0)
    assert np.all(sol.thresholds.values[T, 1:] == 40.0)


def test_persistent_prices_match_the_state_oracle():
    T = 2
    seas = AffineSeasonality(np.zeros(T), np.ones(T), np.zeros(T), np.zeros(T))
    spec = LoadSpec(1.5, 1.0, T, 10.0)
    inst = DiscreteInstance(spec, ((((PricePair(0.0, 0.0)), 1.0),),) * T, seasonality=seas,
                            initial_state=PricePair(6.0, 0.0))
    sol = compile_correlated(spec, inst.price_model(), delta=1e-2)
    report = compare_correlated(inst, sol)
    assert report.max_deviation < 1e-6 and report.all_optimal
    # the price never moves, so every piece that fits in the horizon costs 6
    np.testing.assert_allclose(sol.coefficients(0)[1:], [6.0, 6.0])


def test_correlated_rejects_decreasing_seasonality():
    T = 2
    model = PriceModel((StageDistribution(Empirical([0.0, 5.0])),) * T, lambda t, psi: (-np.asarray(psi), 0 * np.asarray(psi)),
                       PricePair(3.0, 0.0))
    with pytest.raises(NonMonotoneError):
        compile_correlated(LoadSpec(1.0, 1.0, T, 20.0), model, grid=np.linspace(-30, 30, 121))


def test_correlated_fixed_point_outside_grid():
    T = 1
    model = PriceModel((StageDistribution(PointMass(5.0)),), _zero_seasonality(T))
    with pytest.raises(FixedPointError):
        compile_correlated(LoadSpec(1.0, 1.0, T, 20.0), model, grid=[0.0, 1.0, 2.0])
