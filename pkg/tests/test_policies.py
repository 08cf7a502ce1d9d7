import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcprice import (
    EpisodeConfig,
    FixedPricePolicy,
    InventoryState,
    apply_inertia,
    expected_demand,
    guardrail_policy,
    myopic_policy,
    run_episode,
    solve_price_for_targets,
    target_demand,
)
from qcprice.policies import SolverError, initial_prices

from conftest import constant_profile, make_catalog


def logistic_price(alpha, beta, lam_dt, target):
    """Invert target = lam_dt / (1 + exp(-(alpha - beta p))) for p."""
    return (alpha - math.log(target / (lam_dt - target))) / beta


def test_target_demand_examples():
    assert target_demand(100, 1, 10, 0.9) == pytest.approx(9.0)
    assert target_demand(0, 3, 10, 0.9) == 0.0
    assert target_demand(7, 5, 5, 0.5) == pytest.approx(3.5)
    with pytest.raises(ValueError):
        target_demand(7, 0, 5, 0.5)
    with pytest.raises(ValueError):
        target_demand(7, 6, 5, 0.5)


@given(st.integers(0, 500), st.integers(1, 30), st.floats(0.01, 0.99))
def test_targets_never_schedule_overselling(inventory, k, rho):
    for t in range(1, k + 1):
        per_epoch = target_demand(inventory, t, k, rho)
        assert per_epoch * (k - t + 1) <= rho * inventory + 1e-9
        assert rho * inventory <= inventory


def _one_sku(alpha=0.0, beta=1.0, inventory=10, ceiling=20.0, lam=10.0, delta=np.inf):
    cat = make_catalog([alpha], [beta], inventory=[inventory])
    cfg = EpisodeConfig(num_epochs=5, delta_max=delta, price_ceiling=ceiling, price_floor=0.0)
    return cat, cfg, constant_profile(lam, cfg)


def test_solver_logistic_midpoint():
    cat, cfg, prof = _one_sku()
    dec = solve_price_for_targets([5.0], InventoryState.initial(cat), cat, prof, cfg, [3.0])
    assert dec.prices[0] == pytest.approx(0.0, abs=1e-5)
    assert abs(dec.diagnostics["achieved_demand"][0] - 5.0) <= 1e-6 * 10


def test_solver_matches_closed_form_offset():
    cat, cfg, prof = _one_sku(alpha=1.5, beta=0.7)
    for target in (0.5, 2.0, 7.3):
        dec = solve_price_for_targets([target], InventoryState.initial(cat), cat, prof, cfg, [1.0])
        assert dec.prices[0] == pytest.approx(logistic_price(1.5, 0.7, 10.0, target), abs=1e-4)


def test_solver_zero_target_clamps_to_ceiling():
    cat, cfg, prof = _one_sku()
    dec = solve_price_for_targets([0.0], InventoryState.initial(cat), cat, prof, cfg, [1.0])
    assert dec.prices[0] == 20.0
    assert dec.diagnostics["unreachable"][0]
    assert dec.diagnostics["bracket_clamp"][0] == "ceiling"
    assert dec.diagnostics["achieved_demand"][0] > 0


def test_solver_excess_target_clamps_to_floor():
    cat, cfg, prof = _one_sku()
    dec = solve_price_for_targets([12.0], InventoryState.initial(cat), cat, prof, cfg, [1.0])
    assert dec.prices[0] == 0.0
    assert dec.diagnostics["bracket_clamp"][0] == "floor"


def test_solver_applies_inertia_after_solving():
    cat, cfg, prof = _one_sku(delta=0.25)
    dec = solve_price_for_targets([5.0], InventoryState.initial(cat), cat, prof, cfg, [3.0])
    assert dec.diagnostics["solved_prices"][0] == pytest.approx(0.0, abs=1e-5)
    assert dec.prices[0] == pytest.approx(2.75)
    assert dec.diagnostics["inertia_clamped"][0]


def test_solver_non_convergence_raises():
    cat = make_catalog([1.0, 1.0, 1.0], [1.0, 0.5, 0.8], inventory=[10, 10, 10], gamma=1.0)
    cfg = EpisodeConfig(num_epochs=5, max_sweeps=1, price_ceiling=20.0)
    with pytest.raises(SolverError) as info:
        solve_price_for_targets([2.0, 2.0, 2.0], InventoryState.initial(cat), cat,
                                constant_profile(10.0, cfg), cfg, [9.0, 9.0, 9.0])
    assert info.value.prices.shape == (3,)
    assert info.value.residuals.shape == (3,)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-1, 2), min_size=3, max_size=3),
    st.lists(st.floats(0.3, 2), min_size=3, max_size=3),
    st.floats(-0.8, 0.8),
    st.lists(st.floats(0.2, 2.0), min_size=3, max_size=3),
)
def test_coupled_solver_residuals(alphas, betas, gamma, targets):
    cat = make_catalog(alphas, betas, inventory=[10, 10, 10], gamma=gamma)
    cfg = EpisodeConfig(num_epochs=4, price_ceiling=30.0)
    prof = constant_profile(10.0, cfg)
    dec = solve_price_for_targets(targets, InventoryState.initial(cat), cat, prof, cfg, [1.0, 1.0, 1.0])
    d = expected_demand(dec.prices, {0, 1, 2}, cat, 10.0, 1.0)
    for i in range(3):
        if not dec.diagnostics["unreachable"][i]:
            assert abs(d[i] - targets[i]) <= 1e-6 * 10.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 9.0), st.floats(0.01, 0.9))
def test_monotone_response(target, bump):
    cat = make_catalog([0.4, 0.9], [0.8, 1.2], inventory=[10, 10], gamma=0.2)
    cfg = EpisodeConfig(num_epochs=4, price_ceiling=30.0)
    prof = constant_profile(10.0, cfg)
    state = InventoryState.initial(cat)
    lo = solve_price_for_targets([target * 0.5, 1.0], state, cat, prof, cfg, [1.0, 1.0])
    hi = solve_price_for_targets([target * 0.5 + bump, 1.0], state, cat, prof, cfg, [1.0, 1.0])
    assert hi.diagnostics["solved_prices"][0] <= lo.diagnostics["solved_prices"][0] + 1e-9


def test_apply_inertia_examples():
    assert list(apply_inertia([5.5], [5.0], 2.0)) == [5.5]
    assert list(apply_inertia([9.0], [5.0], 2.0)) == [7.0]
    assert list(apply_inertia([1.0], [5.0], 2.0)) == [3.0]
    assert list(apply_inertia([9.0, 0.0], [5.0, 4.0], 0.0)) == [5.0, 4.0]
    assert list(apply_inertia([9.0], [5.0], 10.0, floor=0.0, ceiling=8.0)) == [8.0]


prices = st.lists(st.floats(0, 50), min_size=1, max_size=4)


@given(prices, prices, st.floats(0, 10))
def test_apply_inertia_idempotent_never_widens(p_new, p_prev, delta):
    n = min(len(p_new), len(p_prev))
    p_new, p_prev = np.array(p_new[:n]), np.array(p_prev[:n])
    once = apply_inertia(p_new, p_prev, delta)
    assert np.array_equal(apply_inertia(once, p_prev, delta), once)
    assert np.all(np.abs(once - p_prev) <= delta)


def test_guardrail_stocked_out_keeps_prices():
    cat = make_catalog([1.0, 1.0], [1.0, 1.0], inventory=[0, 0])
    cfg = EpisodeConfig(num_epochs=3, delta_max=1.0)
    dec = guardrail_policy(InventoryState(1, (0, 0)), [2.0, 3.0], 2, cat, constant_profile(5.0, cfg), cfg)
    assert list(dec.prices) == [2.0, 3.0]
    assert list(dec.diagnostics["target_demand"]) == [0.0, 0.0]


def test_guardrail_symmetric_skus_get_identical_prices():
    cat = make_catalog([1.0, 1.0], [0.7, 0.7], costs=[0.2, 0.2], inventory=[12, 12], gamma=0.4)
    cfg = EpisodeConfig(num_epochs=4, delta_max=np.inf, price_ceiling=20.0)
    dec = guardrail_policy(InventoryState.initial(cat), [2.0, 2.0], 1, cat, constant_profile(10.0, cfg), cfg)
    assert dec.prices[0] == pytest.approx(dec.prices[1], abs=1e-6)


def test_guardrail_single_sku_matches_closed_form_then_clamp():
    cat, cfg, prof = _one_sku(inventory=20, delta=0.5)
    state = InventoryState(2, (10,))
    target = 0.9 * 10 / (5 - 3 + 1)
    closed = logistic_price(0.0, 1.0, 10.0, target)
    dec = guardrail_policy(state, [0.0], 3, cat, prof, cfg)
    assert dec.diagnostics["solved_prices"][0] == pytest.approx(closed, abs=1e-4)
    assert dec.prices[0] == pytest.approx(np.clip(closed, -0.5, 0.5), abs=1e-4)


def test_myopic_grid_matches_fine_grid():
    alpha, beta, lam = 2.0, 0.8, 10.0
    cat = make_catalog([alpha], [beta], inventory=[50])
    cfg = EpisodeConfig(num_epochs=2, price_ceiling=10.0)
    dec = myopic_policy(InventoryState.initial(cat), [1.0], 1, cat, constant_profile(lam, cfg), cfg)
    fine = np.linspace(0.0, 10.0, 1001)
    revenue = fine * lam / (1 + np.exp(-(alpha - beta * fine)))
    best = fine[np.argmax(revenue)]
    assert abs(dec.prices[0] - best) <= 10.0 / 100


def test_myopic_exact_tie_takes_lowest_prices():
    cat = make_catalog([1.0, 1.0], [1.0, 1.0], costs=[100.0, 100.0])
    cfg = EpisodeConfig(num_epochs=2, price_ceiling=5.0)
    dec = myopic_policy(InventoryState.initial(cat), [3.0, 3.0], 1, cat, constant_profile(0.0, cfg), cfg)
    assert list(dec.prices) == [0.0, 0.0]


def test_myopic_negative_margins_still_picks_argmax():
    cat = make_catalog([1.0], [1.0], costs=[100.0])
    cfg = EpisodeConfig(num_epochs=2, price_ceiling=5.0)
    dec = myopic_policy(InventoryState.initial(cat), [3.0], 1, cat, constant_profile(5.0, cfg), cfg)
    grid = cfg.price_grid(cat)
    scores = 5.0 / (1 + np.exp(-(1 - grid))) * (grid - 100.0)
    assert dec.prices[0] == grid[np.argmax(scores)]
    assert dec.diagnostics["objective"] < 0


def test_myopic_coordinate_ascent_for_many_skus():
    cat = make_catalog([1.0, 1.2, 0.8, 1.1], [1.0, 0.9, 1.1, 1.0], inventory=[5] * 4, gamma=0.0)
    cfg = EpisodeConfig(num_epochs=2, price_ceiling=8.0, grid_points=41)
    dec = myopic_policy(InventoryState.initial(cat), [2.0] * 4, 1, cat, constant_profile(10.0, cfg), cfg)
    grid = cfg.price_grid(cat)
    assert all(p in grid for p in dec.prices)
    assert len(set(np.round(dec.prices, 9))) >= 2


def test_fixed_policy_constant_path(desk_catalog):
    cfg = EpisodeConfig(num_epochs=5, delta_max=100.0, initial_prices=(1.0, 1.0))
    res = run_episode(desk_catalog, cfg, FixedPricePolicy([2.5, 1.5]), constant_profile(5.0, cfg),
                      np.random.default_rng(0))
    assert all(r.prices == (2.5, 1.5) for r in res.records)


def test_initial_prices_default_is_unconstrained_myopic(desk_catalog):
    cfg = EpisodeConfig(num_epochs=3, delta_max=0.1)
    prof = constant_profile(5.0, cfg)
    p0 = initial_prices(desk_catalog, prof, cfg)
    free = myopic_policy(InventoryState.initial(desk_catalog), p0, 1, desk_catalog, prof,
                         EpisodeConfig(num_epochs=3))
    np.testing.assert_array_equal(p0, free.prices)
    assert list(initial_prices(desk_catalog, prof, EpisodeConfig(num_epochs=3, initial_prices=(4, 5)))) == [4, 5]
