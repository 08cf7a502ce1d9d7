"""Pricing policies: guardrail target-demand pricing plus fixed and myopic baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arrivals import ArrivalRateProfile
from .catalog import EpisodeConfig, InventoryState, SkuCatalog, availability_set
from .choice import basket_structure, expected_item_demand_batch
from .simulator import epoch_rate

FULL_LATTICE_MAX_SKUS = 3
COORDINATE_PASSES = 5
_LATTICE_CHUNK = 1 << 16


class SolverError(RuntimeError):
    def __init__(self, message: str, prices: np.ndarray, residuals: np.ndarray):
        super().__init__(message)
        self.prices = prices
        self.residuals = residuals


@dataclass
class PolicyDecision:
    prices: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def target_demand(inventory: float, epoch: int, num_epochs: int, rho: float) -> float:
    """Sales target rho * I / (K - t + 1) for 1-based epoch t."""
    if not 1 <= epoch <= num_epochs:
        raise ValueError(f"epoch {epoch} outside 1..{num_epochs}")
    return rho * inventory / (num_epochs - epoch + 1)


def apply_inertia(p_new, p_prev, delta_max: float, floor: float = 0.0, ceiling: float = np.inf) -> np.ndarray:
    p_new = np.asarray(p_new, dtype=float)
    p_prev = np.asarray(p_prev, dtype=float)
    out = np.clip(p_new, p_prev - delta_max, p_prev + delta_max)
    # p_prev + delta_max can round so that |out - p_prev| exceeds delta_max by an ulp
    over = np.abs(out - p_prev) > delta_max
    while np.any(over):
        out[over] = np.nextafter(out[over], p_prev[over])
        over = np.abs(out - p_prev) > delta_max
    return np.clip(out, floor, ceiling)


PRICE_XTOL = 1e-9


def _bisect_price(f, lo: float, hi: float, tol: float, max_iter: int = 200):
    """Root of a decreasing ``f`` on [lo, hi]; returns (price, iterations, clamp).

    ``clamp`` is "floor"/"ceiling" when the root lies outside the bracket.
    Stops once |f| <= tol and the bracket is narrower than PRICE_XTOL (relative),
    since a small demand residual can still hide a sizeable price error where
    demand is flat.
    """
    xtol = PRICE_XTOL * max(1.0, abs(hi))
    f_lo = f(lo)
    if f_lo <= 0:
        return lo, 0, "floor" if f_lo < 0 else None
    f_hi = f(hi)
    if f_hi >= 0:
        return hi, 0, "ceiling" if f_hi > 0 else None
    it = 0
    mid = 0.5 * (lo + hi)
    while it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if (abs(f_mid) <= tol and hi - lo <= xtol) or f_mid == 0 or mid in (lo, hi):
            break
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
    return mid, it, None


def solve_price_for_targets(
    targets,
    state: InventoryState,
    catalog: SkuCatalog,
    profile: ArrivalRateProfile,
    config: EpisodeConfig,
    p_prev,
) -> PolicyDecision:
    """Prices whose expected demand meets ``targets``, then clamped by inertia.

    Gauss-Seidel over SKUs; each inner step is a bisection on the SKU's own
    price with the others held fixed.
    """
    targets = np.asarray(targets, dtype=float)
    p_prev = np.asarray(p_prev, dtype=float)
    epoch = state.epoch + 1
    floor, ceiling = config.price_floor, config.ceiling_for(catalog)
    scale = epoch_rate(profile, config, epoch) * config.epoch_length
    tol = config.demand_tol * scale
    available = availability_set(state)
    mbs = config.max_basket_size

    p = np.clip(p_prev, floor, ceiling)
    n = len(catalog)
    iterations = np.zeros(n, dtype=int)
    clamps: list[str | None] = [None] * n
    active = sorted(available) if scale > 0 else []

    if available:
        _, member, sizes = basket_structure(available, n, mbs)
        bonus = catalog.gamma * np.maximum(0.0, sizes - 1.0)

    def demand(prices):
        if not available:
            return np.zeros(n)
        u = member @ (catalog.alpha - catalog.beta * prices) + bonus
        e = np.exp(u - u.max())
        return scale * (e @ member) / e.sum()

    converged = not active
    for _sweep in range(config.max_sweeps):
        if not active:
            break
        max_move = 0.0
        for i in active:
            def f(x, i=i):
                trial = p.copy()
                trial[i] = x
                return demand(trial)[i] - targets[i]

            new, its, clamp = _bisect_price(f, floor, ceiling, tol)
            iterations[i] += its
            clamps[i] = clamp
            max_move = max(max_move, abs(new - p[i]))
            p[i] = new
        residual = demand(p) - targets
        ok = all(abs(residual[i]) <= tol or clamps[i] is not None for i in active)
        if max_move < config.sweep_tol and ok:
            converged = True
            break
    if not converged:
        residual = demand(p) - targets
        raise SolverError(
            f"price solver did not converge in {config.max_sweeps} sweeps", p.copy(), residual
        )

    solved = p.copy()
    prices = apply_inertia(solved, p_prev, config.delta_max, floor, ceiling)
    achieved = demand(prices)
    return PolicyDecision(
        prices=prices,
        diagnostics={
            "target_demand": targets,
            "solved_prices": solved,
            "achieved_demand": achieved,
            "iterations": iterations,
            "unreachable": [c is not None for c in clamps],
            "bracket_clamp": clamps,
            "inertia_clamped": np.abs(prices - solved) > 1e-12,
        },
    )


def guardrail_policy(state, p_prev, epoch, catalog, profile, config) -> PolicyDecision:
    """Safety-adjusted target demand, root-find the matching prices, clamp by inertia."""
    if epoch != state.epoch + 1:
        raise ValueError(f"epoch {epoch} does not follow state epoch {state.epoch}")
    targets = np.array([
        target_demand(units, epoch, config.num_epochs, config.rho) for units in state.on_hand
    ])
    if not availability_set(state):
        return PolicyDecision(
            prices=np.asarray(p_prev, dtype=float).copy(),
            diagnostics={"target_demand": targets},
        )
    return solve_price_for_targets(targets, state, catalog, profile, config, p_prev)


def fixed_price_policy(p_fixed, p_prev, config: EpisodeConfig, catalog: SkuCatalog) -> PolicyDecision:
    prices = apply_inertia(p_fixed, p_prev, config.delta_max, config.price_floor, config.ceiling_for(catalog))
    return PolicyDecision(prices=prices, diagnostics={"requested": np.asarray(p_fixed, dtype=float)})


def lattice_search(
    state: InventoryState,
    p_prev,
    catalog: SkuCatalog,
    profile: ArrivalRateProfile,
    config: EpisodeConfig,
    continuation_weights=None,
    continuation=None,
) -> tuple[np.ndarray, float]:
    """Maximise expected epoch profit (+ optional linear continuation value) over the price lattice.

    Only in-stock SKUs are searched; the rest keep ``p_prev``. The
    continuation value is ``w . max(0, I - D(p))``. ``continuation`` may be
    a callable ``rows -> values`` replacing that certainty-equivalent term.
    Ties go to the lexicographically smallest price vector.
    """
    p_prev = np.asarray(p_prev, dtype=float)
    available = sorted(availability_set(state))
    base = p_prev.copy()
    if not available:
        return base, 0.0
    grid = config.price_grid(catalog)
    scale = epoch_rate(profile, config, state.epoch + 1) * config.epoch_length
    inv = state.as_array().astype(float)
    margin_coef = 1.0 - catalog.effective_commission
    avail_set = frozenset(available)
    weights = None if continuation_weights is None else np.asarray(continuation_weights, dtype=float)

    def score(rows: np.ndarray) -> np.ndarray:
        d = scale * expected_item_demand_batch(rows, avail_set, catalog, config.max_basket_size)
        margins = margin_coef[None, :] * rows - catalog.unit_cost[None, :]
        value = (d * margins).sum(axis=1)
        if continuation is not None:
            value = value + continuation(rows)
        elif weights is not None:
            value = value + (np.maximum(0.0, inv[None, :] - d) * weights[None, :]).sum(axis=1)
        return value

    if len(available) <= FULL_LATTICE_MAX_SKUS:
        k = len(available)
        best_val, best_idx = -np.inf, None
        n_points = len(grid) ** k
        # C-order enumeration of the index lattice is lexicographic
        for start in range(0, n_points, _LATTICE_CHUNK):
            flat = np.arange(start, min(start + _LATTICE_CHUNK, n_points))
            idx = np.stack(np.unravel_index(flat, (len(grid),) * k), axis=1)
            rows = np.repeat(base[None, :], len(flat), axis=0)
            rows[:, available] = grid[idx]
            vals = score(rows)
            j = int(np.argmax(vals))
            if vals[j] > best_val:
                best_val, best_idx = float(vals[j]), idx[j]
        best = base.copy()
        best[available] = grid[best_idx]
        return best, best_val

    current = base.copy()
    current[available] = grid[np.abs(grid[:, None] - np.clip(base[available], grid[0], grid[-1])).argmin(axis=0)]
    best_val = float(score(current[None, :])[0])
    for _ in range(COORDINATE_PASSES):
        changed = False
        for i in available:
            rows = np.repeat(current[None, :], len(grid), axis=0)
            rows[:, i] = grid
            vals = score(rows)
            j = int(np.argmax(vals))
            if grid[j] != current[i] and vals[j] > best_val:
                current[i] = grid[j]
                best_val = float(vals[j])
                changed = True
        if not changed:
            break
    return current, best_val


def myopic_policy(state, p_prev, epoch, catalog, profile, config, cache: dict | None = None) -> PolicyDecision:
    """Maximise the current epoch's expected profit alone, then clamp by inertia.

    The lattice optimum depends only on the availability set and the epoch's
    arrival intensity, so ``cache`` (any dict) can memoise it across calls.
    """
    available = availability_set(state)
    if not available:
        return PolicyDecision(prices=np.asarray(p_prev, dtype=float).copy())
    key = (catalog, config, available, epoch_rate(profile, config, epoch))
    if cache is not None and key in cache:
        best_avail, value = cache[key]
        best = np.asarray(p_prev, dtype=float).copy()
        best[sorted(available)] = best_avail
    else:
        best, value = lattice_search(state, p_prev, catalog, profile, config)
        if cache is not None:
            cache[key] = (best[sorted(available)].copy(), value)
    prices = apply_inertia(best, p_prev, config.delta_max, config.price_floor, config.ceiling_for(catalog))
    return PolicyDecision(prices=prices, diagnostics={"lattice_prices": best, "objective": value})


def initial_prices(catalog: SkuCatalog, profile: ArrivalRateProfile, config: EpisodeConfig) -> np.ndarray:
    """p_0: ``config.initial_prices`` when given, else the unconstrained myopic price at t=1."""
    if config.initial_prices is not None:
        return np.asarray(config.initial_prices, dtype=float)
    state = InventoryState.initial(catalog)
    start = np.full(len(catalog), config.price_floor)
    best, _ = lattice_search(state, start, catalog, profile, config)
    return best


class FixedPricePolicy:
    def __init__(self, prices, name: str = "fixed"):
        self.prices = np.asarray(prices, dtype=float)
        self.name = name

    def decide(self, state, p_prev, epoch, catalog, profile, config, rng=None):
        return fixed_price_policy(self.prices, p_prev, config, catalog)


class MyopicPolicy:
    name = "myopic"

    def __init__(self):
        self._cache: dict = {}

    def decide(self, state, p_prev, epoch, catalog, profile, config, rng=None):
        return myopic_policy(state, p_prev, epoch, catalog, profile, config, self._cache)


class GuardrailPolicy:
    name = "guardrail"

    def decide(self, state, p_prev, epoch, catalog, profile, config, rng=None):
        return guardrail_policy(state, p_prev, epoch, catalog, profile, config)


class ExplorationPolicy:
    """Wraps a policy and perturbs its prices uniformly by +/- ``amplitude``, then re-clamps.

    ``amplitude=None`` uses half of ``config.delta_max`` (or 5% of the price
    range when inertia is unbounded).
    """

    def __init__(self, base, amplitude: float | None = None):
        self.base = base
        self.amplitude = amplitude
        self.name = f"{base.name}+explore"

    def decide(self, state, p_prev, epoch, catalog, profile, config, rng):
        decision = self.base.decide(state, p_prev, epoch, catalog, profile, config, rng)
        amp = self.amplitude
        if amp is None:
            ceiling = config.ceiling_for(catalog)
            amp = config.delta_max / 2 if np.isfinite(config.delta_max) else 0.05 * (ceiling - config.price_floor)
        noise = rng.uniform(-amp, amp, size=len(decision.prices))
        prices = apply_inertia(decision.prices + noise, p_prev, config.delta_max,
                               config.price_floor, config.ceiling_for(catalog))
        return PolicyDecision(prices=prices, diagnostics={**decision.diagnostics, "noise": noise})

