"""Arrival-level market simulation, episode loop and Monte Carlo policy evaluation."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .arrivals import ArrivalRateProfile, rate_at, sample_arrival_count
from .catalog import EpisodeConfig, InventoryState, SkuCatalog, availability_set
from .choice import basket_probabilities, basket_structure, sample_baskets

INERTIA_SLACK = 1e-9


class ContractViolation(RuntimeError):
    """A policy returned prices that break the inertia bound or are negative."""


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    prices: tuple[float, ...]
    arrivals: int
    realized_sales: tuple[int, ...]
    expected_sales: tuple[float, ...]
    revenue: float
    profit: float
    inventory_before: tuple[int, ...]
    inventory_after: tuple[int, ...]


@dataclass(frozen=True)
class EpisodeResult:
    records: tuple[EpochRecord, ...]
    salvage_loss: float
    total_profit: float

    @property
    def leftover(self) -> tuple[int, ...]:
        return self.records[-1].inventory_after

    def price_path(self) -> np.ndarray:
        return np.array([r.prices for r in self.records])


class PricingPolicy(Protocol):
    name: str

    def decide(self, state: InventoryState, p_prev: np.ndarray, epoch: int,
               catalog: SkuCatalog, profile: ArrivalRateProfile, config: EpisodeConfig,
               rng: np.random.Generator):
        """Return an object with a ``prices`` attribute for (1-based) ``epoch``."""


def epoch_rate(profile: ArrivalRateProfile, config: EpisodeConfig, epoch: int) -> float:
    """Arrival rate frozen at the start of ``epoch``."""
    return rate_at(profile, config.epoch_start(epoch))


def simulate_epoch(
    state: InventoryState,
    prices,
    catalog: SkuCatalog,
    profile: ArrivalRateProfile,
    config: EpisodeConfig,
    rng: np.random.Generator,
) -> tuple[EpochRecord, InventoryState]:
    """Simulate one epoch arrival by arrival.

    Baskets are drawn in blocks from the current availability set; a block is
    cut at the first arrival whose basket would need a unit that has already
    run out, availability is recomputed, and the remaining arrivals are
    redrawn. This has the same law as drawing each arrival sequentially.
    """
    if state.epoch >= config.num_epochs:
        raise ValueError(f"state epoch {state.epoch} is already at the horizon")
    epoch = state.epoch + 1
    prices = np.asarray(prices, dtype=float)
    n_skus = len(catalog)
    on_hand = state.as_array()
    lam = epoch_rate(profile, config, epoch)
    dt = config.epoch_length
    available = availability_set(state)

    expected = np.zeros(n_skus)
    if available:
        _, member, _ = basket_structure(available, n_skus, config.max_basket_size)
        probs = basket_probabilities(prices, available, catalog, config.max_basket_size).probabilities
        expected = lam * dt * (probs @ member)
    n_arrivals = sample_arrival_count(lam, dt, rng)

    sold = np.zeros(n_skus, dtype=np.int64)
    remaining = n_arrivals
    first = True
    while remaining > 0 and available:
        if not first:
            _, member, _ = basket_structure(available, n_skus, config.max_basket_size)
            probs = basket_probabilities(prices, available, catalog, config.max_basket_size).probabilities
        first = False
        rows = sample_baskets(probs, remaining, rng)
        take = member[rows].astype(np.int64)
        cum = np.cumsum(take, axis=0)
        over = np.nonzero((cum > on_hand).any(axis=1))[0]
        n_ok = remaining if over.size == 0 else int(over[0])
        if n_ok:
            units = cum[n_ok - 1]
            sold += units
            on_hand -= units
        remaining -= n_ok
        available = frozenset(int(i) for i in np.nonzero(on_hand > 0)[0])

    margin = catalog.unit_margin(prices)
    revenue = math.fsum(sold * (1.0 - catalog.effective_commission) * prices)
    profit = math.fsum(sold * margin)
    record = EpochRecord(
        epoch=epoch,
        prices=tuple(float(p) for p in prices),
        arrivals=int(n_arrivals),
        realized_sales=tuple(int(x) for x in sold),
        expected_sales=tuple(float(x) for x in expected),
        revenue=revenue,
        profit=profit,
        inventory_before=state.on_hand,
        inventory_after=tuple(int(x) for x in on_hand),
    )
    return record, InventoryState(epoch, record.inventory_after)


def terminal_salvage(final_state: InventoryState, catalog: SkuCatalog) -> float:
    """Salvage loss sum_i s_i I_i at the horizon (negative means salvage revenue)."""
    return math.fsum(float(s) * int(i) for s, i in zip(catalog.salvage_penalty, final_state.on_hand))


def check_prices(prices, p_prev, delta_max: float, epoch: int) -> np.ndarray:
    prices = np.asarray(prices, dtype=float)
    if prices.shape != np.shape(p_prev):
        raise ContractViolation(f"epoch {epoch}: expected {len(p_prev)} prices, got {prices.shape}")
    if not np.all(np.isfinite(prices)) or np.any(prices < 0):
        raise ContractViolation(f"epoch {epoch}: prices must be finite and >= 0, got {prices.tolist()}")
    jump = np.abs(prices - p_prev)
    if np.any(jump > delta_max + INERTIA_SLACK):
        i = int(np.argmax(jump))
        raise ContractViolation(
            f"epoch {epoch}: SKU {i} moved {jump[i]:.6g} > delta_max {delta_max:.6g}"
        )
    return prices


def run_episode(
    catalog: SkuCatalog,
    config: EpisodeConfig,
    policy: PricingPolicy,
    profile: ArrivalRateProfile,
    rng: np.random.Generator,
    initial_prices=None,
) -> EpisodeResult:
    if initial_prices is None:
        from .policies import initial_prices as _initial
        initial_prices = _initial(catalog, profile, config)
    p_prev = np.asarray(initial_prices, dtype=float)
    state = InventoryState.initial(catalog)
    records = []
    for epoch in range(1, config.num_epochs + 1):
        decision = policy.decide(state, p_prev, epoch, catalog, profile, config, rng)
        prices = check_prices(decision.prices, p_prev, config.delta_max, epoch)
        record, state = simulate_epoch(state, prices, catalog, profile, config, rng)
        records.append(record)
        p_prev = prices
    salvage = terminal_salvage(state, catalog)
    total = math.fsum(r.profit for r in records) - salvage
    return EpisodeResult(tuple(records), salvage, total)


@dataclass(frozen=True)
class PolicyEvaluation:
    policy: str
    mean_profit: float
    stderr: float
    mean_leftover: tuple[float, ...]
    mean_salvage_loss: float
    totals: tuple[float, ...]
    episodes: tuple[EpisodeResult, ...] = field(repr=False, default=())

    @property
    def mean_units_unsold(self) -> float:
        return float(sum(self.mean_leftover))


def episode_rng(base_seed: int, j: int) -> np.random.Generator:
    return np.random.default_rng(base_seed + j)


def evaluate_policy(
    catalog: SkuCatalog,
    config: EpisodeConfig,
    policy: PricingPolicy,
    profile: ArrivalRateProfile,
    num_episodes: int,
    base_seed: int,
    workers: int = 1,
    keep_episodes: bool = False,
) -> PolicyEvaluation:
    """Monte Carlo estimate of expected total profit; episode j uses seed ``base_seed + j``.

    Results are independent of ``workers``: each episode owns its generator
    and aggregation happens in episode order.
    """
    if num_episodes < 1:
        raise ValueError("num_episodes must be >= 1")
    from .policies import initial_prices as _initial
    p0 = _initial(catalog, profile, config)

    def one(j: int) -> EpisodeResult:
        return run_episode(catalog, config, policy, profile, episode_rng(base_seed, j), p0)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(num_episodes)))
    else:
        results = [one(j) for j in range(num_episodes)]

    totals = np.array([r.total_profit for r in results])
    leftovers = np.array([r.leftover for r in results], dtype=float)
    offsets = totals - totals[0]
    stderr = float(offsets.std(ddof=1) / np.sqrt(len(totals))) if len(totals) > 1 else 0.0
    return PolicyEvaluation(
        policy=getattr(policy, "name", type(policy).__name__),
        mean_profit=float(totals[0] + offsets.mean()),  # exact when all episodes agree
        stderr=stderr,
        mean_leftover=tuple(float(x) for x in leftovers.mean(axis=0)),
        mean_salvage_loss=float(np.mean([r.salvage_loss for r in results])),
        totals=tuple(float(x) for x in totals),
        episodes=tuple(results) if keep_episodes else (),
    )


TRAJECTORY_COLUMNS = [
    "episode", "epoch", "sku_id", "price", "expected_sales",
    "realized_sales", "inventory_after", "epoch_profit",
]
EPISODE_COLUMNS = ["episode", "total_profit", "salvage_loss"]


def write_trajectories(episodes: Sequence[EpisodeResult], catalog: SkuCatalog, path: str | Path) -> None:
    ids = catalog.ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for j, ep in enumerate(episodes):
            for rec in ep.records:
                for i, sku in enumerate(ids):
                    w.writerow([
                        j, rec.epoch, sku, repr(rec.prices[i]), repr(rec.expected_sales[i]),
                        rec.realized_sales[i], rec.inventory_after[i], repr(rec.profit),
                    ])


def write_episode_summaries(episodes: Sequence[EpisodeResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPISODE_COLUMNS)
        for j, ep in enumerate(episodes):
            w.writerow([j, repr(ep.total_profit), repr(ep.salvage_loss)])


def read_trajectories(path: str | Path) -> list[dict]:
    """Parse a trajectory CSV back into typed rows."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({
                "episode": int(row["episode"]),
                "epoch": int(row["epoch"]),
                "sku_id": row["sku_id"],
                "price": float(row["price"]),
                "expected_sales": float(row["expected_sales"]),
                "realized_sales": int(row["realized_sales"]),
                "inventory_after": int(row["inventory_after"]),
                "epoch_profit": float(row["epoch_profit"]),
            })
    return out
