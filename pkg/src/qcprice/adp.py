"""Linear value-function approximation over inventory and the greedy ADP pricing policy.

V_t(I) ~ w_t . I, fitted backward from the terminal anchor w_{K+1} = -s by
ridge least squares on sampled (I_t, p_t, r_t, I_{t+1}) transitions.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .arrivals import ArrivalRateProfile
from .catalog import EpisodeConfig, InventoryState, SkuCatalog, availability_set
from .policies import (
    ExplorationPolicy,
    GuardrailPolicy,
    PolicyDecision,
    apply_inertia,
    initial_prices,
    lattice_search,
)
from .simulator import epoch_rate, run_episode, simulate_epoch

DEFAULT_RIDGE = 1e-8


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectorySample:
    epoch: int
    inventory: tuple[float, ...]
    prices: tuple[float, ...]
    reward: float
    next_inventory: tuple[float, ...]


@dataclass(frozen=True)
class ValueWeights:
    """Row ``t - 1`` of ``weights`` holds w_t for t = 1..K+1; the last row is the terminal -s."""

    weights: np.ndarray
    residual_rms: tuple[float, ...] = field(default=(), compare=False)
    sample_counts: tuple[int, ...] = field(default=(), compare=False)

    @property
    def num_epochs(self) -> int:
        return self.weights.shape[0] - 1

    def at(self, epoch: int) -> np.ndarray:
        if not 1 <= epoch <= self.num_epochs + 1:
            raise IndexError(f"epoch {epoch} outside 1..{self.num_epochs + 1}")
        return self.weights[epoch - 1]

    @classmethod
    def zeros(cls, num_epochs: int, catalog: SkuCatalog, terminal: bool = True) -> "ValueWeights":
        w = np.zeros((num_epochs + 1, len(catalog)))
        if terminal:
            w[-1] = -catalog.salvage_penalty
        return cls(w)


def value_estimate(weights: ValueWeights, epoch: int, inventory) -> float:
    return float(np.dot(weights.at(epoch), np.asarray(inventory, dtype=float)))


def samples_from_episode(result) -> list[TrajectorySample]:
    return [
        TrajectorySample(
            epoch=r.epoch,
            inventory=tuple(float(x) for x in r.inventory_before),
            prices=r.prices,
            reward=r.profit,
            next_inventory=tuple(float(x) for x in r.inventory_after),
        )
        for r in result.records
    ]


def fit_weights(
    samples: Iterable[TrajectorySample],
    catalog: SkuCatalog,
    num_epochs: int,
    ridge: float = DEFAULT_RIDGE,
) -> ValueWeights:
    """Backward fitted value iteration with ridge-regularised normal equations.

    For t = K..1: targets ``y = r_t + w_{t+1} . I_{t+1}`` are regressed on the
    ``I_t`` rows. The ridge penalty shrinks toward ``w_{t+1}`` rather than the
    origin, ``(X'X + ridge * Id) w = X'y + ridge * w_{t+1}``, so directions the
    samples don't excite inherit the next epoch's unit values.
    """
    by_epoch: dict[int, list[TrajectorySample]] = defaultdict(list)
    for s in samples:
        by_epoch[s.epoch].append(s)
    missing = [t for t in range(1, num_epochs + 1) if not by_epoch.get(t)]
    if missing:
        raise FitError(f"no samples for epochs {missing}")

    n = len(catalog)
    w = np.zeros((num_epochs + 1, n))
    w[num_epochs] = -catalog.salvage_penalty
    rms = [0.0] * num_epochs
    counts = [0] * num_epochs
    for t in range(num_epochs, 0, -1):
        group = by_epoch[t]
        x = np.array([s.inventory for s in group], dtype=float)
        x_next = np.array([s.next_inventory for s in group], dtype=float)
        r = np.array([s.reward for s in group], dtype=float)
        y = r + x_next @ w[t]
        if not np.all(np.isfinite(y)):
            raise FitError(f"non-finite regression targets at epoch {t}")
        # solve for the offset from w_{t+1}; exact when w_{t+1} already fits
        resid = y - x @ w[t]
        if ridge > 0:
            w_t = w[t] + np.linalg.solve(x.T @ x + ridge * np.eye(n), x.T @ resid)
        else:
            w_t = w[t] + np.linalg.lstsq(x, resid, rcond=None)[0]
        w[t - 1] = w_t
        rms[t - 1] = float(np.sqrt(np.mean((x @ w_t - y) ** 2)))
        counts[t - 1] = len(group)
    if not np.all(np.isfinite(w)):
        raise FitError("fitted weights are not finite")
    return ValueWeights(w, tuple(rms), tuple(counts))


def ridge_gradient(samples: Sequence[TrajectorySample], weights: ValueWeights, epoch: int,
                   ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Half the gradient of ||Xw - y||^2 + ridge ||w - w_{t+1}||^2 at the fitted w_t."""
    group = [s for s in samples if s.epoch == epoch]
    x = np.array([s.inventory for s in group], dtype=float)
    x_next = np.array([s.next_inventory for s in group], dtype=float)
    w_next = weights.at(epoch + 1)
    y = np.array([s.reward for s in group]) + x_next @ w_next
    w_t = weights.at(epoch)
    return x.T @ (x @ w_t - y) + ridge * (w_t - w_next)


def _mc_continuation(state, epoch, next_w, catalog, profile, config, draws, seed):
    """Monte Carlo estimate of E[w . I_{t+1}] per candidate row (validation mode)."""

    def value(rows: np.ndarray) -> np.ndarray:
        out = np.empty(len(rows))
        for k, row in enumerate(rows):
            rng = np.random.default_rng([seed, epoch, k])
            acc = 0.0
            for _ in range(draws):
                _, nxt = simulate_epoch(state, row, catalog, profile, config, rng)
                acc += float(np.dot(next_w, nxt.as_array()))
            out[k] = acc / draws
        return out

    return value


def adp_greedy_policy(
    state: InventoryState,
    p_prev,
    epoch: int,
    weights: ValueWeights,
    catalog: SkuCatalog,
    profile: ArrivalRateProfile,
    config: EpisodeConfig,
    mode: str = "certainty_equivalent",
    mc_draws: int = 32,
) -> PolicyDecision:
    """argmax over the price lattice of expected epoch profit + w_{t+1} . E[I_{t+1}].

    ``mode="certainty_equivalent"`` uses E[I_{t+1}] ~ max(0, I_t - D(p));
    ``mode="monte_carlo"`` averages ``mc_draws`` simulated epochs per candidate.
    """
    if epoch + 1 > weights.num_epochs + 1:
        raise IndexError(f"no continuation weights for epoch {epoch + 1}")
    next_w = weights.at(epoch + 1)
    if not availability_set(state):
        return PolicyDecision(prices=np.asarray(p_prev, dtype=float).copy())
    if mode == "certainty_equivalent":
        best, value = lattice_search(state, p_prev, catalog, profile, config, continuation_weights=next_w)
    elif mode == "monte_carlo":
        cont = _mc_continuation(state, epoch, next_w, catalog, profile, config, mc_draws, config.rng_seed)
        best, value = lattice_search(state, p_prev, catalog, profile, config, continuation=cont)
    else:
        raise ValueError(f"unknown continuation mode {mode!r}")
    prices = apply_inertia(best, p_prev, config.delta_max, config.price_floor, config.ceiling_for(catalog))
    return PolicyDecision(prices=prices, diagnostics={"lattice_prices": best, "objective": value})


class AdpPolicy:
    name = "adp"

    def __init__(self, weights: ValueWeights, mode: str = "certainty_equivalent"):
        self.weights = weights
        self.mode = mode
        self._cache: dict = {}

    def decide(self, state, p_prev, epoch, catalog, profile, config, rng=None):
        if self.mode != "certainty_equivalent":
            return adp_greedy_policy(state, p_prev, epoch, self.weights, catalog, profile, config, self.mode)
        available = availability_set(state)
        key = (catalog, config, state.on_hand, epoch, epoch_rate(profile, config, epoch))
        cached = self._cache.get(key) if available else None
        if cached is None:
            decision = adp_greedy_policy(state, p_prev, epoch, self.weights, catalog, profile, config)
            if available:
                idx = sorted(available)
                self._cache[key] = decision.diagnostics["lattice_prices"][idx].copy()
            return decision
        best = np.asarray(p_prev, dtype=float).copy()
        best[sorted(available)] = cached
        prices = apply_inertia(best, p_prev, config.delta_max, config.price_floor, config.ceiling_for(catalog))
        return PolicyDecision(prices=prices, diagnostics={"lattice_prices": best})


def collect_samples(catalog, config, profile, policy, num_episodes: int, seed: int) -> list[TrajectorySample]:
    p0 = initial_prices(catalog, profile, config)
    samples: list[TrajectorySample] = []
    for j in range(num_episodes):
        rng = np.random.default_rng([seed, j])
        samples.extend(samples_from_episode(run_episode(catalog, config, policy, profile, rng, p0)))
    return samples


def train_adp(
    catalog: SkuCatalog,
    config: EpisodeConfig,
    profile: ArrivalRateProfile,
    behavior_policy=None,
    num_training_episodes: int = 200,
    seed: int = 0,
    ridge: float = DEFAULT_RIDGE,
    refit_rounds: int = 0,
) -> ValueWeights:
    """Simulate under a behaviour policy, then fit value weights in one backward pass.

    The default behaviour policy is the guardrail policy with uniform price
    exploration. ``refit_rounds > 0`` repeats simulate-and-fit using the
    (exploring) greedy policy from the previous fit.
    """
    if num_training_episodes < 1:
        raise ValueError("num_training_episodes must be >= 1")
    if behavior_policy is None:
        behavior_policy = ExplorationPolicy(GuardrailPolicy())
    samples = collect_samples(catalog, config, profile, behavior_policy, num_training_episodes, seed)
    weights = fit_weights(samples, catalog, config.num_epochs, ridge)
    for round_ in range(1, refit_rounds + 1):
        policy = ExplorationPolicy(AdpPolicy(weights))
        samples = collect_samples(catalog, config, profile, policy, num_training_episodes, seed + round_)
        weights = fit_weights(samples, catalog, config.num_epochs, ridge)
    return weights


def write_weights(weights: ValueWeights, catalog: SkuCatalog, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "sku_id", "weight"])
        for t in range(1, weights.num_epochs + 2):
            for i, sku in enumerate(catalog.ids):
                w.writerow([t, sku, repr(float(weights.at(t)[i]))])


def read_weights(path: str | Path, catalog: SkuCatalog) -> ValueWeights:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["epoch"]), row["sku_id"], float(row["weight"])))
    if not rows:
        raise FitError(f"{path}: no weights")
    index = {sku: i for i, sku in enumerate(catalog.ids)}
    n_rows = max(t for t, _, _ in rows)
    w = np.full((n_rows, len(catalog)), np.nan)
    for t, sku, val in rows:
        if sku not in index:
            raise FitError(f"{path}: unknown SKU {sku!r}")
        w[t - 1, index[sku]] = val
    if np.isnan(w).any():
        raise FitError(f"{path}: incomplete weight table")
    return ValueWeights(w)


def exact_single_sku_value(
    catalog: SkuCatalog,
    config: EpisodeConfig,
    profile: ArrivalRateProfile,
    price_grid: Sequence[float] | None = None,
) -> tuple[float, dict]:
    """Optimal expected total profit for a one-SKU instance by exhaustive backward induction.

    Per-arrival purchase probability is the closed-form logistic
    ``1 / (1 + exp(-(alpha - beta p)))``, and epoch sales are
    ``min(I, Poisson(lambda dt d))`` exactly. Inertia is ignored. Returns
    the value at (t=1, I_0) and the optimal price per (epoch, inventory).
    """
    if len(catalog) != 1:
        raise ValueError("exact oracle is for single-SKU catalogs")
    sku = catalog.skus[0]
    grid = np.asarray(config.price_grid(catalog) if price_grid is None else price_grid, dtype=float)
    eta = float(catalog.effective_commission[0])
    k_epochs, i0 = config.num_epochs, sku.initial_inventory

    value_next = {i: -sku.salvage_penalty * i for i in range(i0 + 1)}
    policy: dict[tuple[int, int], float] = {}
    for t in range(k_epochs, 0, -1):
        lam_dt = epoch_rate(profile, config, t) * config.epoch_length
        value = {}
        for inv in range(i0 + 1):
            best = -math.inf
            for p in grid:
                d = 1.0 / (1.0 + math.exp(-(sku.alpha - sku.beta * p)))
                mu = lam_dt * d
                margin = (1 - eta) * p - sku.unit_cost
                pmf = [math.exp(-mu) * mu**k / math.factorial(k) for k in range(inv)]
                probs = pmf + [max(0.0, 1.0 - sum(pmf))]  # last entry: sell out
                total = sum(q * (k * margin + value_next[inv - k]) for k, q in enumerate(probs))
                if total > best + 1e-12:
                    best, policy[(t, inv)] = total, float(p)
            value[inv] = best
        value_next = value
    return value_next[i0], policy
