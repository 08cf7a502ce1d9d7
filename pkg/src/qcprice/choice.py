"""Basket-level multinomial logit over the power set of available SKUs.

Every arriving customer picks one basket (a subset of the in-stock SKUs,
possibly empty) with probability proportional to ``exp(U_b)``, where

    U_b = sum_{i in b} (alpha_i - beta_i p_i) + gamma * max(0, |b| - 1)

The empty basket has utility 0 and acts as the no-purchase option.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable

import numpy as np

from .catalog import SkuCatalog

MAX_FULL_ENUMERATION = 16


class BasketEnumerationError(ValueError):
    pass


@dataclass(frozen=True)
class BasketDistribution:
    baskets: tuple[tuple[int, ...], ...]
    probabilities: np.ndarray

    def probability_of(self, basket: Iterable[int]) -> float:
        key = tuple(sorted(basket))
        try:
            return float(self.probabilities[self.baskets.index(key)])
        except ValueError:
            return 0.0


def basket_utility(basket: Iterable[int], prices, catalog: SkuCatalog) -> float:
    items = sorted(set(basket))
    n = len(catalog)
    for i in items:
        if not 0 <= i < n:
            raise IndexError(f"SKU index {i} out of range for {n} SKUs")
    if not items:
        return 0.0
    prices = np.asarray(prices, dtype=float)
    idx = np.array(items)
    u = float(np.sum(catalog.alpha[idx] - catalog.beta[idx] * prices[idx]))
    return u + catalog.gamma * max(0, len(items) - 1)


def enumerate_baskets(available: Iterable[int], max_basket_size: int | None = None) -> list[tuple[int, ...]]:
    """All subsets of ``available`` ordered by size, then lexicographically."""
    items = sorted(set(available))
    if max_basket_size is None:
        if len(items) > MAX_FULL_ENUMERATION:
            raise BasketEnumerationError(
                f"{len(items)} available SKUs exceeds the full-enumeration cap of "
                f"{MAX_FULL_ENUMERATION}; pass max_basket_size"
            )
        limit = len(items)
    else:
        if max_basket_size < 0:
            raise BasketEnumerationError("max_basket_size must be >= 0")
        limit = min(max_basket_size, len(items))
    out: list[tuple[int, ...]] = []
    for size in range(limit + 1):
        out.extend(combinations(items, size))
    return out


@lru_cache(maxsize=4096)
def _membership(available: frozenset[int], n_skus: int, max_basket_size: int | None):
    baskets = tuple(enumerate_baskets(available, max_basket_size))
    m = np.zeros((len(baskets), n_skus), dtype=float)
    for row, b in enumerate(baskets):
        m[row, list(b)] = 1.0
    sizes = m.sum(axis=1)
    m.setflags(write=False)
    sizes.setflags(write=False)
    return baskets, m, sizes


def basket_structure(available: Iterable[int], n_skus: int, max_basket_size: int | None = None):
    """Cached ``(baskets, membership matrix, basket sizes)`` for an availability set."""
    available = frozenset(available)
    if any(not 0 <= i < n_skus for i in available):
        raise IndexError(f"availability set {sorted(available)} out of range for {n_skus} SKUs")
    return _membership(available, n_skus, max_basket_size)


def _softmax_rows(u: np.ndarray) -> np.ndarray:
    u = u - u.max(axis=-1, keepdims=True)
    e = np.exp(u)
    return e / e.sum(axis=-1, keepdims=True)


def basket_probabilities(
    prices, available: Iterable[int], catalog: SkuCatalog, max_basket_size: int | None = None
) -> BasketDistribution:
    baskets, m, sizes = basket_structure(available, len(catalog), max_basket_size)
    prices = np.asarray(prices, dtype=float)
    item_u = catalog.alpha - catalog.beta * prices
    u = m @ item_u + catalog.gamma * np.maximum(0.0, sizes - 1.0)
    return BasketDistribution(baskets, _softmax_rows(u))


def expected_item_demand(
    prices, available: Iterable[int], catalog: SkuCatalog, max_basket_size: int | None = None
) -> np.ndarray:
    """Per-arrival purchase probability d_i = sum over baskets containing i of P(b)."""
    return expected_item_demand_batch(np.asarray(prices, dtype=float)[None, :], available, catalog, max_basket_size)[0]


def expected_item_demand_batch(
    price_rows: np.ndarray, available: Iterable[int], catalog: SkuCatalog, max_basket_size: int | None = None
) -> np.ndarray:
    """Vectorised :func:`expected_item_demand` over rows of candidate price vectors."""
    _, m, sizes = basket_structure(available, len(catalog), max_basket_size)
    price_rows = np.atleast_2d(np.asarray(price_rows, dtype=float))
    item_u = catalog.alpha[None, :] - catalog.beta[None, :] * price_rows
    u = item_u @ m.T + catalog.gamma * np.maximum(0.0, sizes - 1.0)[None, :]
    return _softmax_rows(u) @ m


def expected_demand(
    prices,
    available: Iterable[int],
    catalog: SkuCatalog,
    lam: float,
    dt: float,
    max_basket_size: int | None = None,
) -> np.ndarray:
    """Expected units sold per SKU in an epoch: lambda * dt * d_i."""
    if lam < 0:
        raise ValueError(f"arrival rate must be >= 0, got {lam}")
    if not dt > 0:
        raise ValueError(f"epoch length must be > 0, got {dt}")
    return lam * dt * expected_item_demand(prices, available, catalog, max_basket_size)


def sample_baskets(
    dist_probs: np.ndarray, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``size`` basket row indices from a probability vector."""
    cdf = np.cumsum(dist_probs)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(size), side="right").clip(max=len(cdf) - 1)

