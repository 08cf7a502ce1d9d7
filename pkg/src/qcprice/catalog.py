"""Static market description (SKUs, commission, basket interaction) and per-episode state."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np


class CatalogError(ValueError):
    """Raised when a catalog or episode config violates its invariants.

    ``errors`` lists every violated invariant, not just the first.
    """

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class Sku:
    id: str
    alpha: float
    beta: float
    unit_cost: float
    salvage_penalty: float
    initial_inventory: int
    commission: float | None = None  # per-SKU override of the catalog commission


@dataclass(frozen=True)
class SkuCatalog:
    skus: tuple[Sku, ...]
    commission: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "skus", tuple(self.skus))

    def __len__(self) -> int:
        return len(self.skus)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.skus]

    @cached_property
    def alpha(self) -> np.ndarray:
        return np.array([s.alpha for s in self.skus], dtype=float)

    @cached_property
    def beta(self) -> np.ndarray:
        return np.array([s.beta for s in self.skus], dtype=float)

    @cached_property
    def unit_cost(self) -> np.ndarray:
        return np.array([s.unit_cost for s in self.skus], dtype=float)

    @cached_property
    def salvage_penalty(self) -> np.ndarray:
        return np.array([s.salvage_penalty for s in self.skus], dtype=float)

    @cached_property
    def initial_inventory(self) -> np.ndarray:
        return np.array([s.initial_inventory for s in self.skus], dtype=np.int64)

    @cached_property
    def effective_commission(self) -> np.ndarray:
        """Commission per SKU after applying overrides."""
        return np.array(
            [self.commission if s.commission is None else s.commission for s in self.skus],
            dtype=float,
        )

    def unit_margin(self, prices) -> np.ndarray:
        """Net margin (1 - eta_i) p_i - c_i per unit sold."""
        prices = np.asarray(prices, dtype=float)
        return (1.0 - self.effective_commission) * prices - self.unit_cost

    def to_dict(self) -> dict[str, Any]:
        skus = []
        for s in self.skus:
            d = {
                "id": s.id,
                "alpha": s.alpha,
                "beta": s.beta,
                "unit_cost": s.unit_cost,
                "salvage_penalty": s.salvage_penalty,
                "initial_inventory": s.initial_inventory,
            }
            if s.commission is not None:
                d["commission"] = s.commission
            skus.append(d)
        return {"skus": skus, "commission": self.commission, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SkuCatalog":
        skus = []
        for raw in data.get("skus", []):
            skus.append(
                Sku(
                    id=str(raw["id"]),
                    alpha=float(raw["alpha"]),
                    beta=float(raw["beta"]),
                    unit_cost=float(raw.get("unit_cost", 0.0)),
                    salvage_penalty=float(raw.get("salvage_penalty", 0.0)),
                    initial_inventory=int(raw["initial_inventory"]),
                    commission=None if raw.get("commission") is None else float(raw["commission"]),
                )
            )
        return cls(
            skus=tuple(skus),
            commission=float(data.get("commission", 0.0)),
            gamma=float(data.get("gamma", 0.0)),
        )


def validate_catalog(catalog: SkuCatalog) -> SkuCatalog:
    """Return ``catalog`` unchanged if valid, else raise CatalogError listing every problem."""
    errors = []
    if not catalog.skus:
        errors.append("catalog must contain at least one SKU")
    seen = set()
    for s in catalog.skus:
        if s.id in seen:
            errors.append(f"duplicate SKU id {s.id!r}")
        seen.add(s.id)
        if not s.beta > 0:
            errors.append(f"SKU {s.id!r}: beta must be positive (got {s.beta})")
        if s.initial_inventory < 0:
            errors.append(f"SKU {s.id!r}: initial_inventory must be >= 0 (got {s.initial_inventory})")
        if s.unit_cost < 0:
            errors.append(f"SKU {s.id!r}: unit_cost must be >= 0 (got {s.unit_cost})")
        if s.commission is not None and not 0.0 <= s.commission < 1.0:
            errors.append(f"SKU {s.id!r}: commission must be in [0, 1), i.e. commission must be < 1 (got {s.commission})")
        for name in ("alpha", "beta", "unit_cost", "salvage_penalty"):
            if not np.isfinite(getattr(s, name)):
                errors.append(f"SKU {s.id!r}: {name} must be finite")
    if not 0.0 <= catalog.commission < 1.0:
        errors.append(f"commission must be in [0, 1), i.e. commission must be < 1 (got {catalog.commission})")
    if not np.isfinite(catalog.gamma):
        errors.append("gamma must be finite")
    if errors:
        raise CatalogError(errors)
    return catalog


@dataclass(frozen=True)
class InventoryState:
    """On-hand units after ``epoch`` completed epochs (0 = start of horizon)."""

    epoch: int
    on_hand: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "on_hand", tuple(int(x) for x in self.on_hand))
        if any(x < 0 for x in self.on_hand):
            raise ValueError(f"negative inventory in {self.on_hand}")

    @classmethod
    def initial(cls, catalog: SkuCatalog) -> "InventoryState":
        return cls(0, tuple(int(s.initial_inventory) for s in catalog.skus))

    def as_array(self) -> np.ndarray:
        return np.array(self.on_hand, dtype=np.int64)


def availability_set(state: InventoryState) -> frozenset[int]:
    return frozenset(i for i, units in enumerate(state.on_hand) if units > 0)


@dataclass(frozen=True)
class EpisodeConfig:
    """Horizon discretisation and pricing-policy knobs.

    ``price_ceiling=None`` resolves to ``10 * max_i(max(alpha_i, 1) / beta_i)``
    via :meth:`ceiling_for`. ``initial_prices=None`` means the first-epoch
    reference price is the myopic solution with inertia disabled.
    """

    num_epochs: int
    epoch_length: float = 1.0
    rho: float = 0.9
    delta_max: float = float("inf")
    price_floor: float = 0.0
    price_ceiling: float | None = None
    rng_seed: int = 0
    initial_prices: tuple[float, ...] | None = None
    grid_points: int = 101
    demand_tol: float = 1e-6  # relative to lambda * dt
    max_sweeps: int = 50
    sweep_tol: float = 1e-6
    max_basket_size: int | None = None
    start_time: float = 0.0  # offset into the arrival-rate profile

    def __post_init__(self):
        if self.initial_prices is not None:
            object.__setattr__(self, "initial_prices", tuple(float(p) for p in self.initial_prices))

    @property
    def horizon(self) -> float:
        return self.num_epochs * self.epoch_length

    def epoch_start(self, epoch: int) -> float:
        """Profile time at which (1-based) ``epoch`` begins."""
        return self.start_time + (epoch - 1) * self.epoch_length

    def ceiling_for(self, catalog: SkuCatalog) -> float:
        if self.price_ceiling is not None:
            return float(self.price_ceiling)
        return float(10.0 * np.max(np.maximum(catalog.alpha, 1.0) / catalog.beta))

    def price_grid(self, catalog: SkuCatalog) -> np.ndarray:
        return np.linspace(self.price_floor, self.ceiling_for(catalog), self.grid_points)

    def validate(self, catalog: SkuCatalog | None = None) -> "EpisodeConfig":
        errors = []
        if self.num_epochs < 1:
            errors.append("num_epochs must be >= 1")
        if not self.epoch_length > 0:
            errors.append("epoch_length must be > 0")
        if not 0.0 < self.rho < 1.0:
            errors.append("rho must be in (0, 1)")
        if not self.delta_max >= 0:
            errors.append("delta_max must be >= 0")
        if not self.price_floor >= 0:
            errors.append("price_floor must be >= 0")
        if self.price_ceiling is not None and not self.price_ceiling > self.price_floor:
            errors.append("price_ceiling must exceed price_floor")
        if self.grid_points < 2:
            errors.append("grid_points must be >= 2")
        if catalog is not None and self.initial_prices is not None:
            if len(self.initial_prices) != len(catalog):
                errors.append(f"initial_prices needs {len(catalog)} entries")
            elif any(p < 0 for p in self.initial_prices):
                errors.append("initial_prices must be >= 0")
        if errors:
            raise CatalogError(errors)
        return self

    def to_dict(self) -> dict[str, Any]:
        out = {
            "num_epochs": self.num_epochs,
            "epoch_length": self.epoch_length,
            "rho": self.rho,
            "delta_max": self.delta_max,
            "price_floor": self.price_floor,
            "price_ceiling": self.price_ceiling,
            "rng_seed": self.rng_seed,
            "initial_prices": None if self.initial_prices is None else list(self.initial_prices),
            "grid_points": self.grid_points,
            "demand_tol": self.demand_tol,
            "max_sweeps": self.max_sweeps,
            "sweep_tol": self.sweep_tol,
            "max_basket_size": self.max_basket_size,
            "start_time": self.start_time,
        }
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EpisodeConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise CatalogError([f"unknown episode key {k!r}" for k in sorted(unknown)])
        kwargs = dict(data)
        if kwargs.get("delta_max") is None:
            kwargs.pop("delta_max", None)
        return cls(**kwargs)
