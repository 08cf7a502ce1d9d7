"""Scenario config file (YAML) loading and validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .arrivals import ArrivalRateProfile, OrderLogError, estimate_rate_profile, read_order_log
from .catalog import CatalogError, EpisodeConfig, SkuCatalog, validate_catalog

POLICY_NAMES = ("fixed", "myopic", "guardrail", "adp")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class ScenarioConfig:
    catalog: SkuCatalog
    episode: EpisodeConfig
    profile: ArrivalRateProfile
    policy: str
    policy_params: dict[str, dict[str, Any]] = field(default_factory=dict)
    num_episodes: int = 100
    base_seed: int = 0
    workers: int = 1
    source_path: Path | None = None

    def params_for(self, name: str) -> dict[str, Any]:
        return dict(self.policy_params.get(name) or {})


def _require(block: dict, key: str, where: str, errors: list) -> Any:
    if key not in block:
        errors.append(f"{where}.{key}: required")
        return None
    return block[key]


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError([f"{path}: config file not found"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: invalid YAML: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return scenario_from_dict(raw, base_dir=path.parent, source_path=path)


def scenario_from_dict(raw: dict, base_dir: Path | None = None, source_path: Path | None = None) -> ScenarioConfig:
    errors: list[str] = []
    base_dir = base_dir or Path(".")

    catalog = episode = profile = None
    cat_block = _require(raw, "catalog", "config", errors)
    if cat_block is not None:
        try:
            catalog = validate_catalog(SkuCatalog.from_dict(cat_block))
        except CatalogError as exc:
            errors.extend(f"catalog: {e}" for e in exc.errors)
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"catalog: malformed SKU entry ({exc})")

    ep_block = _require(raw, "episode", "config", errors)
    if ep_block is not None:
        try:
            episode = EpisodeConfig.from_dict(ep_block).validate(catalog)
        except CatalogError as exc:
            errors.extend(f"episode: {e}" for e in exc.errors)
        except TypeError as exc:
            errors.append(f"episode: {exc}")

    arr = raw.get("arrivals") or {}
    has_rate = "constant_rate" in arr
    has_log = "order_log" in arr
    if has_rate == has_log:
        errors.append("arrivals: specify exactly one of constant_rate or order_log")
    elif episode is not None:
        if has_rate:
            rate = float(arr["constant_rate"])
            if rate < 0:
                errors.append("arrivals.constant_rate: must be >= 0")
            else:
                profile = ArrivalRateProfile.constant(rate, episode.start_time + episode.horizon)
        else:
            log_path = base_dir / arr["order_log"]
            window = arr.get("window_minutes")
            if window is None:
                errors.append("arrivals.window_minutes: required with order_log")
            elif not log_path.exists():
                errors.append(f"arrivals.order_log: file not found: {log_path}")
            else:
                try:
                    profile = estimate_rate_profile(read_order_log(log_path), float(window),
                                                    period=arr.get("period", "day"))
                except OrderLogError as exc:
                    errors.append(f"arrivals.order_log: {exc}")
                if profile is not None and episode.start_time + episode.horizon > profile.horizon + 1e-9:
                    errors.append(
                        f"episode: start_time + num_epochs * epoch_length exceeds the "
                        f"{profile.horizon:g}-minute rate profile"
                    )

    policy = raw.get("policy", "guardrail")
    if policy not in POLICY_NAMES:
        errors.append(f"policy: must be one of {', '.join(POLICY_NAMES)} (got {policy!r})")
    params = raw.get("policies") or {}
    for name in params:
        if name not in POLICY_NAMES:
            errors.append(f"policies.{name}: unknown policy")
    fixed = params.get("fixed") or {}
    if catalog is not None and "prices" in fixed and len(fixed["prices"]) != len(catalog):
        errors.append(f"policies.fixed.prices: needs {len(catalog)} entries")

    exp = raw.get("experiment") or {}
    num_episodes = int(exp.get("num_episodes", 100))
    if num_episodes < 1:
        errors.append("experiment.num_episodes: must be >= 1")
    workers = int(exp.get("workers", 1))
    if workers < 1:
        errors.append("experiment.workers: must be >= 1")

    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(
        catalog=catalog,
        episode=episode,
        profile=profile,
        policy=policy,
        policy_params=params,
        num_episodes=num_episodes,
        base_seed=int(exp.get("base_seed", episode.rng_seed)),
        workers=workers,
        source_path=source_path,
    )
