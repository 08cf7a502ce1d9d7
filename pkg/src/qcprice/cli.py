"""Command-line entry point: ``qcprice {estimate-lambda,simulate,compare,fit-adp}``.

Set ``QCPRICE_LOG_LEVEL`` (e.g. ``DEBUG``) to change log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .adp import AdpPolicy, read_weights, train_adp, write_weights
from .arrivals import OrderLogError, estimate_rate_profile, read_order_log, write_rate_profile
from .config import POLICY_NAMES, ConfigError, ScenarioConfig, load_scenario
from .policies import FixedPricePolicy, GuardrailPolicy, MyopicPolicy, initial_prices
from .simulator import (
    evaluate_policy,
    write_episode_summaries,
    write_trajectories,
)

log = logging.getLogger("qcprice")


def _fmt(x: float) -> str:
    return repr(float(x))


def build_policy(name: str, scenario: ScenarioConfig):
    params = scenario.params_for(name)
    cat, ep, prof = scenario.catalog, scenario.episode, scenario.profile
    if name == "fixed":
        prices = params.get("prices")
        if prices is None:
            prices = initial_prices(cat, prof, ep)
        return FixedPricePolicy(prices)
    if name == "myopic":
        return MyopicPolicy()
    if name == "guardrail":
        return GuardrailPolicy()
    if name == "adp":
        if params.get("weights"):
            base = scenario.source_path.parent if scenario.source_path else Path(".")
            weights = read_weights(base / params["weights"], cat)
        else:
            weights = fit_from_scenario(scenario)
        return AdpPolicy(weights, mode=params.get("mode", "certainty_equivalent"))
    raise ConfigError([f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}"])


def fit_from_scenario(scenario: ScenarioConfig):
    params = scenario.params_for("adp")
    return train_adp(
        scenario.catalog,
        scenario.episode,
        scenario.profile,
        num_training_episodes=int(params.get("training_episodes", 200)),
        seed=int(params.get("seed", scenario.base_seed)),
        ridge=float(params.get("ridge", 1e-8)),
        refit_rounds=int(params.get("refit_rounds", 0)),
    )


def cmd_estimate_lambda(args) -> int:
    try:
        order_log = read_order_log(args.log)
    except OrderLogError as exc:
        log.error("%s", exc)
        return 2
    except FileNotFoundError:
        log.error("order log not found: %s", args.log)
        return 2
    if not order_log.timestamps:
        log.warning("order log %s is empty; writing an all-zero profile", args.log)
    profile = estimate_rate_profile(order_log, args.window_minutes, period=args.period)
    write_rate_profile(profile, args.out)
    n = len(order_log.timestamps)
    peak = int(np.argmax(profile.rates))
    start = peak * profile.window_length
    print(f"total orders: {n}")
    if n:
        first, last = order_log.timestamps[0], order_log.timestamps[-1]
        print(f"coverage: {first.isoformat()} to {last.isoformat()}")
    print(f"windows: {len(profile.rates)} x {profile.window_length:g} min")
    print(f"peak window: {int(start // 60):02d}:{int(start % 60):02d} "
          f"lambda={profile.rates[peak]:.4f}/min")
    return 0


def _summary_row(ev, catalog):
    return [ev.policy, _fmt(ev.mean_profit), _fmt(ev.stderr)] + [_fmt(x) for x in ev.mean_leftover]


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.config)
    workers = args.workers or scenario.workers
    policy = build_policy(scenario.policy, scenario)
    ev = evaluate_policy(scenario.catalog, scenario.episode, policy, scenario.profile,
                         scenario.num_episodes, scenario.base_seed, workers=workers, keep_episodes=True)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectories(ev.episodes, scenario.catalog, out / "trajectories.csv")
    write_episode_summaries(ev.episodes, out / "episodes.csv")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "mean_profit", "stderr"] + [f"mean_leftover_{s}" for s in scenario.catalog.ids])
        w.writerow(_summary_row(ev, scenario.catalog))
    print(f"{ev.policy}: mean profit {ev.mean_profit:.4f} +/- {ev.stderr:.4f} "
          f"over {scenario.num_episodes} episodes")
    return 0


COMPARE_COLUMNS = ["policy", "mean_profit", "stderr", "mean_salvage_loss", "mean_units_unsold"]


def cmd_compare(args) -> int:
    names = [p.strip() for p in args.policies.split(",") if p.strip()]
    if len(names) < 2:
        log.error("need at least two policies")
        return 2
    scenario = load_scenario(args.config)
    workers = args.workers or scenario.workers
    rows = []
    for name in names:
        policy = build_policy(name, scenario)
        ev = evaluate_policy(scenario.catalog, scenario.episode, policy, scenario.profile,
                             scenario.num_episodes, scenario.base_seed, workers=workers)
        rows.append([name, _fmt(ev.mean_profit), _fmt(ev.stderr),
                     _fmt(ev.mean_salvage_loss), _fmt(ev.mean_units_unsold)])
        print(f"{name:>10}: {ev.mean_profit:.4f} +/- {ev.stderr:.4f}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        w.writerows(rows)
    return 0


def cmd_fit_adp(args) -> int:
    scenario = load_scenario(args.config)
    weights = fit_from_scenario(scenario)
    write_weights(weights, scenario.catalog, args.out)
    for t, rms in enumerate(weights.residual_rms, start=1):
        print(f"epoch {t}: residual rms {rms:.6g} ({weights.sample_counts[t - 1]} samples)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcprice", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-lambda", help="estimate a per-window arrival-rate profile from an order log")
    p.add_argument("--log", required=True)
    p.add_argument("--window-minutes", type=float, required=True)
    p.add_argument("--period", choices=["day", "week"], default="day")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate_lambda)

    p = sub.add_parser("simulate", help="evaluate the configured policy by Monte Carlo")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="compare policies under common random numbers")
    p.add_argument("--config", required=True)
    p.add_argument("--policies", required=True, help="comma-separated, e.g. fixed,myopic,guardrail,adp")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fit-adp", help="fit linear value weights and write them as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_adp)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("QCPRICE_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for err in exc.errors:
            log.error("config: %s", err)
        return 2
    except OSError as exc:
        log.error("%s: %s", exc.filename or "", exc.strerror or exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
