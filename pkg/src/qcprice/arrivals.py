"""Poisson order arrivals and piecewise-constant rate profiles estimated from order logs.

Times inside a profile are measured in minutes from the start of the
aggregation period (midnight for ``period="day"``, Monday 00:00 UTC for
``period="week"``). Windows are half-open ``[start, start + window_length)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

PERIOD_MINUTES = {"day": 24 * 60, "week": 7 * 24 * 60}


class OrderLogError(ValueError):
    pass


@dataclass(frozen=True)
class ArrivalRateProfile:
    window_length: float
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if not self.window_length > 0:
            raise ValueError("window_length must be > 0")
        if not self.rates:
            raise ValueError("profile needs at least one window")
        if any(not (r >= 0 and math.isfinite(r)) for r in self.rates):
            raise ValueError("rates must be finite and >= 0")

    @classmethod
    def constant(cls, rate: float, horizon: float) -> "ArrivalRateProfile":
        return cls(horizon, (rate,))

    @property
    def horizon(self) -> float:
        return self.window_length * len(self.rates)

    def window_starts(self) -> list[float]:
        return [i * self.window_length for i in range(len(self.rates))]


@dataclass(frozen=True)
class OrderLog:
    timestamps: tuple[datetime, ...]

    def __post_init__(self):
        ts = tuple(self.timestamps)
        object.__setattr__(self, "timestamps", ts)
        for i in range(1, len(ts)):
            if ts[i] < ts[i - 1]:
                raise OrderLogError(f"timestamps must be nondecreasing (row {i + 1})")


def poisson_pmf(k: int, lambda_dt: float) -> float:
    if k < 0 or lambda_dt < 0:
        raise ValueError("poisson_pmf needs k >= 0 and lambda >= 0")
    if lambda_dt == 0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(lambda_dt) - lambda_dt - math.lgamma(k + 1))


def sample_arrival_count(lam: float, dt: float, rng: np.random.Generator) -> int:
    if lam < 0 or not dt > 0:
        raise ValueError("need lambda >= 0 and dt > 0")
    if lam == 0:
        return 0
    return int(rng.poisson(lam * dt))


def rate_at(profile: ArrivalRateProfile, t: float) -> float:
    if not 0 <= t < profile.horizon:
        raise ValueError(f"t={t} outside profile horizon [0, {profile.horizon})")
    idx = min(int(t // profile.window_length), len(profile.rates) - 1)
    return profile.rates[idx]


def _to_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _period_start(ts: datetime, period: str) -> datetime:
    day = ts.replace(hour=0, minute=0, second=0, microsecond=0)
    if period == "week":
        day -= timedelta(days=day.weekday())
    return day


def estimate_rate_profile(
    log: OrderLog,
    window_length: float,
    period: str = "day",
    num_periods: int | None = None,
) -> ArrivalRateProfile:
    """Per-window arrival rate (orders per minute), aggregated over repeated periods.

    The observed duration of each window is ``num_periods * window_length``,
    where ``num_periods`` defaults to the number of calendar periods spanned
    by the log (first to last timestamp, inclusive).
    """
    if not window_length > 0:
        raise ValueError("window_length must be > 0")
    if period not in PERIOD_MINUTES:
        raise ValueError(f"period must be one of {sorted(PERIOD_MINUTES)}")
    period_len = PERIOD_MINUTES[period]
    n_windows = int(math.ceil(period_len / window_length - 1e-9))
    counts = np.zeros(n_windows)
    if not log.timestamps:
        return ArrivalRateProfile(window_length, tuple(counts))

    stamps = [_to_utc(t) for t in log.timestamps]
    first = _period_start(stamps[0], period)
    if num_periods is None:
        span = (_period_start(stamps[-1], period) - first).total_seconds() / 60.0
        num_periods = int(round(span / period_len)) + 1
    for ts in stamps:
        offset = (ts - _period_start(ts, period)).total_seconds() / 60.0
        counts[min(int(offset // window_length), n_windows - 1)] += 1
    # last window may be shorter than window_length when it doesn't divide the period
    durations = np.full(n_windows, float(window_length))
    durations[-1] = period_len - (n_windows - 1) * window_length
    return ArrivalRateProfile(window_length, tuple(counts / (num_periods * durations)))


def synthesize_log(
    profile: ArrivalRateProfile,
    num_periods: int,
    start: datetime,
    rng: np.random.Generator,
    period: str = "day",
) -> OrderLog:
    """Draw an order log from a profile: Poisson counts per window, uniform times within it."""
    period_len = PERIOD_MINUTES[period]
    start = _period_start(_to_utc(start), period)
    stamps = []
    for p in range(num_periods):
        base = start + timedelta(minutes=p * period_len)
        for w, lam in enumerate(profile.rates):
            lo = w * profile.window_length
            hi = min(lo + profile.window_length, period_len)
            if hi <= lo:
                continue
            n = rng.poisson(lam * (hi - lo))
            for off in np.sort(rng.uniform(lo, hi, size=n)):
                stamps.append(base + timedelta(minutes=float(off)))
    return OrderLog(tuple(sorted(stamps)))


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return _to_utc(datetime.fromisoformat(text))


def format_timestamp(ts: datetime) -> str:
    return _to_utc(ts).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def read_order_log(path: str | Path) -> OrderLog:
    """Read a ``timestamp`` CSV. Errors name the offending line number."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp"]:
            raise OrderLogError(f"{path}: expected header 'timestamp', got {header!r}")
        stamps = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not row[0].strip():
                continue
            try:
                stamps.append(parse_timestamp(row[0]))
            except ValueError as exc:
                raise OrderLogError(f"{path}:{lineno}: malformed timestamp {row[0]!r}") from exc
    try:
        return OrderLog(tuple(stamps))
    except OrderLogError as exc:
        raise OrderLogError(f"{path}: {exc}") from exc


def write_order_log(log: OrderLog, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"])
        for ts in log.timestamps:
            w.writerow([format_timestamp(ts)])


def write_rate_profile(profile: ArrivalRateProfile, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_start", "lambda"])
        for start, lam in zip(profile.window_starts(), profile.rates):
            w.writerow([repr(float(start)), repr(lam)])


def read_rate_profile(path: str | Path) -> ArrivalRateProfile:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty rate profile")
    starts = [float(r["window_start"]) for r in rows]
    rates = [float(r["lambda"]) for r in rows]
    window = starts[1] - starts[0] if len(starts) > 1 else None
    if window is None:
        raise ValueError(f"{path}: need at least two windows to infer window length")
    return ArrivalRateProfile(window, tuple(rates))


def chi_square_poisson(samples: Sequence[int], lambda_dt: float, min_expected: float = 5.0):
    """Pearson goodness-of-fit of integer samples against Poisson(lambda_dt).

    Cells are pooled from the tails until each expects at least ``min_expected``
    counts. Returns ``(statistic, dof, p_value)``.
    """
    from scipy.stats import chi2

    samples = np.asarray(samples)
    n = len(samples)
    kmax = int(max(samples.max(), lambda_dt + 10 * math.sqrt(lambda_dt + 1)))
    probs = np.array([poisson_pmf(k, lambda_dt) for k in range(kmax + 1)])
    probs[-1] += max(0.0, 1.0 - probs.sum())
    observed = np.bincount(np.minimum(samples, kmax), minlength=kmax + 1).astype(float)

    cells_o, cells_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, probs * n):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if cells_e:
            cells_o[-1] += acc_o
            cells_e[-1] += acc_e
        else:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
    cells_o, cells_e = np.array(cells_o), np.array(cells_e)
    stat = float(((cells_o - cells_e) ** 2 / cells_e).sum())
    dof = len(cells_e) - 1
    return stat, dof, float(chi2.sf(stat, dof)) if dof > 0 else 1.0
