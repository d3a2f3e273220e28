"""Shared fixtures: the bundled synthetic dataset and series built from it."""

from datetime import date

import numpy as np
import pytest

from attrikit.ingest import Category, default_profile, generate_synthetic
from attrikit.series import DAILY, MONTHLY, ExclusionWindow, aggregate, apply_exclusions

SYNTH_SEED = 42

JUNE_JULY_2025 = [ExclusionWindow(date(2025, 6, 1), date(2025, 7, 31))]


@pytest.fixture(scope="session")
def synth_records():
    return generate_synthetic(SYNTH_SEED)


@pytest.fixture(scope="session")
def monthly_tanks(synth_records):
    """Monthly tank counts over the full default-profile span, all observed."""
    lo, hi = default_profile().span()
    return aggregate(synth_records, MONTHLY, {Category.TANK}, (lo, hi))


@pytest.fixture(scope="session")
def monthly_tanks_masked(monthly_tanks):
    """Same series with June-July 2025 masked out."""
    return apply_exclusions(monthly_tanks, JUNE_JULY_2025)


@pytest.fixture(scope="session")
def daily_all(synth_records):
    lo, hi = default_profile().span()
    return aggregate(synth_records, DAILY, None, (lo, hi))


def taper_monthly_mean(month_start: date) -> float:
    """Oracle: expected monthly tank count under the final (taper) regime."""
    taper_daily = default_profile().regimes[-1].means[Category.TANK]
    if month_start.month == 12:
        days = 31
    else:
        days = (date(month_start.year, month_start.month + 1, 1) - month_start).days
    return taper_daily * days


def within_taper_band(forecast_points, month_starts) -> list[bool]:
    """Whether each forecast lands inside regime mean +/- 2*sqrt(mean)."""
    flags = []
    for p, day in zip(forecast_points, month_starts):
        mean = taper_monthly_mean(day)
        flags.append(bool(abs(p - mean) <= 2.0 * np.sqrt(mean)))
    return flags
