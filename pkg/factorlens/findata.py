"""Adjusted-close prices to normalized log daily returns."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import Dataset
from .exceptions import InputError, ParameterError

L = logging.getLogger(__name__)

VOLATILITY_WINDOW = 50
CLIP_COVERAGE = 0.995


@dataclass(frozen=True)
class PriceTable:
    """T_days x M_stocks adjusted close prices, complete and strictly positive."""

    prices: np.ndarray
    tickers: list
    dates: list

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float)
        if prices.ndim != 2:
            raise InputError(f"Prices must be a 2d table, got shape {prices.shape}")
        if not np.all(np.isfinite(prices)):
            raise InputError("Price table has missing or non-finite entries")
        bad = np.argwhere(prices <= 0)
        if len(bad):
            day, stock = bad[0]
            raise InputError(
                f"Nonpositive price for {self.tickers[stock]} on {self.dates[day]} "
                f"({len(bad)} entries in total)"
            )
        if len(self.tickers) != prices.shape[1] or len(self.dates) != prices.shape[0]:
            raise InputError("Tickers and dates do not match the price table shape")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "tickers", list(self.tickers))
        object.__setattr__(self, "dates", list(self.dates))

    @classmethod
    def from_frame(cls, frame):
        """Table from a dataframe with dates as index and tickers as columns."""
        return cls(
            prices=frame.to_numpy(dtype=float),
            tickers=[str(ticker) for ticker in frame.columns],
            dates=[str(date) for date in frame.index],
        )

    def to_frame(self):
        """Dataframe with dates as index and tickers as columns."""
        return pd.DataFrame(self.prices, index=self.dates, columns=self.tickers)


@dataclass(frozen=True)
class ReturnPanel:
    """Normalized returns, one row per day, with the volatilities and clip bounds used."""

    returns: np.ndarray
    volatility: np.ndarray
    clip_bounds: tuple
    tickers: list
    dates: list
    dropped: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dataset(self):
        """Returns as a Dataset, rows in time order."""
        return Dataset(self.returns)

    def to_frame(self):
        """Returns as a dataframe indexed by date."""
        return pd.DataFrame(self.returns, index=self.dates, columns=self.tickers)


def clip_bounds(values, coverage=CLIP_COVERAGE):
    """Pooled two-sided clip bounds.

    The upper bound is the smallest observed value with at least ``coverage`` of all values
    below or equal to it, the lower bound the largest observed value with at least
    ``coverage`` of all values above or equal to it.
    """
    if not 0 < coverage <= 1:
        raise ParameterError(f"Coverage must be in (0, 1], got {coverage}")
    ordered = np.sort(np.asarray(values, dtype=float).ravel())
    n_values = len(ordered)
    if n_values == 0:
        raise InputError("No returns to compute clip bounds from")
    rank = math.ceil(round(coverage * n_values, 9))
    return float(ordered[n_values - rank]), float(ordered[rank - 1])


def preprocess_prices(
    table,
    window=VOLATILITY_WINDOW,
    coverage=CLIP_COVERAGE,
    bounds=None,
    drop_degenerate=False,
):
    """Normalized log daily returns from adjusted close prices.

    Raw returns log(p_{j+1} / p_j) are clipped to pooled bounds, each stock's volatility on a
    day is the rms of its previous ``window`` clipped returns, and the output row for that day
    is the clipped return divided by the volatility. The first row is the return on day
    window + 1, so T_days prices give T_days - window - 1 rows.

    Args:
        table (PriceTable): price table
        window (int): volatility window in days
        coverage (float): fraction of returns kept inside the clip bounds
        bounds (tuple): precomputed (lower, upper) bounds, computed from the table if None
        drop_degenerate (bool): drop stocks with a zero volatility window instead of raising

    Returns:
        ReturnPanel: normalized returns
    """
    n_days = table.prices.shape[0]
    if window < 1:
        raise ParameterError(f"Volatility window must be >= 1, got {window}")
    if n_days < window + 2:
        raise ParameterError(f"Need at least {window + 2} days of prices, got {n_days}")

    log_prices = np.log(table.to_frame())
    raw = log_prices.diff().iloc[1:]
    bounds_source = "supplied"
    if bounds is None:
        bounds_source = "full table"
        bounds = clip_bounds(raw.to_numpy(), coverage=coverage)
    lower, upper = bounds
    clipped = raw.clip(lower=lower, upper=upper)
    n_clipped = int((raw.to_numpy() != clipped.to_numpy()).sum())
    L.info("Clip bounds (%s, %s), %s of %s returns clipped", lower, upper, n_clipped, raw.size)

    # rms of the previous `window` returns, excluding the current day
    mean_square = (clipped**2).rolling(window).mean().shift(1).clip(lower=0.0)
    volatility = np.sqrt(mean_square).iloc[window:]
    clipped = clipped.iloc[window:]

    dropped = []
    zero = volatility.to_numpy() <= 0
    if np.any(zero):
        days, stocks = np.nonzero(zero)
        pairs = [(volatility.columns[s], volatility.index[d]) for d, s in zip(days, stocks)]
        if not drop_degenerate:
            raise InputError(f"Zero volatility window for (stock, day) pairs: {pairs}")
        dropped = sorted({ticker for ticker, _ in pairs}, key=list(volatility.columns).index)
        L.warning("Dropping stocks with a zero volatility window: %s", dropped)
        volatility = volatility.drop(columns=dropped)
        clipped = clipped.drop(columns=dropped)
        if clipped.shape[1] == 0:
            raise InputError("Every stock has a zero volatility window")

    normalized = clipped / volatility
    return ReturnPanel(
        returns=normalized.to_numpy(),
        volatility=volatility.to_numpy(),
        clip_bounds=(lower, upper),
        tickers=list(normalized.columns),
        dates=list(normalized.index),
        dropped=dropped,
        metadata={
            "clip_bounds": [lower, upper],
            "clip_bounds_source": bounds_source,
            "n_clipped": n_clipped,
            "n_raw_returns": int(raw.size),
            "window": window,
            "coverage": coverage,
            "n_rows": int(normalized.shape[0]),
            "dropped": dropped,
        },
    )
