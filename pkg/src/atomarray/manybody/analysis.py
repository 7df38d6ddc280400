"""Time-series helpers for scar dynamics."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks


def revival_period(times: np.ndarray, signal: np.ndarray, prominence: float = 0.3) -> float:
    """Time of the first prominent maximum of a revival signal (e.g. Rydberg population)."""
    peaks, _ = find_peaks(np.asarray(signal), prominence=prominence)
    if not peaks.size:
        raise ValueError("no revival found")
    return float(times[peaks[0]])


def oscillation_correlation(times: np.ndarray, a: np.ndarray, b: np.ndarray, period: float,
                            n_periods: float = 2.0) -> float:
    """Pearson correlation of the oscillating parts of two signals.

    A running mean over one period (nearest-value padding) is removed from
    each signal, then the residuals are correlated over the first
    ``n_periods`` periods.
    """
    times = np.asarray(times, dtype=float)
    width = max(1, int(round(period / (times[1] - times[0]))))
    ra = np.asarray(a) - uniform_filter1d(np.asarray(a, float), width, mode="nearest")
    rb = np.asarray(b) - uniform_filter1d(np.asarray(b, float), width, mode="nearest")
    keep = times <= n_periods * period + 1e-12 * period
    return float(np.corrcoef(ra[keep], rb[keep])[0, 1])
