"""Packaged demo data: six weekly-seasonal series of length 176 with a few
planted cellwise and casewise outliers (see ``make_demo``)."""
from importlib import resources

import numpy as np

DEMO_FILE = "demo.csv"


def demo_path():
    return str(resources.files(__name__) / DEMO_FILE)


def load_demo():
    from ..series import read_csv
    return read_csv(demo_path())


def make_demo(seed=20240131):
    """Regenerate the demo series.

    Returns ``(values, names, outliers)`` where ``outliers`` lists the
    planted ``(time, series)`` cells; a series index of -1 marks a whole
    case. ``demo.csv`` was written from this function with the default seed.
    """
    rng = np.random.default_rng(seed)
    N, p = 176, 6
    t = np.arange(1, N + 1)
    names = ("north", "south", "east", "west", "central", "coast")
    levels = np.array([120.0, 95.0, 140.0, 80.0, 110.0, 60.0])
    weekly = np.array([18.0, 14.0, 22.0, 10.0, 16.0, 9.0])
    phase = np.array([0.0, 0.4, 0.9, 1.3, 0.2, 2.0])
    half = np.array([6.0, 4.0, 8.0, 3.0, 5.0, 2.5])
    trend = np.array([0.05, 0.03, 0.08, 0.02, 0.06, 0.01])
    values = (levels + trend * t[:, None]
              + weekly * np.cos(2 * np.pi * t[:, None] / 7 + phase)
              + half * np.cos(4 * np.pi * t[:, None] / 7 + 2 * phase)
              + rng.normal(0.0, 2.5, (N, p)))
    outliers = [(30, 0), (31, 0), (75, 2), (76, 4), (120, 3), (150, 5), (151, 5)]
    for i, j in outliers:
        values[i, j] += 45.0 * (1 if (i + j) % 2 == 0 else -1)
    for i in (100, 101, 160):
        values[i] -= 40.0
        outliers.append((i, -1))
    return np.round(values, 3), names, outliers
