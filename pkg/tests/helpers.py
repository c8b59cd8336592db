"""Small builders shared across test modules."""
from __future__ import annotations

import numpy as np

from homedetect.geo import GeoPoint, LocalFrame
from homedetect.ingest import NightWindow, Trace

ORIGIN = GeoPoint(0.0, 0.0)
DAY0 = 18_000  # an arbitrary epoch day anchoring synthetic nights
WINDOW = NightWindow(20.0, 5.0, 0)


def night_t(night: int, hours_after_start: float) -> float:
    """UTC timestamp ``hours_after_start`` into night ``night`` of the default window."""
    return (DAY0 + night) * 86400.0 + (20.0 + hours_after_start) * 3600.0


def local_trace(rows, device="u", origin=ORIGIN) -> Trace:
    """Trace from (east_m, north_m, t[, err]) rows around ``origin``."""
    frame = LocalFrame(origin, max_range_m=None)
    pings = []
    for row in rows:
        x, y, t = row[:3]
        err = row[3] if len(row) > 3 else 5.0
        lat, lon = frame.unproject_xy(x, y)
        pings.append((float(lat), float(lon), float(t), float(err)))
    return Trace.from_pings(device, pings)


def dwell_rows(x, y, t0, t1, n, err=5.0):
    """n stationary pings at (x, y) spread evenly over [t0, t1]."""
    return [(x, y, t, err) for t in np.linspace(t0, t1, n)]
