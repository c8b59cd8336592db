"""Trace file parsing, kinematic outlier filtering, and night-window extraction."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from homedetect.geo import GeoPoint, haversine_ll

DEFAULT_MAX_ERROR_RADIUS_M = 50.0
DEFAULT_MAX_SPEED_MPS = 50.0
DEFAULT_MAX_ABS_ACCEL_MPS2 = 10.0


class TraceFormatError(ValueError):
    """Input file is not a usable trace table (mostly malformed rows)."""


class Ping(NamedTuple):
    device_id: str
    lat: float
    lon: float
    timestamp: float
    error_radius: float

    @property
    def point(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon)


@dataclass
class Trace:
    """Per-user, time-ordered ping sequence held as parallel numpy arrays."""

    device_id: str
    lat: np.ndarray
    lon: np.ndarray
    t: np.ndarray
    err: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def take(self, idx) -> "Trace":
        return Trace(self.device_id, self.lat[idx], self.lon[idx], self.t[idx], self.err[idx])

    def pings(self) -> Iterator[Ping]:
        for i in range(len(self.t)):
            yield Ping(
                self.device_id,
                float(self.lat[i]),
                float(self.lon[i]),
                float(self.t[i]),
                float(self.err[i]),
            )

    @classmethod
    def from_pings(cls, device_id: str, pings: Iterable[tuple]) -> "Trace":
        """Build from (lat, lon, timestamp, error_radius) tuples, sorting by time."""
        rows = sorted(pings, key=lambda r: r[2])
        if rows:
            lat, lon, t, err = (np.array(col, dtype=float) for col in zip(*rows))
        else:
            lat = lon = t = err = np.empty(0)
        return cls(device_id, lat, lon, t, err)


@dataclass
class Kinematics:
    """Per-ping segment speed (m/s) and acceleration (m/s^2); first entries are zero."""

    v: np.ndarray
    a: np.ndarray


@dataclass(frozen=True)
class NightWindow:
    """Local-clock window [start_hour, end_hour), possibly wrapping midnight.

    A night that wraps midnight is keyed by the local date of its start hour,
    so one contiguous sleep period counts as a single night. The time zone is
    a fixed UTC offset for the whole dataset.
    """

    start_hour: float = 20.0
    end_hour: float = 5.0
    utc_offset_minutes: int = 0

    def __post_init__(self):
        if not (0.0 <= self.start_hour < 24.0 and 0.0 <= self.end_hour < 24.0):
            raise ValueError("window hours must lie in [0, 24)")
        if abs(self.utc_offset_minutes) > 14 * 60:
            raise ValueError("utc offset beyond +/-14 h")

    @property
    def duration_s(self) -> float:
        return ((self.end_hour - self.start_hour) % 24.0) * 3600.0

    def classify(self, timestamps) -> tuple[np.ndarray, np.ndarray]:
        """Return (in-window mask, night id per ping) for unix timestamps.

        Night ids are local days since the epoch of the night's start date.
        """
        loc = np.asarray(timestamps, dtype=float) + self.utc_offset_minutes * 60.0
        day = np.floor_divide(loc, 86400.0)
        hour = (loc - day * 86400.0) / 3600.0
        day = day.astype(np.int64)
        if self.start_hour < self.end_hour:
            mask = (hour >= self.start_hour) & (hour < self.end_hour)
            night = day
        elif self.start_hour > self.end_hour:
            morning = hour < self.end_hour
            mask = (hour >= self.start_hour) | morning
            night = day - morning.astype(np.int64)
        else:  # zero-length window
            mask = np.zeros(loc.shape, dtype=bool)
            night = day
        return mask, night

    def overlap_seconds(self, arrival: float, departure: float) -> float:
        """Length of [arrival, departure] intersected with the nightly windows."""
        if departure < arrival:
            raise ValueError("departure before arrival")
        length = self.duration_s
        if length == 0.0:
            return 0.0
        a = arrival + self.utc_offset_minutes * 60.0
        d = departure + self.utc_offset_minutes * 60.0
        start_s = self.start_hour * 3600.0
        total = 0.0
        for day in range(int(a // 86400.0) - 1, int(d // 86400.0) + 1):
            ws = day * 86400.0 + start_s
            total += max(0.0, min(d, ws + length) - max(a, ws))
        return total


@dataclass
class ParseResult:
    traces: dict[str, Trace]
    n_rows: int = 0
    n_skipped: int = 0


def _parse_row(row: list[str]) -> tuple[str, float, float, float, float] | None:
    if len(row) < 5:
        return None
    device = row[0].strip()
    if not device:
        return None
    try:
        lon = float(row[1])
        lat = float(row[2])
        ts = float(row[3])
        err = float(row[4])
    except ValueError:
        return None
    if not (np.isfinite(lon) and np.isfinite(lat) and np.isfinite(ts) and np.isfinite(err)):
        return None
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0) or err < 0.0:
        return None
    return device, lat, lon, ts, err


def _looks_like_header(row: list[str]) -> bool:
    """Non-numeric text in the numeric columns marks a header, not a bad row."""
    if len(row) < 5:
        return False
    for cell in row[1:5]:
        try:
            float(cell)
        except ValueError:
            return True
    return False


def parse_traces(path, delimiter: str = ",") -> ParseResult:
    """Read a trace table (device_id, longitude, latitude, timestamp, error_radius).

    A header row is detected and skipped automatically. Malformed rows are
    counted and skipped; the file is rejected only when more than half of its
    data rows are malformed. Rows are grouped per device and sorted by
    timestamp (stable on ties).
    """
    per_device: dict[str, list] = {}
    n_rows = 0
    n_skipped = 0
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        first = True
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            parsed = _parse_row(row)
            if first:
                first = False
                if parsed is None and _looks_like_header(row):
                    continue  # header row
            n_rows += 1
            if parsed is None:
                n_skipped += 1
                continue
            per_device.setdefault(parsed[0], []).append(parsed[1:])
    if n_rows > 0 and n_skipped > n_rows / 2:
        raise TraceFormatError(
            f"{path}: {n_skipped} of {n_rows} rows malformed; not a usable trace table"
        )
    traces = {}
    for device in per_device:
        rows = sorted(per_device[device], key=lambda r: r[2])
        lat, lon, t, err = (np.array(col, dtype=float) for col in zip(*rows))
        traces[device] = Trace(device, lat, lon, t, err)
    return ParseResult(traces, n_rows, n_skipped)


def dedupe_timestamps(t: Trace) -> Trace:
    """Keep the first ping of every equal-timestamp run."""
    if len(t) <= 1:
        return t
    keep = np.concatenate(([True], np.diff(t.t) > 0.0))
    return t.take(keep) if not keep.all() else t


def compute_kinematics(t: Trace) -> Kinematics:
    """Segment speed and acceleration against the immediate predecessor.

    Requires strictly increasing timestamps; dedupe_timestamps first.
    """
    n = len(t)
    v = np.zeros(n)
    a = np.zeros(n)
    if n >= 2:
        dt = np.diff(t.t)
        if np.any(dt <= 0.0):
            raise ValueError("non-increasing timestamps; dedupe the trace first")
        d = haversine_ll(t.lat[:-1], t.lon[:-1], t.lat[1:], t.lon[1:])
        v[1:] = d / dt
        if n >= 3:
            a[2:] = np.diff(v[1:]) / dt[1:]
    return Kinematics(v, a)


def filter_trace(
    t: Trace,
    max_error_radius_m: float = DEFAULT_MAX_ERROR_RADIUS_M,
    max_speed_mps: float = DEFAULT_MAX_SPEED_MPS,
    max_abs_accel_mps2: float = DEFAULT_MAX_ABS_ACCEL_MPS2,
) -> Trace:
    """Drop noisy pings: error radius, then speed/acceleration outliers.

    Pings with error_radius above the threshold go first, then duplicate
    timestamps (first ping of a run wins). Kinematic filtering drops the later
    ping of an offending pair and re-evaluates successors against the
    surviving predecessor, which reaches the fixed point in one forward pass:
    recomputing kinematics on the output violates no threshold.
    """
    t = t.take(t.err <= max_error_radius_m)
    t = dedupe_timestamps(t)
    n = len(t)
    if n <= 1:
        return t
    k = compute_kinematics(t)  # boundary entries are zero, so never flagged
    bad = (k.v > max_speed_mps) | (np.abs(k.a) > max_abs_accel_mps2)
    if not bad.any():
        return t
    keep = [0]
    v_last = 0.0
    for i in range(1, n):
        j = keep[-1]
        dt = float(t.t[i] - t.t[j])
        v = float(haversine_ll(t.lat[j], t.lon[j], t.lat[i], t.lon[i])) / dt
        if v > max_speed_mps:
            continue
        if len(keep) >= 2:  # acceleration of the second kept ping is zero by definition
            if abs(v - v_last) / dt > max_abs_accel_mps2:
                continue
        keep.append(i)
        v_last = v
    return t.take(np.array(keep, dtype=np.intp))


def night_pings(t: Trace, window: NightWindow) -> tuple[Trace, np.ndarray]:
    """Subset of the trace inside the night window, with a night id per kept ping."""
    mask, night = window.classify(t.t)
    return t.take(mask), night[mask]
