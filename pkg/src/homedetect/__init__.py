"""Home location detection from smartphone GPS traces.

Five unsupervised detection algorithms behind one interface, three
ground-truth-free quality metrics, data-quality sensitivity analysis, and a
synthetic trace generator for benchmarking against known homes.
"""

__version__ = "0.1.0"

from homedetect.geo import GeoPoint, LocalFrame, haversine, centroid, medoid
from homedetect.ingest import NightWindow, Ping, Trace

__all__ = [
    "GeoPoint",
    "LocalFrame",
    "NightWindow",
    "Ping",
    "Trace",
    "haversine",
    "centroid",
    "medoid",
    "__version__",
]
