"""Batch CLI: detect homes, evaluate them, run sensitivity and application
analyses, and generate synthetic benchmark data.

Subcommands: detect, evaluate, sensitivity, apps {evac,consistency,income},
synth. All outputs are plain CSV/JSON; a manifest records the config hash so
runs are reproducible. Exit codes: 0 ok, 1 usage, 2 bad input, 3 internal.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from homedetect import __version__, analysis, hda, metrics, synth
from homedetect.clustering import build_stay_regions, detect_stay_points
from homedetect.geo import GeoPoint
from homedetect.ingest import NightWindow, TraceFormatError, filter_trace, night_pings, parse_traces
from homedetect.metrics import BufferWeights, LandUseMap, MetricError, UserMetricSample

log = logging.getLogger("homedetect")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

DEFAULT_THRESHOLDS = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0]


@dataclass
class RunConfig:
    """Declarative run parameters; a JSON config file plus flag overrides."""

    trace_path: str | None = None
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1
    # night window and trace filters
    night_start_hour: float = 20.0
    night_end_hour: float = 5.0
    utc_offset_minutes: int = 0
    max_error_radius_m: float = 50.0
    max_speed_mps: float = 50.0
    max_abs_accel_mps2: float = 10.0
    # detection parameters
    algorithms: list[str] = field(default_factory=lambda: list(hda.ALGORITHMS))
    bandwidth_m: float = 250.0
    grid_cell_m: float = 20.0
    bin_period_s: float = 1800.0
    stay_dist_m: float = 200.0
    stay_time_s: float = 1800.0
    region_cut_m: float = 250.0
    region_linkage: str = "average"
    a5_min_night_dwell_s: float = 10800.0
    a5_min_total_dwell_s: float = 86400.0
    a5_rank_by: str = "night_dwell"
    a1_use_medoid: bool = False
    # metric parameters
    r_max_m: int = 50
    buffer_step_m: int = 5
    delta_max_m: float = 5000.0
    m3_dwell: str = "night"
    baseline_sample_size: int = 10000
    quality_thresholds: list[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    study_nights: int | None = None
    # geospatial inputs
    landuse_path: str | None = None
    landuse_category_key: str = "landuse"
    residential_categories: list[str] = field(default_factory=lambda: ["residential"])
    zones_path: str | None = None
    # synthetic data generation
    synth_agents: int = 100
    synth_nights: int = 14
    synth_sigma_m: float = 15.0
    synth_p_home: float = 0.9
    synth_night_pings_mean: float = 20.0
    synth_day_pings_mean: float = 6.0
    synth_persona: str = "resident"

    @classmethod
    def load(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        values: dict = {}
        if config_path:
            with open(config_path) as fh:
                values = json.load(fh)
            known = {f.name for f in dataclasses.fields(cls)}
            unknown = set(values) - known
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def night_window(self) -> NightWindow:
        return NightWindow(self.night_start_hour, self.night_end_hour, self.utc_offset_minutes)

    @property
    def hda_config(self) -> hda.HdaConfig:
        return hda.HdaConfig(
            bandwidth_m=self.bandwidth_m,
            grid_cell_m=self.grid_cell_m,
            bin_period_s=self.bin_period_s,
            stay_dist_m=self.stay_dist_m,
            stay_time_s=self.stay_time_s,
            region_cut_m=self.region_cut_m,
            region_linkage=self.region_linkage,
            a5_min_night_dwell_s=self.a5_min_night_dwell_s,
            a5_min_total_dwell_s=self.a5_min_total_dwell_s,
            a5_rank_by=self.a5_rank_by,
            a1_use_medoid=self.a1_use_medoid,
            night_window=self.night_window,
        )

    @property
    def weights(self) -> BufferWeights:
        return BufferWeights(self.r_max_m, self.buffer_step_m)

    def echo(self) -> dict:
        """Config as written to manifests: excludes fields that must not
        change the outputs (parallelism, output directory)."""
        d = dataclasses.asdict(self)
        d.pop("threads")
        d.pop("out_dir")
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.echo(), sort_keys=True).encode()).hexdigest()


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _load_filtered_traces(cfg: RunConfig):
    if not cfg.trace_path:
        raise ValueError("no trace_path configured")
    parsed = parse_traces(cfg.trace_path)
    traces = {
        d: filter_trace(t, cfg.max_error_radius_m, cfg.max_speed_mps, cfg.max_abs_accel_mps2)
        for d, t in sorted(parsed.traces.items())
    }
    return traces, parsed


def _homes_csv_path(out_dir: Path, alg: str) -> Path:
    return out_dir / f"homes_{alg}.csv"


def _write_home_table(path: Path, table: dict[str, hda.HomeLocation]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["device_id", "algorithm", "lat", "lon", "support"])
        for device in sorted(table):
            h = table[device]
            w.writerow([device, h.algorithm, repr(h.point.lat), repr(h.point.lon), h.support])


def load_home_table(path) -> dict[str, hda.HomeLocation]:
    out: dict[str, hda.HomeLocation] = {}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:]:
        if not row:
            continue
        device, alg, lat, lon, support = row[:5]
        out[device] = hda.HomeLocation(device, GeoPoint(float(lat), float(lon)), alg, int(support))
    return out


def cmd_detect(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traces, parsed = _load_filtered_traces(cfg)
    result = hda.run_all(traces, cfg.hda_config, cfg.algorithms, workers=cfg.threads)
    written: list[Path] = []
    try:
        for alg in cfg.algorithms:
            path = _homes_csv_path(out_dir, alg)
            _write_home_table(path, result.tables[alg])
            written.append(path)
        manifest = {
            "tool": "homedetect",
            "version": __version__,
            "command": "detect",
            "config": cfg.echo(),
            "config_hash": cfg.digest(),
            "rows_read": parsed.n_rows,
            "rows_skipped": parsed.n_skipped,
            "n_users": result.n_users,
            "n_common_users": len(result.common_users),
            "no_home_counts": result.no_home_counts,
        }
        path = out_dir / "manifest.json"
        _write_json(path, manifest)
        written.append(path)
    except BaseException:
        for p in written:  # do not leave partial outputs behind
            p.unlink(missing_ok=True)
        raise
    return EXIT_OK


@dataclass
class _EvalContext:
    cfg: RunConfig
    tables: dict[str, dict[str, hda.HomeLocation]]
    common: list[str]
    nights: dict[str, tuple]           # device -> (night trace, night ids)
    regions: dict[str, list]           # device -> stay regions
    land_use: LandUseMap | None
    traces: dict


def _prepare_evaluation(cfg: RunConfig, wanted_metrics: list[str], homes_dir: str | None) -> _EvalContext:
    homes_dir = Path(homes_dir or cfg.out_dir)
    tables = {}
    for alg in cfg.algorithms:
        path = _homes_csv_path(homes_dir, alg)
        if not path.exists():
            raise FileNotFoundError(f"missing home table {path}; run detect first")
        tables[alg] = load_home_table(path)
    common = sorted(set.intersection(*(set(t) for t in tables.values()))) if tables else []
    if not common:
        log.warning("common user set is empty; reporting per-algorithm metrics")

    land_use = None
    if "m1" in wanted_metrics:
        if not cfg.landuse_path:
            raise ValueError("m1 requested but no landuse_path configured")
        land_use = LandUseMap.from_geojson(
            cfg.landuse_path, cfg.landuse_category_key, tuple(cfg.residential_categories)
        )

    nights: dict[str, tuple] = {}
    regions: dict[str, list] = {}
    traces: dict = {}
    if "m2" in wanted_metrics or "m3" in wanted_metrics:
        traces, _ = _load_filtered_traces(cfg)
        window = cfg.night_window
        for device, t in traces.items():
            nights[device] = night_pings(t, window)
        if "m3" in wanted_metrics:
            for device, t in traces.items():
                sps = detect_stay_points(t, cfg.stay_dist_m, cfg.stay_time_s)
                regions[device] = build_stay_regions(sps, window, cfg.region_cut_m, cfg.region_linkage)
    return _EvalContext(cfg, tables, common, nights, regions, land_use, traces)


def _compute_samples(ctx: _EvalContext, alg: str, users: list[str], wanted: list[str]) -> list[UserMetricSample]:
    cfg = ctx.cfg
    table = ctx.tables[alg]
    samples = [UserMetricSample(device_id=d) for d in users]
    if "m1" in wanted and users:
        pts = [table[d].point for d in users]
        dists = ctx.land_use.residential_distances([p.lat for p in pts], [p.lon for p in pts])
        for s, dist in zip(samples, dists):
            s.resid_distance_m = float(dist)
    for s in samples:
        home = table[s.device_id].point
        if "m2" in wanted and s.device_id in ctx.nights:
            night, ids = ctx.nights[s.device_id]
            s.delta = metrics.m2_delta(home, night, ids)
        if "m3" in wanted:
            regs = ctx.regions.get(s.device_id) or []
            if regs:
                s.r_out = metrics.m3_outside_fraction(home, regs, cfg.m3_dwell)
    return samples


def _quantiles(values: list[float]) -> list[float]:
    return [float(q) for q in np.percentile(values, np.arange(0, 101, 5))]


def cmd_evaluate(cfg: RunConfig, wanted: list[str], homes_dir: str | None) -> int:
    ctx = _prepare_evaluation(cfg, wanted, homes_dir)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    weights = cfg.weights
    report: dict = {
        "tool": "homedetect",
        "version": __version__,
        "command": "evaluate",
        "config": cfg.echo(),
        "config_hash": cfg.digest(),
        "metrics": wanted,
        "n_common_users": len(ctx.common),
        "baseline_m1": None,
        "algorithms": {},
    }
    if ctx.land_use is not None:
        report["baseline_m1"] = metrics.uniform_random_baseline(
            ctx.land_use, weights, cfg.baseline_sample_size, cfg.seed
        )
    radar_rows = []
    for alg in cfg.algorithms:
        users = ctx.common or sorted(ctx.tables[alg])
        samples = _compute_samples(ctx, alg, users, wanted)
        summary = metrics.aggregate_samples(samples, weights, cfg.delta_max_m)
        deltas = [s.delta for s in samples if s.delta is not None]
        routs = [s.r_out for s in samples if s.r_out is not None]
        report["algorithms"][alg] = {
            "m1": summary.m1,
            "m2": summary.m2,
            "m3": summary.m3,
            "m_bar": summary.m_bar,
            "n_users": summary.n_users,
            "excluded": {
                "m2": summary.n_users - summary.n_m2 if "m2" in wanted else None,
                "m3": summary.n_users - summary.n_m3 if "m3" in wanted else None,
            },
            "rho": summary.rho,
            "buffer_levels": list(weights.levels) if summary.rho else None,
            "delta_quantiles": _quantiles(deltas) if deltas else None,
            "r_out_quantiles": _quantiles(routs) if routs else None,
        }
        radar_rows.append((alg, summary))
    _write_json(out_dir / "metrics.json", report)
    with open(out_dir / "metrics_radar.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "m1", "m2", "m3", "m_bar"])
        for alg, s in radar_rows:
            w.writerow([alg, _fmt(s.m1), _fmt(s.m2), _fmt(s.m3), _fmt(s.m_bar)])
    return EXIT_OK


def cmd_sensitivity(cfg: RunConfig, wanted: list[str], homes_dir: str | None) -> int:
    ctx = _prepare_evaluation(cfg, wanted, homes_dir)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    window = cfg.night_window
    if not ctx.traces:
        ctx.traces, _ = _load_filtered_traces(cfg)
    night_count = cfg.study_nights or analysis.study_night_count(ctx.traces, window)
    if night_count <= 0:
        raise ValueError("study period spans no nights; cannot compute quality")
    samples_by_alg = {}
    quality: dict[str, float] = {}
    for alg in cfg.algorithms:
        users = ctx.common or sorted(ctx.tables[alg])
        samples_by_alg[alg] = {s.device_id: s for s in _compute_samples(ctx, alg, users, wanted)}
        for d in users:
            if d not in quality:
                quality[d] = analysis.user_quality(ctx.traces[d], window, night_count)
    rows = analysis.sensitivity_curve(
        samples_by_alg, quality, sorted(cfg.quality_thresholds), cfg.weights, cfg.delta_max_m
    )
    with open(out_dir / "sensitivity.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "threshold", "m1", "m2", "m3", "m_bar", "n_users", "cdf_below"])
        for row in rows:
            s = row.summary
            w.writerow(
                [
                    row.algorithm,
                    repr(row.threshold),
                    _fmt(s.m1 if s else None),
                    _fmt(s.m2 if s else None),
                    _fmt(s.m3 if s else None),
                    _fmt(s.m_bar if s else None),
                    row.n_users,
                    repr(row.cdf_below),
                ]
            )
    _write_json(
        out_dir / "sensitivity_manifest.json",
        {
            "tool": "homedetect",
            "version": __version__,
            "command": "sensitivity",
            "config": cfg.echo(),
            "config_hash": cfg.digest(),
            "night_count": night_count,
            "n_common_users": len(ctx.common),
        },
    )
    return EXIT_OK


def _load_zones(cfg: RunConfig, zones_path: str | None) -> analysis.ZoneMap:
    path = zones_path or cfg.zones_path
    if not path:
        raise ValueError("no zones_path configured")
    return analysis.ZoneMap.from_geojson(path)


def cmd_apps_evac(cfg: RunConfig, pre: str, post: str, zones_path: str | None, threshold_m: float) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    zones = _load_zones(cfg, zones_path) if (zones_path or cfg.zones_path) else None
    result = analysis.evacuation_classify(load_home_table(pre), load_home_table(post), zones, threshold_m)
    with open(out_dir / "evac_users.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["device_id", "distance_m", "evacuated"])
        for u in result.users:
            w.writerow([u.device_id, repr(u.distance_m), int(u.evacuated)])
    with open(out_dir / "evac_zones.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zone_id", "n_users", "n_evacuated", "fraction"])
        for z, (n, n_ev, frac) in result.zone_fractions.items():
            w.writerow([z, n, n_ev, repr(frac)])
    _write_json(
        out_dir / "evac_summary.json",
        {
            "tool": "homedetect",
            "version": __version__,
            "command": "apps evac",
            "config_hash": cfg.digest(),
            "threshold_m": threshold_m,
            "n_users": len(result.users),
            "fraction_evacuated": result.fraction,
            "n_missing": result.n_missing,
            "n_outside_zones": result.n_outside_zones,
        },
    )
    return EXIT_OK


def cmd_apps_consistency(cfg: RunConfig, a: str, b: str, zones_path: str | None) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    zones = _load_zones(cfg, zones_path)
    result = analysis.zonal_consistency(load_home_table(a), load_home_table(b), zones)
    _write_json(
        out_dir / "consistency.json",
        {
            "tool": "homedetect",
            "version": __version__,
            "command": "apps consistency",
            "config_hash": cfg.digest(),
            "fraction_same_zone": result.fraction,
            "n_matched": result.n_matched,
            "n_classified": result.n_classified,
            "n_excluded": result.n_excluded,
        },
    )
    return EXIT_OK


def cmd_apps_income(cfg: RunConfig, a: str, b: str, zones_path: str | None) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    zones = _load_zones(cfg, zones_path)
    result = analysis.income_mismatch(load_home_table(a), load_home_table(b), zones)
    with open(out_dir / "income_transitions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["from_category", "to_category", "count"])
        for i, row_cat in enumerate(result.categories):
            for j, col_cat in enumerate(result.categories):
                w.writerow([row_cat, col_cat, int(result.matrix[i, j])])
    _write_json(
        out_dir / "income_summary.json",
        {
            "tool": "homedetect",
            "version": __version__,
            "command": "apps income",
            "config_hash": cfg.digest(),
            "off_diagonal_fraction": result.off_diagonal_fraction,
            "n_classified": result.n_classified,
            "n_excluded": result.n_excluded,
        },
    )
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    city = synth.make_city()
    specs = synth.sample_agents(
        city,
        cfg.synth_agents,
        seed=cfg.seed,
        persona=cfg.synth_persona,
        p_home_night=cfg.synth_p_home,
        noise_sigma_m=cfg.synth_sigma_m,
        night_pings=("poisson", cfg.synth_night_pings_mean),
        day_pings=("poisson", cfg.synth_day_pings_mean),
    )
    window = cfg.night_window
    summary = synth.generate(
        specs, cfg.synth_nights, window, out_dir / "trace.csv", out_dir / "truth.csv"
    )
    synth.write_city(city, out_dir / "landuse.geojson", out_dir / "zones.geojson")
    _write_json(
        out_dir / "synth_manifest.json",
        {
            "tool": "homedetect",
            "version": __version__,
            "command": "synth",
            "config": cfg.echo(),
            "config_hash": cfg.digest(),
            "n_agents": summary.n_agents,
            "n_pings": summary.n_pings,
        },
    )
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_night_window(text: str) -> tuple[float, float]:
    try:
        start, end = text.split("-")
        sh, sm = (int(x) for x in start.split(":"))
        eh, em = (int(x) for x in end.split(":"))
        return sh + sm / 60.0, eh + em / 60.0
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad night window {text!r}; expected HH:MM-HH:MM") from exc


def build_parser() -> _Parser:
    p = _Parser(prog="homedetect", description=__doc__)
    p.add_argument("--version", action="version", version=f"homedetect {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--threads", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--night-window", type=_parse_night_window, metavar="HH:MM-HH:MM")
    common.add_argument("--utc-offset-minutes", dest="utc_offset_minutes", type=int)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", parents=[common], help="run the detection algorithms")
    d.add_argument("--trace", dest="trace_path")
    d.add_argument("--algorithms", help="comma-separated subset, e.g. a2,a4")

    for name, helptext in (("evaluate", "score home tables"), ("sensitivity", "quality sweep")):
        e = sub.add_parser(name, parents=[common], help=helptext)
        e.add_argument("--trace", dest="trace_path")
        e.add_argument("--homes-dir", help="directory holding homes_<alg>.csv (default: out dir)")
        e.add_argument("--metrics", default="m1,m2,m3", help="comma-separated subset of m1,m2,m3")
        e.add_argument("--landuse", dest="landuse_path")
        e.add_argument("--algorithms")
        if name == "sensitivity":
            e.add_argument("--thresholds", help="comma-separated quality thresholds")

    a = sub.add_parser("apps", help="downstream applications")
    asub = a.add_subparsers(dest="app", required=True)
    ev = asub.add_parser("evac", parents=[common])
    ev.add_argument("--pre", required=True, help="pre-event home table CSV")
    ev.add_argument("--post", required=True, help="post-event home table CSV")
    ev.add_argument("--zones", dest="zones_path")
    ev.add_argument("--threshold-m", type=float, default=1000.0)
    for app in ("consistency", "income"):
        ap = asub.add_parser(app, parents=[common])
        ap.add_argument("--a", required=True, help="first-period home table CSV")
        ap.add_argument("--b", required=True, help="second-period home table CSV")
        ap.add_argument("--zones", dest="zones_path", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate synthetic traces")
    s.add_argument("--agents", dest="synth_agents", type=int)
    s.add_argument("--nights", dest="synth_nights", type=int)
    s.add_argument("--sigma-m", dest="synth_sigma_m", type=float)
    s.add_argument("--p-home", dest="synth_p_home", type=float)
    s.add_argument("--night-pings-mean", dest="synth_night_pings_mean", type=float)
    s.add_argument("--persona", dest="synth_persona", choices=synth.PERSONAS)
    return p


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: dict = {}
    for key in (
        "trace_path", "out_dir", "threads", "seed", "utc_offset_minutes", "landuse_path",
        "synth_agents", "synth_nights", "synth_sigma_m", "synth_p_home",
        "synth_night_pings_mean", "synth_persona",
    ):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if getattr(args, "night_window", None) is not None:
        overrides["night_start_hour"], overrides["night_end_hour"] = args.night_window
    if getattr(args, "algorithms", None):
        algs = [a.strip() for a in args.algorithms.split(",") if a.strip()]
        for alg in algs:
            if alg not in hda.ALGORITHMS:
                raise ValueError(f"unknown algorithm {alg!r}")
        overrides["algorithms"] = algs
    if getattr(args, "thresholds", None):
        overrides["quality_thresholds"] = [float(x) for x in args.thresholds.split(",")]
    return RunConfig.load(getattr(args, "config", None), overrides)


def _dispatch(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    if args.command == "detect":
        return cmd_detect(cfg)
    if args.command in ("evaluate", "sensitivity"):
        wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
        for m in wanted:
            if m not in ("m1", "m2", "m3"):
                raise ValueError(f"unknown metric {m!r}")
        if args.command == "evaluate":
            return cmd_evaluate(cfg, wanted, args.homes_dir)
        return cmd_sensitivity(cfg, wanted, args.homes_dir)
    if args.command == "apps":
        if args.app == "evac":
            return cmd_apps_evac(cfg, args.pre, args.post, args.zones_path, args.threshold_m)
        if args.app == "consistency":
            return cmd_apps_consistency(cfg, args.a, args.b, args.zones_path)
        return cmd_apps_income(cfg, args.a, args.b, args.zones_path)
    if args.command == "synth":
        return cmd_synth(cfg)
    raise ValueError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (OSError, TraceFormatError, MetricError, json.JSONDecodeError, ValueError) as exc:
        print(f"homedetect: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        print(f"homedetect: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
