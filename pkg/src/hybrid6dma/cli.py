"""Command-line entry point: load a YAML experiment file, run it, write results.

Commands::

    hybrid6dma run CONFIG [--seed S] [--out DIR] [--threads T] [--allow-huge-grid]
    hybrid6dma selftest [--inject-fault]
    hybrid6dma print-config KIND

Each run writes ``<kind>.json`` (resolved config, per-point results,
timings, version) and ``<kind>.csv`` (one row per data point, ``#``-prefixed
metadata lines, then a header row). The CSV holds no timings, so reruns with
the same seed are byte-identical.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .channel import CarrierConfig
from .estimator import FineGridSpec, GridPreset, desk_preset, full_preset
from .scenario import ScenarioConfig

OUT_ENV = "HYBRID6DMA_OUT"
KINDS = ("sparsity-map", "capacity-vs-distance", "mse-vs-snr", "single-run")
HUGE_GRID = 50_000_000


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# scenario keys as written in config files -> ScenarioConfig fields
SCENARIO_KEYS = {
    "B": "n_surfaces",
    "N": "n_antennas",
    "K": "n_users",
    "M": "n_candidates",
    "T": "n_slots",
    "site_side": "site_side",
    "spacing_wavelengths": "spacing_wavelengths",
    "d_min": "d_min",
    "d_max": "d_max",
}
INT_KEYS = {"B", "N", "K", "M", "T"}

GRID_KEYS = (
    "d_min", "d_max", "d_step", "az_step_deg", "el_step_deg",
    "el_min_deg", "el_max_deg",
    "fine_d_span", "fine_d_step", "fine_az_span_deg", "fine_el_span_deg",
    "fine_az_step_deg", "fine_el_step_deg", "threshold",
)

KIND_DEFAULTS = {
    "sparsity-map": {},
    "capacity-vs-distance": {
        "distances": [20.0, 50.0, 100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0],
        "capacity_snr_db": 10.0,
        "capacity_amplitude": "common",
    },
    "mse-vs-snr": {"snr_db": [0.0, 5.0, 10.0, 15.0, 20.0], "include_ls": True},
    "single-run": {"snr_db": [10.0], "include_ls": True},
}

TOP_KEYS = {"experiment", "seed", "trials", "output_dir", "scenario", "grid",
            "distances", "capacity_snr_db", "capacity_amplitude", "snr_db", "include_ls"}


@dataclass
class ExperimentConfig:
    kind: str
    scenario: ScenarioConfig
    grid: dict
    output_dir: str = "results"
    seed: int = 0
    trials: int = 100
    options: dict = field(default_factory=dict)

    def preset(self) -> GridPreset:
        return build_preset(self.grid, self.scenario)

    def to_dict(self) -> dict:
        sc = self.scenario
        return {
            "experiment": self.kind,
            "seed": self.seed,
            "trials": self.trials,
            "output_dir": self.output_dir,
            "scenario": {
                **{key: getattr(sc, attr) for key, attr in SCENARIO_KEYS.items()},
                "carrier_hz": sc.carrier.frequency,
            },
            "grid": dict(self.grid),
            **copy.deepcopy(self.options),
        }


def _number(key: str, value, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    if not np.isfinite(value):
        raise ConfigError(key, "must be finite")
    return float(value)


def _scenario(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("scenario", "expected a mapping")
    unknown = set(raw) - set(SCENARIO_KEYS) - {"carrier_hz"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    values = {}
    for key, attr in SCENARIO_KEYS.items():
        if key in raw:
            values[attr] = _number(key, raw[key], key in INT_KEYS)
    for key in INT_KEYS:
        if key in raw and values[SCENARIO_KEYS[key]] < 1:
            raise ConfigError(key, "must be >= 1")
    carrier = CarrierConfig()
    if "carrier_hz" in raw:
        f = _number("carrier_hz", raw["carrier_hz"])
        if f <= 0:
            raise ConfigError("carrier_hz", "must be positive")
        carrier = CarrierConfig(f)
    if values.get("site_side", 1.0) <= 0:
        raise ConfigError("site_side", "must be positive")
    if values.get("spacing_wavelengths", 1.0) <= 0:
        raise ConfigError("spacing_wavelengths", "must be positive")
    try:
        return ScenarioConfig(carrier=carrier, **values)
    except ValueError as exc:
        msg = str(exc)
        key = "B" if "n_surfaces" in msg else "d_min" if "d_min" in msg else "scenario"
        raise ConfigError(key, msg) from None


def _grid(raw, scenario: ScenarioConfig) -> dict:
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("grid", "expected a mapping")
    unknown = set(raw) - set(GRID_KEYS) - {"preset"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    name = raw.get("preset", "desk")
    if name not in ("desk", "full"):
        raise ConfigError("preset", f"unknown grid preset {name!r}")
    base = (desk_preset(scenario.d_min, scenario.d_max) if name == "desk"
            else full_preset(scenario.carrier.wavelength))
    resolved = {"preset": name, **_preset_fields(base)}
    for key in GRID_KEYS:
        if key in raw and raw[key] is not None:
            resolved[key] = _number(key, raw[key])
    for key in GRID_KEYS:
        if key.endswith(("step", "step_deg", "span", "span_deg", "threshold")) and resolved[key] <= 0:
            raise ConfigError(key, "must be positive")
    if resolved["d_min"] <= 0 or resolved["d_max"] < resolved["d_min"]:
        raise ConfigError("d_max", "need 0 < d_min <= d_max")
    try:
        build_preset(resolved, scenario)
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None
    return resolved


def _preset_fields(p: GridPreset) -> dict:
    deg = np.degrees
    f = p.fine
    return {
        "d_min": p.d_min, "d_max": p.d_max, "d_step": p.d_step,
        "az_step_deg": float(deg(p.az_step)), "el_step_deg": float(deg(p.el_step)),
        "el_min_deg": float(deg(p.el_range[0])), "el_max_deg": float(deg(p.el_range[1])),
        "fine_d_span": f.distance_span, "fine_d_step": f.distance_step,
        "fine_az_span_deg": float(deg(f.azimuth_span)), "fine_el_span_deg": float(deg(f.elevation_span)),
        "fine_az_step_deg": float(deg(f.azimuth_step)), "fine_el_step_deg": float(deg(f.elevation_step)),
        "threshold": p.default_threshold(),
    }


def build_preset(grid: dict, scenario: ScenarioConfig) -> GridPreset:
    rad = np.radians
    fine = FineGridSpec(grid["fine_d_span"], rad(grid["fine_az_span_deg"]), rad(grid["fine_el_span_deg"]),
                        grid["fine_d_step"], rad(grid["fine_az_step_deg"]), rad(grid["fine_el_step_deg"]))
    return GridPreset(grid["preset"], grid["d_min"], grid["d_max"], grid["d_step"],
                      rad(grid["az_step_deg"]), rad(grid["el_step_deg"]), fine,
                      el_range=(rad(grid["el_min_deg"]), rad(grid["el_max_deg"])))


def parse_config(raw) -> ExperimentConfig:
    """Validate a parsed YAML document and fill in every default."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    kind = raw.get("experiment", "mse-vs-snr")
    if kind not in KINDS:
        raise ConfigError("experiment", f"expected one of {', '.join(KINDS)}")
    scenario = _scenario(raw.get("scenario") or {})
    grid = _grid(raw.get("grid"), scenario)
    seed = _number("seed", raw.get("seed", 0), integer=True)
    trials = _number("trials", raw.get("trials", 100), integer=True)
    if trials < 1:
        raise ConfigError("trials", "must be >= 1")
    out = raw.get("output_dir", "results")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir", "expected a non-empty string")
    options = copy.deepcopy(KIND_DEFAULTS[kind])
    for key in ("distances", "capacity_snr_db", "capacity_amplitude", "snr_db", "include_ls"):
        if key not in raw:
            continue
        if key not in options:
            raise ConfigError(key, f"not used by experiment {kind!r}")
        value = raw[key]
        if key in ("distances", "snr_db"):
            if not isinstance(value, list) or not value:
                raise ConfigError(key, "expected a non-empty list")
            value = [_number(key, v) for v in value]
            if key == "distances" and min(value) <= 0:
                raise ConfigError(key, "distances must be positive")
        elif key == "capacity_amplitude":
            if value not in ("common", "taper"):
                raise ConfigError(key, "expected common or taper")
        elif key == "include_ls":
            if not isinstance(value, bool):
                raise ConfigError(key, "expected true or false")
        else:
            value = _number(key, value)
        options[key] = value
    return ExperimentConfig(kind, scenario, grid, out, seed, trials, options)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"parse error: {exc}") from None
    return parse_config(raw)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _table(columns: list, rows: list, meta: dict) -> str:
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def run_experiment(cfg: ExperimentConfig, threads: int | None = None,
                   allow_huge_grid: bool = False) -> tuple[dict, str]:
    """Run ``cfg`` and return ``(record, csv_text)`` without touching disk."""
    from . import experiments as ex

    preset = cfg.preset()
    if cfg.kind in ("mse-vs-snr", "single-run") and preset.coarse_size() > HUGE_GRID and not allow_huge_grid:
        raise ConfigError("grid", f"coarse grid has {preset.coarse_size():.3g} points; "
                                  "pass --allow-huge-grid to run it anyway")
    t0 = time.perf_counter()
    sc = cfg.scenario
    meta = {"experiment": cfg.kind, "seed": cfg.seed, "version": __version__}
    points = []
    if cfg.kind == "sparsity-map":
        smap, users, _ = ex.sparsity_experiment(sc, cfg.seed)
        columns = ["user", "distance_m", "azimuth_rad", "elevation_rad", "support"] + \
                  [f"pose_{m}" for m in range(sc.n_candidates)]
        rows = []
        for k, u in enumerate(users):
            support = int(smap.support_sizes[k])
            rows.append([k, u.distance, u.azimuth, u.elevation, support, *smap.power[k]])
            points.append({"x": k, "y": support, "stderr": 0.0})
        meta["columns"] = "pose_m is received power of user k at candidate pose m (linear)"
    elif cfg.kind == "capacity-vs-distance":
        res = ex.capacity_vs_distance(sc, cfg.options["distances"], cfg.trials, cfg.seed,
                                      cfg.options["capacity_snr_db"], threads,
                                      cfg.options["capacity_amplitude"])
        columns = ["distance_m"] + [f"{k}_{s}" for k in ("far", "near", "hybrid") for s in ("mean", "stderr")]
        rows = []
        for d, draws in res.items():
            row = [d]
            for kind in ("far", "near", "hybrid"):
                mean, err = ex._summary(draws[kind])
                row += [mean, err]
                points.append({"series": kind, "x": d, "y": mean, "stderr": err})
            rows.append(row)
        meta["columns"] = "sum capacity in bits/s/Hz averaged over draws"
    elif cfg.kind == "mse-vs-snr":
        res = ex.mse_vs_snr(sc, preset, cfg.options["snr_db"], cfg.trials, sc.n_candidates, cfg.seed,
                            cfg.options["include_ls"], threads, cfg.grid["threshold"])
        names = ["clustered"] + (["ls"] if cfg.options["include_ls"] else [])
        columns = ["snr_db"] + [f"{n}_{s}" for n in names for s in ("nmse", "stderr")]
        rows = []
        for i, snr in enumerate(res["snr_db"]):
            row = [snr]
            for n in names:
                row += [res[n].y[i], res[n].stderr[i]]
                points.append({"series": n, "x": snr, "y": res[n].y[i], "stderr": res[n].stderr[i]})
            rows.append(row)
        meta["columns"] = "mean NMSE over trials at held-out poses"
    else:
        res = ex.mse_vs_snr(sc, preset, cfg.options["snr_db"], 1, sc.n_candidates, cfg.seed,
                            cfg.options["include_ls"], threads, cfg.grid["threshold"])
        names = ["clustered"] + (["ls"] if cfg.options["include_ls"] else [])
        columns = ["snr_db"] + [f"{n}_nmse" for n in names]
        rows = [[snr] + [res[n].y[i] for n in names] for i, snr in enumerate(res["snr_db"])]
        points = [{"series": n, "x": snr, "y": res[n].y[i], "stderr": 0.0}
                  for n in names for i, snr in enumerate(res["snr_db"])]
        meta["columns"] = "NMSE of one trial at held-out poses"
    record = {
        "experiment": cfg.kind,
        "version": __version__,
        "config": cfg.to_dict(),
        "results": points,
        "timings": {"total_s": time.perf_counter() - t0},
    }
    meta["config"] = json.dumps(cfg.to_dict(), sort_keys=True)
    return record, _table(columns, rows, meta)


def write_outputs(cfg: ExperimentConfig, record: dict, table: str, out_dir) -> list[Path]:
    """Write both files atomically; nothing is left behind on failure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    targets = [(out_dir / f"{cfg.kind}.json", json.dumps(_jsonable(record), indent=2) + "\n"),
               (out_dir / f"{cfg.kind}.csv", table)]
    temps = []
    try:
        for path, text in targets:
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{path.name}.")
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            temps.append((tmp, path))
        for tmp, path in temps:
            os.replace(tmp, path)
    except BaseException:
        for tmp, path in temps:
            for p in (tmp, path):
                if os.path.exists(p):
                    os.remove(p)
        raise
    return [p for p, _ in targets]


def resolve_output_dir(cfg: ExperimentConfig, flag: str | None) -> str:
    if flag:
        return flag
    return os.environ.get(OUT_ENV) or cfg.output_dir


# ---------------------------------------------------------------------------
# Self test
# ---------------------------------------------------------------------------

def selftest(inject_fault: bool = False, stream=None) -> bool:
    """Fast invariant checks, one line per check; True when all pass."""
    from . import selfcheck

    stream = stream or sys.stdout
    ok = True
    for name, passed, detail in selfcheck.run_checks(inject_fault=inject_fault):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}", file=stream)
    return ok


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybrid6dma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a YAML file")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None, help=f"output directory (else ${OUT_ENV}, else config)")
    run.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    run.add_argument("--allow-huge-grid", action="store_true")
    st = sub.add_parser("selftest", help="run the fast invariant checks")
    st.add_argument("--inject-fault", action="store_true", help="perturb a rotation matrix (negative control)")
    pc = sub.add_parser("print-config", help="print the resolved default config for an experiment")
    pc.add_argument("kind", choices=KINDS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "print-config":
            sys.stdout.write(dump_config(parse_config({"experiment": args.kind})))
            return 0
        if args.command == "selftest":
            return 0 if selftest(args.inject_fault) else 1
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        record, table = run_experiment(cfg, args.threads, args.allow_huge_grid)
        for path in write_outputs(cfg, record, table, resolve_output_dir(cfg, args.out)):
            print(path)
        return 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
