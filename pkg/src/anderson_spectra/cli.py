"""Command-line experiment runner.

Each subcommand dispatches one ensemble or spectral experiment, writes
``summary.json``, ``data.csv`` and ``manifest.json`` under the output
directory, and reports progress on standard error.  Exit codes: 0 on
success, 2 on configuration errors, 3 when ``--check`` thresholds fail.

Configuration comes from a flat ``key = value`` text file (``--config``),
overridden by command-line flags, with documented defaults filling the
rest.  Unknown keys are rejected by name.  The environment variable
``ANDERSON_SPECTRA_OUT`` sets the default output root.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from . import _rng
from .model import parse_distribution, format_distribution, DistributionFormatError
from .spectral import estimate_ids, estimate_dos, estimate_holder_fit
from .transfer import lyapunov_exponent
from .ensemble import (ExperimentConfig, EnsembleSummary, wegner_probability,
                       minami_moment, expected_count,
                       two_eigenvalue_probability, poisson_local_statistics,
                       independent_block_process, bernoulli_min_spacing,
                       repulsion_scatter, interlacing_property_run,
                       PartitionError)

SUBCOMMANDS = ("wegner", "minami", "count", "two-ev", "poisson", "blocks",
               "dos", "lyapunov", "separation", "repulsion", "interlace",
               "holder")


class ConfigError(ValueError):
    """Invalid or unknown configuration input."""


class CheckFailure(RuntimeError):
    """Raised when --check thresholds are not met."""


def _geom(lo, hi, count):
    return [float(x) for x in np.geomspace(lo, hi, int(count))]


def _parse_floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    text = str(text).strip()
    if text.startswith("geom:"):
        a, b, c = text[len("geom:"):].split(",")
        return _geom(float(a), float(b), int(c))
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_ints(text):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(tok) for tok in str(text).split(",") if tok.strip()]


def _parse_grid(text):
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must be 'lo:hi:count', got {text!r}")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 2 or hi <= lo:
        raise ConfigError(f"degenerate grid {text!r}")
    return lo, hi, count


def _parse_window(text):
    parts = str(text).split(":")
    if len(parts) != 2:
        raise ConfigError(f"window must be 'lo:hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_bool(text):
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


# key -> (parser, per-subcommand default factory, help text)
_KEYS = {
    "dist": (str, lambda sc: {"blocks": "uniform:-2,2@lambda=2",
                              "separation": "bernoulli:0.5",
                              "repulsion": "bernoulli:0.5"}.get(sc, "uniform:-2,2"),
             "site distribution spec, e.g. uniform:0,1@lambda=2"),
    "n": (_parse_ints, lambda sc: {"wegner": [100], "minami": [200],
                                   "two-ev": [200], "count": [1000],
                                   "separation": [100, 200, 400],
                                   "repulsion": [2000]}.get(sc, [1000]),
          "comma-separated chain lengths"),
    "delta": (_parse_floats, lambda sc: {
        "wegner": _geom(2.0 ** -12, 2.0 ** -7, 6),
        "minami": _geom(2.0 ** -10, 2.0 ** -5, 6),
        "two-ev": _geom(2.0 ** -10, 2.0 ** -4, 7),
        "count": [0.005],
        "holder": _geom(10.0 ** -2.2, 10.0 ** -0.7, 7),
    }.get(sc, []), "comma list or geom:lo,hi,count of window half-widths"),
    "e0": (float, lambda sc: None, "window center energy (default: diagonal center)"),
    "l": (float, lambda sc: 6.0 if sc == "blocks" else 20.0,
          "rescaled window length"),
    "r": (int, lambda sc: {"wegner": 5000, "minami": 10000, "two-ev": 10000,
                           "count": 2000, "poisson": 2000, "blocks": 2000,
                           "dos": 200, "separation": 500, "repulsion": 200,
                           "interlace": 10000, "holder": 200}.get(sc, 1000),
          "realization count"),
    "seed": (int, lambda sc: 0, "master seed"),
    "k": (float, lambda sc: 12.0, "block size multiplier (x log N)"),
    "k1": (float, lambda sc: 1.5, "buffer size multiplier (x log N)"),
    "workers": (int, lambda sc: 1, "parallel worker processes"),
    "out": (str, lambda sc: None, "output directory"),
    "bandwidth": (float, lambda sc: 0.05, "density smoothing bandwidth"),
    "grid": (str, lambda sc: None, "energy grid lo:hi:count"),
    "window": (str, lambda sc: None, "energy window lo:hi"),
    "quantiles": (_parse_floats, lambda sc: [0.5, 0.9, 0.99], "spacing quantiles"),
    "threshold": (float, lambda sc: None,
                  "near-degenerate gap threshold (default n^-3)"),
    "tol": (float, lambda sc: 1e-13, "relative spacing tolerance"),
    "steps": (int, lambda sc: 200000, "cocycle steps"),
    "replicas": (int, lambda sc: 8, "cocycle replicas"),
    "energy": (_parse_floats, lambda sc: [0.0], "energies for cocycle runs"),
    "inner": (int, lambda sc: 8, "inner resamples per outer realization"),
    "dos_r": (int, lambda sc: 200, "realizations for reference density runs"),
    "c1": (float, lambda sc: 10.0, "window floor constant for the moment bound"),
}

_ALLOWED = {
    "wegner": {"dist", "n", "delta", "e0", "r", "seed", "workers", "out"},
    "minami": {"dist", "n", "delta", "e0", "r", "seed", "workers", "out", "c1"},
    "count": {"dist", "n", "delta", "e0", "r", "seed", "workers", "out",
              "bandwidth", "dos_r"},
    "two-ev": {"dist", "n", "delta", "e0", "r", "seed", "workers", "out"},
    "poisson": {"dist", "n", "e0", "l", "r", "seed", "workers", "out",
                "bandwidth", "dos_r"},
    "blocks": {"dist", "n", "e0", "l", "r", "seed", "workers", "out", "k",
               "k1", "bandwidth", "dos_r"},
    "dos": {"dist", "n", "grid", "r", "seed", "workers", "out", "bandwidth",
            "e0"},
    "lyapunov": {"dist", "energy", "steps", "replicas", "seed", "out",
                 "workers"},
    "separation": {"dist", "n", "r", "seed", "workers", "out", "quantiles",
                   "tol"},
    "repulsion": {"dist", "n", "r", "seed", "workers", "out", "threshold"},
    "interlace": {"r", "seed", "out", "workers"},
    "holder": {"dist", "n", "delta", "window", "e0", "r", "seed", "workers",
               "out"},
}


def read_config_file(path):
    """Parse a flat key=value file; returns (dict of raw strings, line map)."""
    values = {}
    lines = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(raw, 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
        lines[key] = lineno
    return values, lines


def _typed(subcommand, key, raw, where=""):
    parser = _KEYS[key][0]
    try:
        return parser(raw)
    except ConfigError as exc:
        raise ConfigError(f"{where}bad value for {key!r}: {exc}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}bad value for {key!r}: {exc}") from None


def validate_config(path, experiment=None):
    """Validate a config file and return the normalized effective config.

    Unknown keys are reported with their line numbers; missing keys are
    filled with the experiment's defaults and listed under ``_defaulted``.
    """
    values, lines = read_config_file(path)
    exp = experiment or values.pop("experiment", None)
    if exp is None:
        raise ConfigError(
            f"{path}: missing 'experiment' key and no subcommand context")
    if exp not in SUBCOMMANDS:
        raise ConfigError(f"{path}: unknown experiment {exp!r}")
    allowed = _ALLOWED[exp]
    unknown = sorted(set(values) - allowed - {"check", "quiet"})
    if unknown:
        locs = ", ".join(f"{k!r} (line {lines.get(k, '?')})" for k in unknown)
        raise ConfigError(f"{path}: unknown keys for {exp}: {locs}")
    normalized = {"experiment": exp}
    defaulted = []
    for key in sorted(allowed):
        if key in values:
            normalized[key] = _typed(exp, key, values[key],
                                     f"{path}:{lines[key]}: ")
        else:
            normalized[key] = _KEYS[key][1](exp)
            defaulted.append(key)
    for key in ("check", "quiet"):
        if key in values:
            normalized[key] = _parse_bool(values[key])
    if isinstance(normalized.get("dist"), str):
        try:
            parse_distribution(normalized["dist"])
        except DistributionFormatError as exc:
            lineno = lines.get("dist")
            where = f"{path}:{lineno}: " if lineno else f"{path}: "
            raise ConfigError(f"{where}{exc}") from None
    normalized["_defaulted"] = defaulted
    return normalized


def _merge_settings(subcommand, args):
    """Defaults < config file < flags.  All raw values go through _KEYS parsers."""
    allowed = _ALLOWED[subcommand]
    file_values = {}
    lines = {}
    if getattr(args, "config", None):
        file_values, lines = read_config_file(args.config)
        exp_key = file_values.pop("experiment", None)
        if exp_key is not None and exp_key != subcommand:
            raise ConfigError(
                f"{args.config}: experiment {exp_key!r} does not match "
                f"subcommand {subcommand!r}")
        unknown = sorted(set(file_values) - allowed - {"check", "quiet"})
        if unknown:
            locs = ", ".join(f"{k!r} (line {lines.get(k, '?')})" for k in unknown)
            raise ConfigError(
                f"{args.config}: unknown keys for {subcommand}: {locs}")
    settings = {}
    defaulted = []
    for key in sorted(allowed):
        flag_value = getattr(args, key.replace("-", "_"), None)
        if flag_value is not None:
            settings[key] = _typed(subcommand, key, flag_value,
                                   f"--{key}: ")
        elif key in file_values:
            settings[key] = _typed(subcommand, key, file_values[key],
                                   f"{args.config}:{lines[key]}: ")
        else:
            settings[key] = _KEYS[key][1](subcommand)
            defaulted.append(key)
    return settings, defaulted


def _build_experiment_config(subcommand, settings):
    dist = parse_distribution(settings["dist"]) if "dist" in settings else None
    kwargs = {}
    if dist is not None:
        kwargs["dist"] = dist
    if "n" in settings:
        kwargs["n_list"] = tuple(settings["n"])
    if "delta" in settings:
        kwargs["delta_list"] = tuple(settings["delta"])
    if "e0" in settings and settings["e0"] is not None:
        kwargs["e0"] = settings["e0"]
    if "l" in settings:
        kwargs["window_length"] = settings["l"]
    if "r" in settings:
        kwargs["realizations"] = settings["r"]
    if "seed" in settings:
        kwargs["master_seed"] = settings["seed"]
    if "k" in settings:
        kwargs["block_multiplier"] = settings["k"]
    if "k1" in settings:
        kwargs["buffer_multiplier"] = settings["k1"]
    if "workers" in settings:
        kwargs["workers"] = settings["workers"]
    if "bandwidth" in settings:
        kwargs["dos_bandwidth"] = settings["bandwidth"]
    if "dos_r" in settings:
        kwargs["dos_realizations"] = settings["dos_r"]
    if "quantiles" in settings:
        kwargs["spacing_quantiles"] = tuple(settings["quantiles"])
    if "tol" in settings:
        kwargs["spacing_tolerance"] = settings["tol"]
    if "threshold" in settings and settings["threshold"] is not None:
        kwargs["gap_threshold"] = settings["threshold"]
    if "c1" in settings:
        kwargs["minami_floor_constant"] = settings["c1"]
    if "inner" in settings:
        kwargs["inner_samples"] = settings["inner"]
    return ExperimentConfig(**kwargs)


def _progress_printer(quiet):
    if quiet:
        return None
    state = {"last": 0.0}

    def report(done, total):
        now = time.monotonic()
        if now - state["last"] >= 0.5 or done >= total:
            state["last"] = now
            print(f"{done}/{total}", file=sys.stderr, flush=True)

    return report


# ---------------------------------------------------------------------------
# per-subcommand runners: settings -> (summary, checks dict)

def _run_wegner(settings, progress):
    cfg = _build_experiment_config("wegner", settings)
    summary = wegner_probability(cfg, progress)
    n0 = cfg.n_list[0]
    slope = summary.slopes[f"delta_slope_n={n0}"]["slope"]
    return summary, {"width_slope_in_[0.8,1.15]": 0.8 <= slope <= 1.15}


def _run_minami(settings, progress):
    cfg = _build_experiment_config("minami", settings)
    summary = minami_moment(cfg, progress)
    target = summary.metadata.get("target_slope") or 0.0
    checks = {}
    for n in cfg.n_list:
        slope = summary.slopes[f"delta_slope_n={n}"]["slope"]
        checks[f"moment_slope_n={n}_ge_{target:.3f}"] = slope >= target
    return summary, checks


def _run_count(settings, progress):
    cfg = _build_experiment_config("count", settings)
    summary = expected_count(cfg, progress)
    ok = all(row["within_10pct_3se"] for row in summary.rows)
    return summary, {"all_windows_within_10pct_3se": ok}


def _run_two_ev(settings, progress):
    cfg = _build_experiment_config("two-ev", settings)
    summary = two_eigenvalue_probability(cfg, progress)
    beta = cfg.dist.holder_exponent or 1.0
    target = 1.0 + beta - 0.2
    checks = {}
    for n in cfg.n_list:
        key = f"small_delta_slope_n={n}"
        if key in summary.slopes:
            checks[f"{key}_ge_{target:.3f}"] = summary.slopes[key]["slope"] >= target
    return summary, checks


def _run_poisson(settings, progress):
    cfg = _build_experiment_config("poisson", settings)
    diag = poisson_local_statistics(cfg, progress)
    return diag.summary, {"chi2_p_gt_0.01": diag.chi2_p > 0.01,
                          "gap_ks_lt_0.05": diag.ks_distance < 0.05}


def _run_blocks(settings, progress):
    cfg = _build_experiment_config("blocks", settings)
    result = independent_block_process(cfg, progress)
    return result.summary, {"tv_distance_le_0.1": result.tv_distance <= 0.1,
                            "buffer_hit_rate_le_0.1": result.buffer_hit_rate <= 0.1,
                            "discard_rate_le_0.05": result.discard_rate <= 0.05}


def _run_dos(settings, progress):
    dist = parse_distribution(settings["dist"])
    n = settings["n"][0]
    bandwidth = settings["bandwidth"]
    if settings.get("grid"):
        lo, hi, count = _parse_grid(settings["grid"])
    else:
        blo, bhi = dist.spectral_bounds()
        pad = 4.0 * bandwidth
        lo, hi, count = blo - pad, bhi + pad, 601
    grid = np.linspace(lo, hi, count)
    ids = estimate_ids(dist, n, grid, settings["r"], settings["seed"])
    dos = estimate_dos(ids, bandwidth)
    e0 = settings.get("e0")
    e0 = dist.diagonal_center() if e0 is None else e0
    rows = [{"energy": float(e), "ids": float(v), "ids_stderr": float(se),
             "dos": float(k)}
            for e, v, se, k in zip(grid, ids.values, ids.stderr, dos.density)]
    mass = float(np.trapezoid(dos.density, grid))
    ids_range = float(ids.values[-1] - ids.values[0])
    summary = EnsembleSummary(
        experiment="dos",
        params={"dist": format_distribution(dist), "n": n, "r": settings["r"],
                "seed": settings["seed"], "bandwidth": bandwidth,
                "grid": [lo, hi, count]},
        columns=["energy", "ids", "ids_stderr", "dos"], rows=rows,
        constants={"k_at_e0": float(dos(e0)), "e0": float(e0),
                   "dos_integral": mass, "ids_range": ids_range,
                   "clipped_mass": dos.clipped_mass},
        metadata={"master_seed": settings["seed"]})
    monotone = bool(np.all(np.diff(ids.values) >= -1e-12))
    integral_ok = ids_range == 0.0 or abs(mass - ids_range) <= 0.02 * max(ids_range, 1e-9)
    return summary, {"ids_monotone": monotone,
                     "dos_integral_within_2pct": integral_ok}


def _run_lyapunov(settings, progress):
    dist = parse_distribution(settings["dist"])
    rows = []
    energies = settings["energy"]
    for i, e in enumerate(energies):
        gamma, se = lyapunov_exponent(dist, e, steps=settings["steps"],
                                      replicas=settings["replicas"],
                                      seed=settings["seed"])
        rows.append({"energy": float(e), "gamma": gamma, "stderr": se,
                     "steps": settings["steps"],
                     "replicas": settings["replicas"]})
        if progress:
            progress(i + 1, len(energies))
    summary = EnsembleSummary(
        experiment="lyapunov",
        params={"dist": format_distribution(dist), **{k: settings[k] for k in
                                                      ("steps", "replicas", "seed")}},
        columns=["energy", "gamma", "stderr", "steps", "replicas"], rows=rows,
        metadata={"master_seed": settings["seed"]})
    return summary, {"estimates_finite": all(math.isfinite(r["gamma"]) for r in rows)}


def _run_separation(settings, progress):
    cfg = _build_experiment_config("separation", settings)
    summary, spacings = bernoulli_min_spacing(cfg, progress)
    trend = summary.constants.get("c_hat_trend_ratio")
    checks = {"all_spacings_positive": summary.metadata["all_spacings_positive"]}
    if trend is not None:
        checks["c_hat_trend_ratio_le_1.25"] = trend <= 1.25
    return summary, checks


def _run_repulsion(settings, progress):
    cfg = _build_experiment_config("repulsion", settings)
    result = repulsion_scatter(cfg, progress)
    checks = {}
    if result.advisory:
        checks["enough_close_pairs"] = False
    else:
        checks["envelope_slope_positive_ci"] = (
            math.isfinite(result.ci_low) and result.ci_low > 0.0)
        checks["fraction_above_envelope_ge_0.95"] = result.fraction_satisfied >= 0.95
    return result.summary, checks


def _run_interlace(settings, progress):
    cfg = ExperimentConfig(dist=parse_distribution("uniform:0,1"),
                           realizations=settings["r"],
                           master_seed=settings["seed"],
                           workers=settings["workers"])
    result = interlacing_property_run(cfg, progress)
    return result.summary, {"all_instances_pass": not result.failures}


def _run_holder(settings, progress):
    dist = parse_distribution(settings["dist"])
    n = settings["n"][0]
    e0 = settings.get("e0")
    e0 = dist.diagonal_center() if e0 is None else e0
    if settings.get("window"):
        window = _parse_window(settings["window"])
    else:
        window = (e0 - 0.5, e0 + 0.5)
    fit = estimate_holder_fit(dist, n, window, settings["delta"],
                              settings["r"], settings["seed"])
    rows = [{"delta": float(d), "sup_measure": float(s), "stderr": float(se)}
            for d, s, se in zip(fit.deltas, fit.sup_measures, fit.sup_stderr)]
    if progress:
        progress(1, 1)
    summary = EnsembleSummary(
        experiment="holder",
        params={"dist": format_distribution(dist), "n": n,
                "window": list(window), "r": settings["r"],
                "seed": settings["seed"],
                "delta": [float(d) for d in fit.deltas]},
        columns=["delta", "sup_measure", "stderr"], rows=rows,
        constants={"gamma_hat": fit.gamma_hat,
                   "grid_points": fit.grid_points},
        metadata={"master_seed": settings["seed"]})
    return summary, {"gamma_in_(0,1.05]": 0.0 < fit.gamma_hat <= 1.05}


_RUNNERS = {
    "wegner": _run_wegner, "minami": _run_minami, "count": _run_count,
    "two-ev": _run_two_ev, "poisson": _run_poisson, "blocks": _run_blocks,
    "dos": _run_dos, "lyapunov": _run_lyapunov, "separation": _run_separation,
    "repulsion": _run_repulsion, "interlace": _run_interlace,
    "holder": _run_holder,
}


# ---------------------------------------------------------------------------
# artifact writing

def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set)):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _json_bytes(payload):
    return (json.dumps(payload, indent=2, sort_keys=True,
                       default=_json_default) + "\n").encode()


def _atomic_write(path, data):
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _csv_cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _csv_bytes(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row.get(c)) for c in columns])
    return buf.getvalue().encode()


def default_output_root():
    return os.environ.get("ANDERSON_SPECTRA_OUT", "runs")


def write_artifacts(outdir, summary, settings, defaulted, elapsed, checks):
    os.makedirs(outdir, exist_ok=True)
    summary_bytes = _json_bytes(summary.to_dict())
    data_bytes = _csv_bytes(summary.columns, summary.rows)
    digest = hashlib.sha256(summary_bytes + data_bytes).hexdigest()
    summary_path = os.path.join(outdir, "summary.json")
    data_path = os.path.join(outdir, "data.csv")
    manifest = {
        "experiment": summary.experiment,
        "config": {k: settings[k] for k in sorted(settings)},
        "defaulted_keys": sorted(defaulted),
        "artifacts": {"summary": "summary.json", "data": "data.csv"},
        "checks": checks,
        "digest": digest,
        "master_seed": settings.get("seed"),
        "timings": {"wall_seconds": elapsed},
        "versions": {"anderson_spectra": __version__,
                     "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    _atomic_write(summary_path, summary_bytes)
    _atomic_write(data_path, data_bytes)
    _atomic_write(os.path.join(outdir, "manifest.json"), _json_bytes(manifest))
    return digest


# ---------------------------------------------------------------------------
# argument parsing

def _preprocess_argv(argv):
    """Join option values that start with '-' (grids, negative numbers)."""
    merged = []
    skip = False
    value_flags = {"--grid", "--window", "--delta", "--e0", "--energy",
                   "--quantiles", "--l", "--threshold"}
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok in value_flags and i + 1 < len(argv):
            nxt = argv[i + 1]
            if nxt.startswith("-") and len(nxt) > 1 and (nxt[1].isdigit() or nxt[1] == "."):
                merged.append(f"{tok}={nxt}")
                skip = True
                continue
        merged.append(tok)
    return merged


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="anderson-spectra",
        description="Seeded spectral-statistics experiments for 1D lattice "
                    "Anderson models")
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for sc in SUBCOMMANDS:
        sub = subparsers.add_parser(sc)
        sub.add_argument("--config", help="flat key=value config file")
        sub.add_argument("--check", action="store_true",
                         help="exit 3 when acceptance thresholds fail")
        sub.add_argument("--quiet", action="store_true",
                         help="suppress progress output")
        sub.add_argument("--validate-only", action="store_true",
                         help="validate configuration and print it, then exit")
        for key in sorted(_ALLOWED[sc]):
            sub.add_argument(f"--{key}", help=_KEYS[key][2])
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(_preprocess_argv(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings, defaulted = _merge_settings(args.subcommand, args)
    except (ConfigError, DistributionFormatError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if args.validate_only:
        print(f"experiment = {args.subcommand}")
        for key in sorted(settings):
            print(f"{key} = {settings[key]}")
        if defaulted:
            print(f"# defaults filled: {', '.join(sorted(defaulted))}")
        return 0
    outdir = settings.get("out") or os.path.join(default_output_root(),
                                                 args.subcommand)
    progress = _progress_printer(args.quiet)
    start = time.monotonic()
    try:
        summary, checks = _RUNNERS[args.subcommand](settings, progress)
    except (ConfigError, DistributionFormatError, PartitionError,
            ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    elapsed = time.monotonic() - start
    digest = write_artifacts(outdir, summary, settings, defaulted, elapsed,
                             checks)
    if not args.quiet:
        print(f"wrote {outdir} (digest {digest[:12]}, {elapsed:.1f}s)",
              file=sys.stderr)
    if args.check and not all(checks.values()):
        failed = [name for name, ok in checks.items() if not ok]
        print(f"check failed: {', '.join(failed)}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
