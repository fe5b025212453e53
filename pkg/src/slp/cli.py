"""The ``slp`` command: run experiment sweeps and sanity-check configs.

Config files are INI style::

    [experiment]
    n_antennas = 16
    n_users = 16
    block_len = 50
    qam_level = 2
    noise_var = 1.0
    eps_grid = 0.10, 0.05, 0.02, 0.01, 0.005
    n_channels = 100
    seed = 1
    sep_trials = 200000
    failure_budget = 0

    [scheme.ZF]
    [scheme.LinearBF]
    [scheme.SlpHeuristic]
    zeta = 1, 1.2
    [scheme.SlpBlockAvg]
    [scheme.SlpBlockPeak]

Every ``[scheme.*]`` section adds a scheme; without any, all schemes run
(heuristic with ``zeta = 1, 1.2``).  Exit codes: 0 success, 2 invalid
config, 3 more degraded cells than ``failure_budget`` allows.
"""
import argparse
import configparser
import csv
import json
import logging
import os
import platform
import re
import sys
import time

import numpy as np
import scipy

from . import __version__
from .errors import InvalidInputError
from .sep import gain_constants, sinr_target_from_sep
from .sim import DEFAULT_SCHEMES, SimConfig, run_experiment, scheme_name, summarize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3

RESULT_COLUMNS = ("realization", "eps", "scheme", "avg_power", "peak_energy",
                  "max_emp_sep", "degraded")
SUMMARY_COLUMNS = ("scheme", "eps", "mean_avg_power", "mean_peak_energy", "max_emp_sep")

_INT_KEYS = ("n_antennas", "n_users", "block_len", "qam_level", "n_channels", "seed",
             "sep_trials", "failure_budget")
_FLOAT_KEYS = ("noise_var",)
_LIST_KEYS = ("eps_grid",)
_SCHEME_KINDS = ("ZF", "LinearBF", "SlpHeuristic", "SlpBlockAvg", "SlpBlockPeak")

logger = logging.getLogger("slp")


class ConfigError(Exception):
    """Invalid configuration, with the offending location."""

    def __init__(self, path, message, line=None, field=None):
        self.path, self.line, self.field = path, line, field
        where = f"{path}:{line}" if line else str(path)
        what = f" [{field}]" if field else ""
        super().__init__(f"{where}:{what} {message}")


def _line_of(text, section, key=None):
    """1-based line of ``section`` (or of ``key`` inside it), or None."""
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[(.+)\]$", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section:
            k = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            if k == key.lower():
                return no
    return None


def _floats(text):
    return [float(v) for v in re.split(r"[,\s]+", text.strip()) if v]


def load_config(path):
    """Parse and validate an INI config into a :class:`SimConfig`.

    Raises
    ------
    ConfigError
        With the file line and field of the first problem found.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(path, f"cannot read config: {exc.strerror or exc}") from None
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(path, f"syntax error: {exc.message.splitlines()[0]}", line=line) from None

    if not parser.has_section("experiment"):
        raise ConfigError(path, "missing [experiment] section")
    kw = {}
    where = {}
    for key, raw in parser.items("experiment"):
        line = _line_of(text, "experiment", key)
        where[key] = line
        try:
            if key in _INT_KEYS:
                kw[key] = int(raw)
            elif key in _FLOAT_KEYS:
                kw[key] = float(raw)
            elif key in _LIST_KEYS:
                kw[key] = _floats(raw)
            else:
                raise ConfigError(path, f"unknown key {key!r}", line=line, field=key)
        except ValueError:
            raise ConfigError(path, f"cannot parse value {raw!r}", line=line, field=key) from None

    schemes = []
    for section in parser.sections():
        if section == "experiment":
            continue
        line = _line_of(text, section)
        if not section.startswith("scheme."):
            raise ConfigError(path, f"unknown section [{section}]", line=line)
        kind = section[len("scheme."):].strip()
        if kind not in _SCHEME_KINDS:
            raise ConfigError(path, f"unknown scheme {kind!r}", line=line, field=section)
        keys = dict(parser.items(section))
        if kind == "SlpHeuristic":
            zl = _line_of(text, section, "zeta") or line
            try:
                zetas = _floats(keys.pop("zeta", "1"))
            except ValueError:
                raise ConfigError(path, "cannot parse zeta", line=zl, field="zeta") from None
            bad = [z for z in zetas if not z >= 1.0]
            if bad or not zetas:
                raise ConfigError(path, f"zeta must be >= 1, got {bad or zetas}", line=zl,
                                  field="zeta")
            schemes.extend(scheme_name(kind, z) for z in zetas)
        else:
            schemes.append(kind)
        if keys:
            k = next(iter(keys))
            raise ConfigError(path, f"unknown key {k!r}", line=_line_of(text, section, k),
                              field=k)
    if schemes:
        kw["schemes"] = schemes
    else:
        kw["schemes"] = list(DEFAULT_SCHEMES)
    try:
        return SimConfig(**kw)
    except InvalidInputError as exc:
        field = getattr(exc, "field", None)
        line = where.get(field)
        if field == "schemes":
            line = None
        raise ConfigError(path, str(exc), line=line, field=field) from None


def _num(v):
    return format(float(v), ".17g")


def write_results(path, results):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            w.writerow([r.realization, _num(r.eps), r.scheme, _num(r.avg_power),
                        _num(r.peak_energy), _num(r.max_emp_sep), int(r.degraded)])


def write_summary(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([row["scheme"], _num(row["eps"]), _num(row["mean_avg_power"]),
                        _num(row["mean_peak_energy"]), _num(row["max_emp_sep"])])


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("SLP_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("SLP_THREADS", f"not an integer: {env!r}") from None
        if n < 1:
            raise ConfigError("SLP_THREADS", "must be >= 1")
        return n
    return 1


def cmd_run(config_path, out_dir, threads=None, seed=None):
    """Run the configured sweep and write results.csv, summary.csv, manifest.json."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            if seed < 0:
                raise ConfigError(config_path, "seed must be non-negative", field="seed")
            cfg.seed = int(seed)
        n_threads = _threads(threads)
        if n_threads < 1:
            raise ConfigError(config_path, "--threads must be >= 1", field="threads")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out_dir}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    def progress(done, total):
        print(f"realization {done}/{total} done", flush=True)

    start = time.time()
    results = run_experiment(cfg, threads=n_threads, progress=progress)
    wall = time.time() - start
    rows = summarize(results, cfg)

    paths = {name: os.path.join(out_dir, name)
             for name in ("results.csv", "summary.csv", "manifest.json")}
    write_results(paths["results.csv"], results)
    write_summary(paths["summary.csv"], rows)
    degraded = [r for r in results if r.degraded]
    manifest = {
        "config": cfg.as_dict(),
        "artifacts": {k: os.path.abspath(v) for k, v in paths.items()},
        "wall_clock_seconds": wall,
        "threads": n_threads,
        "version": __version__,
        "software": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "rerun": f"slp run --config {os.path.abspath(config_path)} --out <dir> --seed {cfg.seed}",
        "cells": [{"realization": r.realization, "eps": r.eps, "scheme": r.scheme,
                   "degraded": r.degraded, "message": r.message, "solver": r.solver}
                  for r in results],
        "n_degraded": len(degraded),
    }
    with open(paths["manifest.json"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(results)} rows to {paths['results.csv']}")
    if len(degraded) > cfg.failure_budget:
        print(f"error: {len(degraded)} degraded cells exceed the failure budget of "
              f"{cfg.failure_budget}", file=sys.stderr)
        for r in degraded:
            print(f"  realization {r.realization}, eps={r.eps:g}, {r.scheme}: {r.message}",
                  file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_check(config_path):
    """Validate the config, print the derived constants and run a tiny smoke trial."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    spec = cfg.spec
    print(f"config ok: N={cfg.n_antennas} K={cfg.n_users} T={cfg.block_len} "
          f"{spec.order}-QAM noise_var={cfg.noise_var:g} realizations={cfg.n_channels} "
          f"seed={cfg.seed}")
    print(f"schemes: {', '.join(cfg.schemes)}")
    print(f"{'eps':>8} {'alpha':>12} {'beta':>12} {'gamma':>12}")
    for eps in cfg.eps_grid:
        gc = gain_constants(cfg.noise_std, eps)
        gamma = sinr_target_from_sep(spec.avg_energy, eps)
        print(f"{eps:>8g} {float(gc.alpha):>12.6f} {float(gc.beta):>12.6f} {float(gamma):>12.6f}")
    smoke = SimConfig(n_antennas=2, n_users=2, block_len=2, qam_level=cfg.qam_level,
                      noise_var=cfg.noise_var, eps_grid=cfg.eps_grid, n_channels=1,
                      schemes=cfg.schemes, seed=cfg.seed, sep_trials=1000)
    results = run_experiment(smoke)
    bad = [r for r in results if r.degraded or not r.peak_energy >= r.avg_power * (1 - 1e-12)]
    for r in bad:
        print(f"smoke trial failed: eps={r.eps:g} {r.scheme}: {r.message or 'metric mismatch'}",
              file=sys.stderr)
    if bad:
        return EXIT_CONFIG
    print(f"smoke trial ok ({len(results)} cells, K=N=2, T=2)")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="slp", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment sweep")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--threads", type=int, default=None,
                     help="worker processes (default: $SLP_THREADS or 1)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    chk = sub.add_parser("check", help="validate a config and run a smoke trial")
    chk.add_argument("--config", required=True)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out, threads=args.threads, seed=args.seed)
    return cmd_check(args.config)


if __name__ == "__main__":
    sys.exit(main())
