"""Command line entry point: ``landau-chaos <experiment> --config FILE [--key value ...] [--assert]``.

Writes results.csv, manifest.json and plotdata/<series>.csv (x, y, yerr) to
the output directory.  Exit status: 0 on success, 1 on an invalid config, 2 when
--assert is given and a check fails.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import EXPERIMENT_NAMES, ExperimentConfig, ExperimentResult, RUNNERS, n_workers, validate

log = logging.getLogger("landau_chaos")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path, experiment: str, overrides) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config file must hold a JSON object")
    if raw.get("experiment", experiment) != experiment:
        log.warning("config names experiment %r; running %r", raw["experiment"], experiment)
    raw["experiment"] = experiment
    for key, value in overrides:
        target = raw
        parts = key.split(".")
        for p in parts[:-1]:
            target = target.setdefault(p, {})
        target[parts[-1]] = _parse_value(value)
    return raw


def _split_overrides(extra):
    out = []
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ValueError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            try:
                value = next(it)
            except StopIteration:
                raise ValueError(f"override {tok} needs a value") from None
        out.append((key, value))
    return out


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_outputs(result: ExperimentResult, cfg: ExperimentConfig, raw: dict, outdir: Path, runtime: float):
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(result.header)
        for row in result.rows:
            w.writerow([_fmt(x) for x in row])
    pdir = outdir / "plotdata"
    pdir.mkdir(exist_ok=True)
    files = ["results.csv", "manifest.json"]
    for name, (x, y, yerr) in result.plotdata.items():
        files.append(f"plotdata/{name}.csv")
        with open(pdir / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "yerr"])
            for a, b, c in zip(np.asarray(x), np.asarray(y), np.asarray(yerr)):
                w.writerow([_fmt(float(a)), _fmt(float(b)), _fmt(float(c))])
    cfg_text = json.dumps(raw, sort_keys=True)
    manifest = {
        "experiment": result.name,
        "config": cfg.to_dict(),
        "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
        "seeds": result.seeds,
        "streams": "realization r of an ensemble with seed s uses stream (s, r)",
        "outputs": files,
        "metric_config": cfg.metric_config.echo(),
        "checks": {k: {"passed": bool(ok), "detail": det} for k, (ok, det) in result.checks.items()},
        "passed": result.passed,
        "summary": _jsonable(result.summary),
        "runtime_s": runtime,
        "workers": n_workers(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def build_parser():
    p = argparse.ArgumentParser(prog="landau-chaos", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=EXPERIMENT_NAMES)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--output", help="output directory (overrides the config)")
    p.add_argument("--assert", dest="check", action="store_true", help="exit 2 if a check fails")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        raw = load_config(args.config, args.experiment, _split_overrides(extra))
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    diags = validate(raw)
    if diags:
        for dmsg in diags:
            print(f"config error: {dmsg}", file=sys.stderr)
        return 1
    cfg = ExperimentConfig.from_dict(raw)
    outdir = Path(args.output or cfg.output or f"out/{cfg.experiment}")
    t0 = time.perf_counter()
    result = RUNNERS[cfg.experiment](cfg)
    runtime = time.perf_counter() - t0
    write_outputs(result, cfg, raw, outdir, runtime)
    for name, (ok, detail) in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {cfg.experiment}/{name}: {detail}")
    print(f"wrote {outdir} ({runtime:.1f} s)")
    if args.check and not result.passed:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
