"""Command line front end: ``acsplit {run,rates,probe,selftest}``.

Exit codes: 0 success, 1 experiment failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config, preset_names, with_overrides
from .error_lab import exp_integrability_probe, moment_probe, rate_experiment
from .errors import ConfigurationError, ExperimentError
from .integrators import run_trajectory
from .noise import RngStream, make_tape
from .selftest import run_selftest

log = logging.getLogger("acsplit")


def _clean(obj):
    """Make floats JSON-safe (inf/nan become strings)."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _write_json(path, obj):
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _load(args):
    cfg = load_config(args.config)
    return with_overrides(cfg, seed=args.seed, threads=args.threads,
                          bit_repro=True if args.bit_repro else None)


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_rates(args):
    cfg = _load(args)
    if len(cfg.dts) < 3:
        raise ConfigurationError("rates.dts needs at least 3 step sizes", key="rates.dts")
    report = rate_experiment(cfg.scheme, cfg.dts, cfg.dt_ref, cfg.error, seed=cfg.seed,
                             threads=cfg.effective_threads)
    out = _outdir(args)
    report.to_json(out / f"{cfg.name}.json")
    report.to_csv(out / f"{cfg.name}.csv")
    report.to_long_csv(out / f"{cfg.name}_long.csv")
    for dt, e, s in zip(report.dts, report.errors, report.stderr):
        print(f"dt={dt:.6g}  error={e:.6e}  stderr={s:.2e}")
    print(f"slope={report.slope:.4f}  95% CI=[{report.ci[0]:.4f}, {report.ci[1]:.4f}]")
    return 0


def run_probes(cfg):
    """All probes of ``cfg`` at every probe step size; returns a JSON-ready dict."""
    dts = cfg.probe_dts or (cfg.scheme.dt,)
    threads = cfg.effective_threads
    rows = []
    for dt in dts:
        sc = replace(cfg.scheme, dt=dt)
        row = {"dt": dt, "moments": {}, "exp": {}}
        for f in cfg.functionals:
            row["moments"][f] = moment_probe(sc, f, cfg.probe_samples, seed=cfg.seed,
                                             threads=threads).to_dict()
            row["moments"][f].pop("mean_curve")
        for target in cfg.targets:
            row["exp"][target] = exp_integrability_probe(
                sc, cfg.c, cfg.probe_samples, seed=cfg.seed, target=target,
                substeps=cfg.substeps, threads=threads).to_dict()
        rows.append(row)
    s = cfg.scheme
    meta = {"name": cfg.name, "noise": str(s.noise), "K": s.K, "T": s.T, "x0": s.x0,
            "scheme": s.scheme, "samples": cfg.probe_samples, "seed": cfg.seed, "c": cfg.c}
    return {"meta": meta, "results": rows}


def cmd_probe(args):
    cfg = _load(args)
    if not cfg.functionals and not cfg.targets:
        raise ConfigurationError("probe needs probe.functionals or probe.targets", key="probe.functionals")
    report = run_probes(cfg)
    _write_json(_outdir(args) / f"{cfg.name}_probe.json", report)
    for row in report["results"]:
        for f, r in row["moments"].items():
            print(f"dt={row['dt']:.6g}  E[{f}]={r['estimate']:.6g} +- {r['stderr']:.2g}"
                  + (f"  sup_n E={r['sup_of_mean']:.6g}" if r["sup_of_mean"] is not None else ""))
        for t, r in row["exp"].items():
            print(f"dt={row['dt']:.6g}  exp[{t}] estimate={r['estimate']:.6g}  "
                  f"max_exponent={r['max_exponent']:.4g}  tail_count={r['tail_count']}")
    return 0


def cmd_run(args):
    cfg = _load(args)
    sc = cfg.scheme
    tape = make_tape(sc.noise, sc.K, sc.n_steps, sc.dt, RngStream(cfg.seed, 0))
    rec = run_trajectory(sc, tape, record_every=cfg.record_every)
    path = _outdir(args) / f"{cfg.name}_trajectory.csv"
    rec.to_csv(path)
    if rec.diverged:
        print(f"diverged at step {rec.diverged_at} (t={rec.diverged_at * sc.dt:.6g})")
    print(f"wrote {len(rec.times)} records to {path}")
    return 0


def cmd_selftest(args):
    overrides = {}
    for item in args.corrupt or ():
        k, v = item.split("=", 1)
        overrides[k] = float(v)
    results = run_selftest(overrides)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    failed = [n for n, ok, _ in results if not ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="acsplit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    commands = {"run": cmd_run, "rates": cmd_rates, "probe": cmd_probe}
    for name, fn in commands.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True,
                        help=f"config file or preset ({', '.join(preset_names())})")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default="results")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--bit-repro", action="store_true")
        sp.set_defaults(func=fn)
    st = sub.add_parser("selftest")
    st.add_argument("--corrupt", action="append", metavar="NAME=VALUE", help=argparse.SUPPRESS)
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        where = f" [{exc.key}]" if exc.key else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
