"""Command-line interface.

Subcommands: simulate, rates, phase, fit, realdata, audit.  Exit status is 0 on
success; on failure a single JSON object ``{"error": ..., "type": ...}`` is
written to stderr and the status is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from dpfda.basis import SobolevParams
from dpfda.bench import experiments
from dpfda.bench.manifest import build_manifest, manifest_line
from dpfda.bench.rates import format_rate_table, phase_region, rate_table
from dpfda.bench.realdata import (
    REAL_EPS_GRID,
    RealDataConfig,
    _evaluate,
    ingest_csv,
    real_data_pipeline,
    reflect_extension,
)
from dpfda.estimators import GdConfig, dp_mean_cdp, dp_vcm_cdp
from dpfda.fednet import audit_transcripts, load_transcripts
from dpfda.privacy import PrivacyBudget
from dpfda.sobolev import EllipsoidSpec
from dpfda.synth import DEFAULT_C_ALPHA, VcmDataset
from dpfda.tuning import default_T

EXIT_USAGE = 2
EXIT_FAILURE = 1
EXIT_AUDIT_FAILED = 3


class CliError(Exception):
    pass


def _float_list(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_simulate(args) -> int:
    if args.preset:
        maker = experiments.setting1 if args.preset == "setting1" else experiments.setting2
        specs = [maker(args.target, replicates=args.replicates or 100, seed=args.seed or 0)]
    elif args.config:
        specs = experiments.load_specs(args.config)
        if args.replicates or args.seed is not None:
            specs = [
                dataclasses.replace(
                    s,
                    replicates=args.replicates or s.replicates,
                    seed=s.seed if args.seed is None else args.seed,
                )
                for s in specs
            ]
    else:
        raise CliError("simulate needs a config file or --preset")
    results = []
    for spec in specs:
        results.extend(experiments.run_monte_carlo(spec, workers=args.workers))
    experiments.write_results_csv(results, args.output, specs)
    print(f"wrote {len(results)} cells to {args.output}")
    return 0


def cmd_rates(args) -> int:
    rows = rate_table(args.n, args.m, args.eps, args.S, args.d, args.alpha)
    if args.json:
        print(json.dumps([r.__dict__ for r in rows], default=str))
    else:
        print(format_rate_table(rows))
    return 0


def cmd_phase(args) -> int:
    rep = phase_region(args.n, args.m, args.eps, args.alpha)
    if args.json:
        print(json.dumps(rep.__dict__))
    else:
        flag = " [boundary]" if rep.boundary else ""
        print(f"{rep.privacy} privacy, {rep.density}: {rep.rate}{flag}")
        for k, v in rep.distances.items():
            print(f"  log-distance {k}: {v:+.6g}")
    return 0


def cmd_fit(args) -> int:
    ing = ingest_csv(args.data, normalize=args.normalize)
    data = ing.data
    vcm = isinstance(data, VcmDataset)
    if args.extension and vcm:
        raise CliError("--extension is only supported for mean data")
    budget = PrivacyBudget.non_private(args.delta) if args.no_noise else PrivacyBudget(args.eps, args.delta)
    prepared = reflect_extension(data) if args.extension else data
    T = args.T or default_T(prepared.n, args.c_t)
    cfg = GdConfig(
        r=args.r, rho=args.rho, T=T, c_r_const=args.c_r, eta=args.eta, seed=args.seed,
        noise_enabled=not args.no_noise,
    )
    spec = EllipsoidSpec(SobolevParams(args.alpha, args.c_alpha), args.r)
    report = (dp_vcm_cdp if vcm else dp_mean_cdp)(prepared, cfg, budget, spec)
    grid = np.linspace(0.0, 1.0, args.grid)
    rcfg = RealDataConfig(r=args.r, extension=args.extension)
    blocks = report.blocks
    manifest = build_manifest("fit", {k: v for k, v in vars(args).items() if k != "func"}, args.seed)
    with open(args.output, "w", newline="") as fh:
        fh.write(manifest_line(manifest) + "\n")
        if not report.private:
            fh.write("# NON-PRIVATE MODE: noise disabled\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "block", "index", "value"])
        for k, block in enumerate(blocks):
            for ell, c in enumerate(block, 1):
                w.writerow(["coef", k, ell, repr(float(c))])
        for k, block in enumerate(blocks):
            vals = _evaluate(block, grid, rcfg)
            if ing.y_map is not None and k == 0 and not vcm:
                vals = ing.y_map.inverse(vals)
            xs = grid if ing.x_map is None else ing.x_map.inverse(grid)
            for x, v in zip(xs, vals):
                w.writerow(["curve", k, repr(float(x)), repr(float(v))])
    print(f"fitted n={data.n} r={args.r} T={T}; wrote {args.output}")
    return 0


def cmd_realdata(args) -> int:
    ing = ingest_csv(args.data, normalize=True)
    cfg = RealDataConfig(
        r=args.r, c_r_const=args.c_r, c_t=args.c_t, rho=args.rho, delta=args.delta,
        extension=not args.no_extension,
    )
    res = real_data_pipeline(ing.data, args.split, _float_list(args.eps), args.replicates, cfg, args.seed)
    manifest = build_manifest("realdata", {k: v for k, v in vars(args).items() if k != "func"}, args.seed)
    with open(args.output, "w", newline="") as fh:
        fh.write(manifest_line(manifest) + "\n")
        fh.write(f"# n_train={res.n_train} n_test={res.n_test}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["section", "eps", "x", "mean", "se_or_lo", "hi"])
        for e, mu, se in zip(res.eps, res.dist_mean, res.dist_se):
            w.writerow(["distance", repr(e), "", repr(mu), repr(se), ""])
        for e in res.eps:
            for x, mu, lo, hi in zip(res.grid, res.band_mean[e], res.band_lo[e], res.band_hi[e]):
                w.writerow(["band", repr(e), repr(float(x)), repr(float(mu)), repr(float(lo)), repr(float(hi))])
        for x, v in zip(res.grid, res.nonprivate_full):
            w.writerow(["nonprivate", "inf", repr(float(x)), repr(float(v)), "", ""])
    for e, mu, se in zip(res.eps, res.dist_mean, res.dist_se):
        print(f"eps={e:g}: distance {mu:.5g} (se {se:.3g})")
    return 0


def cmd_audit(args) -> int:
    transcripts = load_transcripts(args.log)
    if not transcripts:
        raise CliError(f"{args.log}: empty transcript log")
    n_servers = max(tr.server_id for tr in transcripts) + 1
    rounds = max(tr.round for tr in transcripts) + 1
    raw = None
    if args.raw:
        raw = ingest_csv(args.raw).data.all_y()
    # the provenance key is per process; exported logs cannot be re-verified offline
    report = audit_transcripts(transcripts, n_servers, rounds, raw_fingerprints=raw, check_provenance=False)
    print(report.summary())
    return 0 if report.passed else EXIT_AUDIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpfda", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a Monte Carlo sweep")
    s.add_argument("config", nargs="?", help="experiment config (INI)")
    s.add_argument("-o", "--output", default="results.csv")
    s.add_argument("--preset", choices=["setting1", "setting2"])
    s.add_argument("--target", default="mu1", choices=list(experiments.TARGETS))
    s.add_argument("--replicates", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_simulate)

    for name, fn, helptext in (("rates", cmd_rates, "evaluate minimax rate expressions"),
                               ("phase", cmd_phase, "classify a point of the phase diagram")):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("--n", type=float, required=True)
        q.add_argument("--m", type=float, required=True)
        q.add_argument("--eps", type=float, required=True)
        q.add_argument("--alpha", type=float, default=3.0)
        if name == "rates":
            q.add_argument("--S", type=int, default=1)
            q.add_argument("--d", type=int, default=1)
        q.add_argument("--json", action="store_true")
        q.set_defaults(func=fn)

    f = sub.add_parser("fit", help="fit a private mean (or VCM) to a longitudinal CSV")
    f.add_argument("data")
    f.add_argument("-o", "--output", default="fit.csv")
    f.add_argument("--eps", type=float, default=1.0)
    f.add_argument("--delta", type=float, default=1e-3)
    f.add_argument("--no-noise", action="store_true", help="disable the mechanism (NOT private)")
    f.add_argument("--r", type=int, default=3)
    f.add_argument("--T", type=int)
    f.add_argument("--rho", type=float, default=0.1)
    f.add_argument("--c-r", dest="c_r", type=float, default=0.75)
    f.add_argument("--c-t", dest="c_t", type=float, default=4.0)
    f.add_argument("--eta", type=float, default=0.05)
    f.add_argument("--alpha", type=float, default=3.0)
    f.add_argument("--c-alpha", dest="c_alpha", type=float, default=DEFAULT_C_ALPHA)
    f.add_argument("--normalize", action="store_true")
    f.add_argument("--extension", action="store_true", help="even-reflection Fourier extension")
    f.add_argument("--grid", type=int, default=101)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("realdata", help="train/test private-vs-non-private comparison")
    r.add_argument("data")
    r.add_argument("-o", "--output", default="realdata.csv")
    r.add_argument("--eps", default=",".join(str(e) for e in REAL_EPS_GRID))
    r.add_argument("--split", type=float, default=1 / 3)
    r.add_argument("--replicates", type=int, default=100)
    r.add_argument("--r", type=int, default=3)
    r.add_argument("--c-r", dest="c_r", type=float, default=0.008)
    r.add_argument("--c-t", dest="c_t", type=float, default=4.0)
    r.add_argument("--rho", type=float, default=0.01)
    r.add_argument("--delta", type=float, default=1e-3)
    r.add_argument("--no-extension", action="store_true")
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_realdata)

    a = sub.add_parser("audit", help="check an exported transcript log")
    a.add_argument("log")
    a.add_argument("--raw", help="CSV of raw data whose responses must not appear in payloads")
    a.set_defaults(func=cmd_audit)
    return p


def _error(exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": str(exc), "type": type(exc).__name__}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return _error(CliError("invalid command line"), EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, ArithmeticError, RuntimeError) as exc:
        return _error(exc, EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
