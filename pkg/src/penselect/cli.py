"""``penselect`` command line."""

import argparse
import json
import math
import os
import sys

from . import bounds, harness
from .errors import ConfigError, PenselectError

SUBCOMMANDS = {
    "verify-noise": "verify_noise",
    "deviation-chi": "deviation_chi",
    "deviation-sup": "deviation_sup",
    "oracle": "oracle",
    "select": "select_once",
}


def build_parser():
    p = argparse.ArgumentParser(prog="penselect", description="Penalized model selection experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment JSON")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--out", help="report path (CSV written alongside)")
        sp.add_argument("--threads", type=int, help="worker threads (default: $PENSELECT_THREADS)")
    sc = sub.add_parser("constants")
    sc.add_argument("--dmax", type=int, default=20)
    return p


def print_constants(dmax=20, out=None):
    out = out or sys.stdout
    print(f"kappa = {bounds.KAPPA:g}", file=out)
    print("C(K) = K(K^2+K-1)/(K-1)^3", file=out)
    for K in (1.1, 1.25, 1.5, 2, 3, 5, 10):
        print(f"  C({K:g}) = {bounds.oracle_constant(K):.10g}", file=out)
    print("chaining H        v=1,b=0   /sqrt(D)         v=0,b=1         /D", file=out)
    for D in range(1, dmax + 1):
        hv = bounds.chaining_H(D, v=1.0, b=0.0)
        hb = bounds.chaining_H(D, v=0.0, b=1.0)
        print(f"  D={D:3d}  {hv:14.6f} {hv / math.sqrt(D):10.6f}  {hb:14.6f} {hb / D:10.6f}", file=out)


def _summarize(report, out=None):
    out = out or sys.stdout
    for r in report["records"]:
        flag = "PASS" if r["pass"] else "FAIL"
        loc = " ".join(f"{k}={r[k]:g}" for k in ("x", "u") if r[k] is not None)
        print(f"{flag} {r['experiment']} {loc} empirical={r['empirical']:.6g} bound={r['bound']:.6g} "
              f"stderr={r['stderr']:.3g}", file=out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "constants":
        print_constants(args.dmax)
        return 0
    kind = SUBCOMMANDS[args.command]
    try:
        cfg = harness.ExperimentConfig.load(args.config)
        if cfg.kind != kind:
            raise ConfigError(f"{args.command} expects kind {kind!r}, config has {cfg.kind!r}")
        cfg = cfg.with_overrides(seed=args.seed, trials=args.trials)
        report = harness.run(cfg, workers=args.threads)
    except ConfigError as e:
        print(f"penselect: config error: {e}", file=sys.stderr)
        return 2
    except PenselectError as e:
        print(f"penselect: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    out = args.out or f"{kind}_report.json"
    if kind == "select_once":
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        with open(out, "w") as fh:
            json.dump(report["summary"]["selection"], fh, indent=2)
            fh.write("\n")
        sel = report["summary"]["selection"]
        print(f"chosen_id={sel['chosen_id']} crit={sel['crit']:.6g} ties={sel['ties']}")
        print(f"wrote {out}")
        return 0
    js, cs = harness.write_report(report, out)
    _summarize(report)
    print(f"wrote {js} and {cs}")
    return 0 if report["all_pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
