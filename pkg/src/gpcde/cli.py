"""Command-line front end.

Every command writes its outputs into ``--out`` (default
``./out/<command>-<timestamp>/``); CSV files start with a ``# config=`` line
holding the resolved configuration, and a JSON sidecar repeats it together
with results and wall time.  A JSON file given via ``--config`` supplies
defaults that explicit flags override.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from datetime import datetime
from pathlib import Path

import numpy as np

from . import construction as cons
from .construction import ConstructionError, EnsembleParams
from .density_evolution import (
    DeConfig,
    ErasureProfile,
    ThresholdError,
    de_run,
    de_threshold,
    reduce_symmetric,
)
from .graph_sim import GraphError, build_graph, monte_carlo
from .potential import (
    PotentialThresholdError,
    min_Vs,
    potential_threshold,
    potential_threshold_stationary,
    potential_Vs,
    semi_regular,
    verify_regular_optimal,
)
from .verification import SUITES

FAMILY_CHOICES = ["pc", "staircase", "braided", "ensemble-emulating", "extended-braided", "ensemble"]


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class Output:
    def __init__(self, command: str, out: str | None, config: dict):
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        self.dir = Path(out) if out else Path("out") / f"{command}-{stamp}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.t0 = time.time()

    def csv(self, name: str, header, rows):
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            fh.write("# config=" + json.dumps(self.config, sort_keys=True) + "\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for row in rows:
                wr.writerow([fmt(v) for v in row])
        return path

    def json(self, name: str, payload: dict):
        doc = {"config": self.config, **payload, "wall_time_s": time.time() - self.t0}
        path = self.dir / name
        path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
        return path

    def text(self, name: str, text: str):
        path = self.dir / name
        path.write_text(text)
        return path


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    return str(o)


def parse_profile(args) -> ErasureProfile:
    if getattr(args, "tau", None):
        tau = {}
        for part in str(args.tau).split(","):
            t, p = part.split(":")
            tau[int(t)] = float(p)
        return ErasureProfile(tau)
    if getattr(args, "t_bar", None) is not None:
        return semi_regular(float(args.t_bar))
    if getattr(args, "t", None) is None:
        raise ValueError("give --t, --tau or --t-bar")
    return ErasureProfile.regular(int(args.t))


def build_spec(args):
    fam = args.family
    if fam == "pc":
        return cons.make_pc()
    if fam == "staircase":
        return cons.make_staircase(_need(args, "L"))
    if fam == "braided":
        return cons.make_braided(_need(args, "L"))
    if fam == "ensemble-emulating":
        return cons.make_ensemble_emulating(EnsembleParams(_need(args, "L"), _need(args, "w")),
                                            expansion=args.expansion)
    if fam == "extended-braided":
        return cons.make_extended_braided(_need(args, "L"), _need(args, "w"))
    raise ValueError(f"family {fam!r} has no connectivity matrix")


def build_matrix(args):
    """Averaging matrix for DE; ``ensemble`` gives ``A^T A``; ``--reduce`` collapses symmetry."""
    if args.family == "ensemble":
        return cons.ensemble_B(EnsembleParams(_need(args, "L"), _need(args, "w")))
    spec = build_spec(args)
    if getattr(args, "reduce", False):
        return reduce_symmetric(spec).matrix
    return cons.averaging_matrix(spec)


def _need(args, name):
    v = getattr(args, name, None)
    if v is None:
        raise ValueError(f"--{name} is required for family {args.family}")
    return v


def _config(args) -> dict:
    skip = {"func", "config", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_construct(args):
    spec = build_spec(args)
    diag = cons.validate(spec)
    out = Output("construct", args.out, _config(args))
    out.text("eta.json", cons.to_json(spec) + "\n")
    out.text("eta.csv", cons.to_csv(spec))
    out.json("diagnostics.json", {"diagnostics": diag.as_dict()})
    ones = int(np.triu(spec.eta).sum())
    print(f"family={spec.family} size={spec.size} gamma={spec.gamma} ones={ones} valid={diag.ok}")
    print(f"wrote {out.dir}")
    return 0


def cmd_de(args):
    B = build_matrix(args)
    prof = parse_profile(args)
    cfg = DeConfig(args.c, args.max_iters, args.zero_tol, args.stall_tol, True, args.record_every)
    tr = de_run(B, prof, cfg)
    out = Output("de", args.out, _config(args))
    rows = ((ell, tr.failure_fraction[ell - 1], x.min(), x.max(), x.mean()) for ell, x in zip(tr.iters, tr.x))
    out.csv("trace.csv", ["iter", "failure_fraction", "x_min", "x_max", "x_mean"], rows)
    if args.dump_vectors:
        out.csv("vectors.csv", ["iter"] + [f"x{i}" for i in range(B.shape[0])],
                ([ell, *x] for ell, x in zip(tr.iters, tr.x)))
    out.json("trace.json", {"verdict": tr.verdict.value, "iterations": tr.n_iter,
                            "final_failure_fraction": float(tr.failure_fraction[-1]),
                            "monotone": tr.monotone})
    print(f"verdict={tr.verdict.value} iterations={tr.n_iter} "
          f"failure_fraction={fmt(tr.failure_fraction[-1])}")
    return 0


def cmd_threshold(args):
    B = build_matrix(args)
    prof = parse_profile(args)
    bracket = (args.lo, args.hi) if args.lo is not None and args.hi is not None else None
    res = de_threshold(B, prof, bracket, args.bisect_tol,
                       config=DeConfig(0.0, args.max_iters, args.zero_tol, args.stall_tol))
    out = Output("threshold", args.out, _config(args))
    out.json("threshold.json", res.as_dict())
    print(f"c_bar={fmt(res.c)}")
    return 0


def cmd_potential(args):
    out = Output("potential", args.out, _config(args))
    if args.table:
        lo, hi = (int(v) for v in args.table.split("-"))
        rows = []
        for t in range(lo, hi + 1):
            cp = potential_threshold(t, args.bisect_tol).c
            cs = potential_threshold_stationary(t) if t >= 2 else float("nan")
            rows.append((t, cp, cs, 2 * t - 2))
            print(f"t={t} c_p={fmt(cp)} (stationary {fmt(cs)}) 2t-2={2 * t - 2}")
        out.csv("threshold_table.csv", ["t", "c_p", "c_p_stationary", "two_t_minus_2"], rows)
        return 0
    prof = parse_profile(args)
    if args.c is not None:
        ev = min_Vs(args.c, prof, keep_samples=True)
        xs = np.linspace(0, 1, args.points)
        out.csv("potential.csv", ["x", "V_s"], zip(xs, potential_Vs(xs, args.c, prof)))
        print(f"c={fmt(args.c)} x_star={fmt(ev.x_star)} v_min={fmt(ev.v_min)}")
    if args.c_sweep:
        a, b, k = args.c_sweep
        cs = np.linspace(float(a), float(b), int(k))
        out.csv("vmin_sweep.csv", ["c", "v_min"], ((c, min_Vs(c, prof).v_min) for c in cs))
    res = potential_threshold(prof, args.bisect_tol)
    out.json("potential_threshold.json", {"profile": prof.to_dict(), "c_p": res.c, "lo": res.lo, "hi": res.hi})
    print(f"c_p={fmt(res.c)}")
    return 0


def cmd_optimize_tau(args):
    rep = verify_regular_optimal(args.t_bar, args.samples, args.seed, t_max=args.t_max, tol=args.tol)
    out = Output("optimize-tau", args.out, _config(args))
    out.csv("profiles.csv", ["index", "tau", "c_p"],
            ((s["index"], json.dumps(s["tau"]), s["c_p"]) for s in rep.samples))
    best = max(rep.samples, key=lambda s: s["c_p"]) if rep.samples else None
    out.json("optimize_tau.json", {"semi_regular": semi_regular(args.t_bar).to_dict(),
                                   "c_p_semi_regular": rep.c_regular, "best_sampled": best,
                                   "violations": rep.violations, "ok": rep.ok})
    print(f"c_p(semi-regular {args.t_bar})={fmt(rep.c_regular)} "
          f"best sampled={fmt(best['c_p']) if best else 'n/a'} ok={rep.ok}")
    return 0 if rep.ok else 1


def cmd_simulate(args):
    spec = build_spec(args)
    prof = parse_profile(args)
    rep = monte_carlo(spec, args.n, prof, args.c, args.trials, args.seed, args.max_iters,
                      jobs=args.jobs)
    cfg = _config(args)
    out = Output("simulate", args.out, cfg)
    out.csv("sim.csv", ["iter", "W_mean", "W_stderr", "DE_pred"],
            ((ell + 1, rep.W_mean[ell], rep.W_stderr[ell], rep.de_pred[ell]) for ell in range(len(rep.W_mean))))
    out.json("sim.json", {"seed": rep.seed, "sim_config": rep.config, "sim_wall_time_s": rep.wall_time,
                          "within_3_stderr": rep.within(3.0).tolist()})
    if args.export_graph:
        out.text("graph.txt", build_graph(spec, args.n).export_text())
    for ell in range(len(rep.W_mean)):
        print(f"iter {ell + 1}: W={fmt(rep.W_mean[ell])} +- {fmt(rep.W_stderr[ell])} DE={fmt(rep.de_pred[ell])}")
    return 0


def cmd_verify(args):
    names = list(SUITES) if args.suite == "all" else [args.suite]
    checks = []
    for name in names:
        checks.extend(SUITES[name]())
    for ch in checks:
        print(ch.line())
    out = Output("verify", args.out, _config(args))
    out.json("verify.json", {"checks": [ch.__dict__ for ch in checks]})
    ok = all(ch.ok for ch in checks)
    print("ALL PASS" if ok else "FAILURES")
    return 0 if ok else 1


def _family_args(p, families=FAMILY_CHOICES):
    p.add_argument("--family", required=True, choices=families)
    p.add_argument("--L", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--expansion", default="circulant", choices=["circulant", "hankel"])


def _profile_args(p):
    p.add_argument("--t", type=int)
    p.add_argument("--tau", help="mixture as 't:mass,...', e.g. 3:0.5,4:0.5")
    p.add_argument("--t-bar", type=float, help="semi-regular profile with this mean")


def _de_args(p):
    p.add_argument("--max-iters", type=int, default=100_000)
    p.add_argument("--zero-tol", type=float, default=1e-9)
    p.add_argument("--stall-tol", type=float, default=1e-13)
    p.add_argument("--reduce", action="store_true", help="run on the symmetry-reduced matrix")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpcde", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, allow_abbrev=False)
        p.add_argument("--config", help="JSON file with default values for this command")
        p.add_argument("--out", help="output directory")
        p.set_defaults(func=func)
        return p

    p = add("construct", cmd_construct, "build and serialize a connectivity matrix")
    _family_args(p, FAMILY_CHOICES[:-1])

    p = add("de", cmd_de, "run density evolution")
    _family_args(p)
    _profile_args(p)
    _de_args(p)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--dump-vectors", action="store_true")

    p = add("threshold", cmd_threshold, "decoding threshold by bisection")
    _family_args(p)
    _profile_args(p)
    _de_args(p)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--bisect-tol", type=float, default=1e-7)

    p = add("potential", cmd_potential, "potential function and potential threshold")
    _profile_args(p)
    p.add_argument("--c", type=float)
    p.add_argument("--points", type=int, default=1001)
    p.add_argument("--c-sweep", nargs=3, metavar=("LO", "HI", "N"))
    p.add_argument("--table", help="threshold table over a t range, e.g. 4-16")
    p.add_argument("--bisect-tol", type=float, default=1e-6)

    p = add("optimize-tau", cmd_optimize_tau, "compare random capability profiles with the semi-regular one")
    p.add_argument("--t-bar", type=float, required=True)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--t-max", type=int)
    p.add_argument("--tol", type=float, default=1e-4)

    p = add("simulate", cmd_simulate, "Monte Carlo peeling on a finite graph")
    _family_args(p, FAMILY_CHOICES[:-1])
    _profile_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--export-graph", action="store_true")

    p = add("verify", cmd_verify, "run verification suites")
    p.add_argument("--suite", default="all", choices=["all", *SUITES])
    return ap


def _apply_config(ap, argv):
    """Parse ``argv`` with defaults from ``--config`` so explicit flags still win."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if not a.startswith("-")), None)
    subs = ap._subparsers._group_actions[0].choices  # noqa: SLF001
    if known.config and command in subs:
        cfg = json.loads(Path(known.config).read_text())
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        sub = subs[command]
        dests = {a.dest for a in sub._actions}  # noqa: SLF001
        unknown = set(cfg) - dests
        if unknown:
            ap.error(f"unknown keys in --config: {sorted(unknown)}")
        for a in sub._actions:  # noqa: SLF001
            if a.dest in cfg:
                a.required = False
        sub.set_defaults(**cfg)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    ap = make_parser()
    args = _apply_config(ap, argv)
    try:
        return args.func(args)
    except (ConstructionError, GraphError, ValueError) as exc:
        print(f"gpcde {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ThresholdError, PotentialThresholdError) as exc:
        print(f"gpcde {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
