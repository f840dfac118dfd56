"""Command-line front end: ``codsketch {gen,sketch,bench,merge,verify}``.

Exit codes: 0 success, 1 verification failure or unreadable data, 2 usage error.
Every flag may also come from ``--config FILE`` (``key = value`` lines, keys
spelled like the flags without the leading dashes); flags on the command line
win.  ``COD_WORKERS`` caps the number of bench cells run concurrently.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ._validation import SketchError
from .baselines import METHODS, RANDOMIZED, make_state
from .evaluation import (
    DENSE_CAP,
    LowRankModelSpec,
    amm_error,
    frobenius_error,
    gen_low_rank,
    method_bound,
    theoretical_bounds,
)
from .sketch_core import cod_merge, cod_new
from .stream_io import (
    SketchSnapshot,
    StreamFormatError,
    StreamReader,
    import_csv,
    load_sketch,
    read_all,
    save_sketch,
    write_stream,
)
from .verify import CHECKS, run_battery

BENCH_COLUMNS = [
    "row", "method", "ell", "seed", "spectral_error", "frobenius_error",
    "thm_bound", "wall_time_s", "status",
]


class UsageError(Exception):
    pass


def _int_list(text):
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def _str_list(text):
    return [v for v in str(text).replace(" ", "").split(",") if v]


def read_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _add_spec_flags(p):
    p.add_argument("--n", type=int)
    p.add_argument("--mx", type=int)
    p.add_argument("--my", type=int)
    p.add_argument("--kx", type=int)
    p.add_argument("--ky", type=int)
    p.add_argument("--zeta-x", type=float)
    p.add_argument("--zeta-y", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shared-latent", action="store_true", default=False)


def build_parser():
    parser = argparse.ArgumentParser(prog="codsketch", description="Streaming approximate matrix multiplication sketches.")
    parser.add_argument("--config", help="key = value file mirroring the flags")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic low-rank stream (or import two CSV files)")
    _add_spec_flags(p)
    p.add_argument("--x-csv")
    p.add_argument("--y-csv")
    p.add_argument("--out")

    p = sub.add_parser("sketch", help="one pass over a stream file, writing a snapshot")
    p.add_argument("--in", dest="input")
    p.add_argument("--algo", choices=METHODS)
    p.add_argument("--ell", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--batch", type=int, default=1024)
    p.add_argument("--audit", action="store_true", default=False)
    p.add_argument("--force", action="store_true", default=False)

    p = sub.add_parser("bench", help="error/time sweep over methods and sketch lengths, written as CSV")
    p.add_argument("--in", dest="input")
    _add_spec_flags(p)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--ells", default="8,16,32")
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true", default=False)

    p = sub.add_parser("merge", help="merge co-occurring sketch snapshots")
    p.add_argument("snapshots", nargs="+")
    p.add_argument("--out")

    p = sub.add_parser("verify", help="run the property battery")
    p.add_argument("--check", action="append", choices=sorted(CHECKS))
    p.add_argument("--trials", type=int)
    p.add_argument("--json", dest="json_path")
    p.add_argument("--inject-fault", action="store_true", default=False, help=argparse.SUPPRESS)
    return parser, sub


def parse_args(argv):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        subparser = sub.choices[args.command]
        # keys may be spelled like the flag ("in", "zeta-x") or like its destination
        by_key = {}
        for action in subparser._actions:
            by_key[action.dest] = action
            for opt in action.option_strings:
                by_key[opt.lstrip("-").replace("-", "_")] = action
        unknown = sorted(set(cfg) - set(by_key))
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        defaults = {}
        for key, raw in cfg.items():
            action = by_key[key]
            try:
                if isinstance(action, argparse._StoreTrueAction):
                    value = raw.lower() in ("1", "true", "yes", "on")
                elif isinstance(action, argparse._AppendAction):
                    value = _str_list(raw)
                else:
                    value = raw if action.type is None else action.type(raw)
            except ValueError:
                raise UsageError(f"config key {key!r}: invalid value {raw!r}") from None
            if action.choices is not None and not isinstance(value, bool):
                values = value if isinstance(value, list) else [value]
                if any(v not in action.choices for v in values):
                    raise UsageError(f"config key {key!r}: invalid choice {raw!r}")
            defaults[action.dest] = value
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.command}: missing required {flags}")


def _spec_from(args):
    _require(args, "n", "mx", "my", "kx", "ky")
    return LowRankModelSpec(
        n=args.n, mx=args.mx, my=args.my, kx=args.kx, ky=args.ky,
        zeta_x=args.zeta_x, zeta_y=args.zeta_y, seed=args.seed,
        shared_latent=args.shared_latent,
    )


# ------------------------------------------------------------------ commands


def cmd_gen(args):
    _require(args, "out")
    if args.x_csv or args.y_csv:
        _require(args, "x_csv", "y_csv")
        import_csv(args.x_csv, args.y_csv, args.out)
        with StreamReader(args.out) as r:
            print(f"imported csv x={args.x_csv} y={args.y_csv} mx={r.mx} my={r.my} n={r.n} out={args.out}")
        return 0
    spec = _spec_from(args)
    X, Y = gen_low_rank(spec)
    write_stream(args.out, X, Y)
    echo = " ".join(f"{f.name}={getattr(spec, f.name)}" for f in dataclasses.fields(spec))
    print(f"gen {echo} out={args.out}")
    return 0


def cmd_sketch(args):
    _require(args, "input", "algo", "ell", "out")
    with StreamReader(args.input) as reader:
        mx, my = reader.mx, reader.my
        if args.audit and mx * my > DENSE_CAP and not args.force:
            raise UsageError(f"--audit needs the dense product ({mx}x{my}); pass --force to use the implicit path")
        state = make_state(args.algo, args.ell, mx, my, seed=args.seed)
        t0 = time.perf_counter()
        for Xb, Yb in reader.iter_blocks(args.batch):
            state.update_block(Xb, Yb)
        bx, by = state.result()
        wall = time.perf_counter() - t0
    if args.algo == "cod":
        snap = SketchSnapshot.from_sketch(state.sketch)
    else:
        snap = SketchSnapshot(
            method=args.algo, ell=state.ell, mx=mx, my=my, bx=bx, by=by,
            columns_seen=state.columns_seen, fill=state.ell,
            seed=args.seed if args.algo in RANDOMIZED else None,
        )
    save_sketch(args.out, snap)
    line = f"method={args.algo} ell={state.ell} n={state.columns_seen} wall_time_s={wall:.6f}"
    status = 0
    if args.audit:
        X, Y = read_all(args.input)
        err = amm_error(X, Y, bx, by)
        bound = method_bound(args.algo, theoretical_bounds(X, Y, state.ell))
        line += f" spectral_error={err:.10g}"
        if bound is not None:
            ok = err <= bound * (1 + 1e-9)
            line += f" bound={bound:.10g} {'ok' if ok else 'VIOLATED'}"
            status = 0 if ok else 1
    print(line)
    return status


def _bench_cell(X, Y, method, ell, seed, bounds):
    row = {"row": "run", "method": method, "ell": ell, "seed": "" if seed is None else seed}
    try:
        state = make_state(method, ell, X.shape[0], Y.shape[0], seed=seed or 0)
        t0 = time.perf_counter()
        for s in range(0, X.shape[1], 1024):
            state.update_block(X[:, s : s + 1024], Y[:, s : s + 1024])
        bx, by = state.result()
        wall = time.perf_counter() - t0
        bound = method_bound(method, dataclasses.replace(bounds, ell=ell))
        row.update(
            spectral_error=amm_error(X, Y, bx, by),
            frobenius_error=frobenius_error(X, Y, bx, by),
            thm_bound="" if bound is None else bound,
            wall_time_s=wall,
            status="ok",
        )
    except Exception as exc:  # recorded in-row; the sweep continues
        row.update(spectral_error="", frobenius_error="", thm_bound="", wall_time_s="",
                   status=f"error: {exc}".replace("\n", " "))
    return row


def bench_rows(X, Y, methods, ells, repeats, seed_base, workers=1):
    """All bench rows in plan order: per (method, ell) the runs, then mean/std for randomized methods."""
    bounds = theoretical_bounds(X, Y, 2)
    plan = []
    for method in methods:
        for ell in ells:
            seeds = [seed_base + r for r in range(repeats)] if method in RANDOMIZED else [None]
            plan.append((method, ell, seeds))
    cells = [(m, e, s) for m, e, seeds in plan for s in seeds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _bench_cell(X, Y, *c, bounds), cells))
    else:
        results = [_bench_cell(X, Y, *c, bounds) for c in cells]
    rows, it = [], iter(results)
    for method, ell, seeds in plan:
        group = [next(it) for _ in seeds]
        rows.extend(group)
        if method in RANDOMIZED:
            good = [r for r in group if r["status"] == "ok"]
            for stat, fn in (("mean", np.mean), ("std", lambda v: np.std(v, ddof=1) if len(v) > 1 else 0.0)):
                summary = {"row": stat, "method": method, "ell": ell, "seed": "", "thm_bound": "",
                           "status": f"ok ({len(good)}/{len(group)} runs)"}
                for col in ("spectral_error", "frobenius_error", "wall_time_s"):
                    summary[col] = float(fn([r[col] for r in good])) if good else ""
                rows.append(summary)
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return v


def cmd_bench(args):
    _require(args, "out")
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    methods = _str_list(args.methods)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods: {', '.join(bad)}")
    ells = _int_list(args.ells)
    if args.input:
        X, Y = read_all(args.input)
    else:
        X, Y = gen_low_rank(_spec_from(args))
    if X.shape[0] * Y.shape[0] > DENSE_CAP and not args.force:
        raise UsageError(f"dense oracle would hold {X.shape[0]}x{Y.shape[0]} entries; pass --force")
    workers = max(1, int(os.environ.get("COD_WORKERS", "1")))
    rows = bench_rows(X, Y, methods, ells, args.repeats, args.seed_base, workers)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in BENCH_COLUMNS})
    failed = sum(r["status"].startswith("error") for r in rows)
    print(f"bench rows={len(rows)} failed_cells={failed} out={args.out}")
    return 0


def cmd_merge(args):
    _require(args, "out")
    merged = None
    for path in args.snapshots:
        sk = load_sketch(path).to_sketch()
        merged = sk if merged is None else cod_merge(merged, sk)
    if len(args.snapshots) == 1:
        # a lone snapshot is re-sketched so the output always comes from a merge pass
        merged = cod_merge(merged, cod_new(merged.config))
    save_sketch(args.out, merged)
    print(
        f"merge inputs={len(args.snapshots)} ell={merged.ell} n={merged.columns_seen} "
        f"delta_sum={merged.delta_sum():.10g} bound={merged.theorem_bound():.10g} out={args.out}",
    )
    return 0


def cmd_verify(args):
    results = run_battery(args.check, args.trials, fault=args.inject_fault)
    for r in results:
        print(r.line())
    passed = all(r.passed for r in results)
    print(f"verify: {'all checks passed' if passed else 'FAILURES detected'}")
    if args.json_path:
        with open(args.json_path, "w") as fh:
            json.dump({"passed": passed, "checks": [r.as_dict() for r in results]}, fh, indent=2, default=float)
    return 0 if passed else 1


COMMANDS = {"gen": cmd_gen, "sketch": cmd_sketch, "bench": cmd_bench, "merge": cmd_merge, "verify": cmd_verify}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse usage errors
        return exc.code if isinstance(exc.code, int) else 2
    except (UsageError, SketchError) as exc:
        print(f"codsketch: error: {exc}", file=sys.stderr)
        return 2
    except (StreamFormatError, OSError) as exc:
        print(f"codsketch: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
