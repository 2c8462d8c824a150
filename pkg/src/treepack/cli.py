"""Command line: ``treepack {pack,pipeline,threshold,validate,selftest}``.

Seeds: one master seed (``--seed`` or ``TREEPACK_SEED``). Trial ``k`` uses
``SeedSequence([master, k])``; the 64-bit value it generates is printed in
the ``seed`` column and fully determines that trial.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import verify
from .probability import validate_params
from .spanning_pipeline import pack_spanning
from .sprinkle_engine import BACKENDS, pack
from .tree_core import InfeasibleTreeSpec, TreeSpec, degree_one_or_delta_feasible, gen_tree, parse_tree_spec

log = logging.getLogger("treepack")

PACK_COLUMNS = ["trial", "seed", "valid", "success", "max_label", "max_degree",
                "failure_round", "failure_kind"]


class ConfigError(Exception):
    pass


def trial_seed(master: int, trial: int) -> int:
    return int(np.random.SeedSequence([master, trial]).generate_state(1, np.uint64)[0])


def _resolve_seed(args) -> int:
    seed = args.seed
    if seed is None and os.environ.get("TREEPACK_SEED"):
        try:
            seed = int(os.environ["TREEPACK_SEED"])
        except ValueError:
            raise ConfigError("TREEPACK_SEED must be an integer")
    if seed is None:
        if args.strict:
            raise ConfigError("--strict needs --seed or TREEPACK_SEED")
        seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
        log.warning("no seed given; using %d", seed)
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    return seed


def _tree_specs(texts) -> list[TreeSpec]:
    specs = []
    for text in texts or []:
        for part in text.split(","):
            part = part.strip()
            if not part or part == "none":
                continue
            try:
                specs.append(parse_tree_spec(part))
            except ValueError as exc:
                raise ConfigError(f"bad tree spec {part!r}: {exc}")
    return specs


def _gen_trees(specs, count, rng):
    return [gen_tree(spec, rng) for spec in specs for _ in range(count)]


def _map(fn, jobs, n_jobs):
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))
    return [fn(j) for j in jobs]


def _write(rows, columns, args, extra_json=None):
    if args.format == "json":
        text = json.dumps(extra_json if extra_json is not None else rows, indent=2, default=_jsonable) + "\n"
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


# ---------------------------------------------------------------------------
# pack

def _pack_trial(job):
    k, seed, specs, count, n, p, backend = job
    rng = np.random.default_rng(seed)
    trees = _gen_trees(specs, count, rng)
    out = pack(trees, n, p, backend=backend, rng=rng)
    rep = verify.verify_outcome(trees, out)
    checked = rep.structural and out.label_check["holds"]
    valid = checked and out.completed
    row = {"trial": k, "seed": seed, "valid": int(valid),
           "success": int(valid and rep.label_bound is True and out.success),
           "max_label": repr(out.max_label), "max_degree": out.max_degree,
           "failure_round": "" if out.failure is None else out.failure["round"],
           "failure_kind": "" if out.failure is None else out.failure["kind"]}
    detail = out.to_dict()
    detail["verification"] = rep.to_dict()
    return row, detail, checked


def cmd_pack(args) -> int:
    seed = _resolve_seed(args)
    specs = _tree_specs(args.trees)
    if not 0 < args.p <= 1:
        raise ConfigError("--p must lie in (0, 1]")
    for spec in specs:
        if spec.m > args.n:
            raise ConfigError(f"tree spec with {spec.m} vertices does not fit n={args.n}")
    jobs = [(k, trial_seed(seed, k), specs, args.count, args.n, args.p, args.backend)
            for k in range(args.trials)]
    res = _map(_pack_trial, jobs, args.jobs)
    rows = [r for r, _, _ in res]
    _write(rows, PACK_COLUMNS, args, extra_json=[d for _, d, _ in res])
    if args.strict and not all(ok for _, _, ok in res):
        return 1
    return 0


# ---------------------------------------------------------------------------
# pipeline

PIPE_COLUMNS = ["trial", "seed", "valid", "success", "failure_kind", "failure_round",
                "deviations", "regime_violations"]


def _pipeline_trial(job):
    k, seed, specs, count, n, p, eps, backend = job
    rng = np.random.default_rng(seed)
    trees = _gen_trees(specs, count, rng)
    out = pack_spanning(trees, n, p, eps, rng, backend=backend)
    rep = verify.verify_packing(trees[:len(out.embeddings)], out.embeddings, n=n)
    valid = rep.structural and out.disjoint
    row = {"trial": k, "seed": seed, "valid": int(valid), "success": int(valid and out.success),
           "failure_kind": "" if out.failure is None else out.failure["kind"],
           "failure_round": "" if out.failure is None else out.failure.get("round", ""),
           "deviations": ";".join(sorted({d["kind"] for d in out.deviations})),
           "regime_violations": len(out.regime_violations)}
    detail = out.to_dict()
    detail["verification"] = rep.to_dict()
    return row, detail, valid


def cmd_pipeline(args) -> int:
    seed = _resolve_seed(args)
    specs = _tree_specs(args.trees)
    if not 0 < args.p < 1 or not 0 < args.eps < 1:
        raise ConfigError("--p and --eps must lie in (0, 1)")
    for spec in specs:
        if spec.m != args.n:
            raise ConfigError("pipeline trees must be spanning (size equal to --n)")
    jobs = [(k, trial_seed(seed, k), specs, args.count, args.n, args.p, args.eps, args.backend)
            for k in range(args.trials)]
    res = _map(_pipeline_trial, jobs, args.jobs)
    _write([r for r, _, _ in res], PIPE_COLUMNS, args, extra_json=[d for _, d, _ in res])
    if args.strict and not all(ok for _, _, ok in res):
        return 1
    return 0


# ---------------------------------------------------------------------------
# threshold experiment

THRESH_COLUMNS = ["omega", "delta", "trees", "trials", "degree_cap_failures", "embedding_failures",
                  "rate", "invalid", "skipped"]


def threshold_sizes(n: int, delta: int) -> list[int]:
    """Sizes in ``[n/2, 3n/4]`` admitting a tree with all degrees in ``{1, delta}``."""
    lo, hi = math.ceil(n / 2), math.floor(3 * n / 4)
    return [m for m in range(lo, hi + 1) if degree_one_or_delta_feasible(m, delta)]


def _threshold_trial(job):
    seed, n, p, delta, count, sizes, backend = job
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(count):
        m = int(sizes[rng.integers(len(sizes))])
        trees.append(gen_tree(TreeSpec("degree-one-or-delta", m, delta), rng))
    out = pack(trees, n, p, backend=backend, rng=rng)
    rep = verify.verify_outcome(trees, out)
    kind = None if out.failure is None else out.failure["kind"]
    return kind, rep.structural and out.label_check["holds"]


def cmd_threshold(args) -> int:
    seed = _resolve_seed(args)
    try:
        omegas = [float(x) for x in args.omega.split(",") if x.strip()]
    except ValueError:
        raise ConfigError("--omega must be a comma-separated list of numbers")
    if any(w <= 0 for w in omegas):
        raise ConfigError("omega values must be positive")
    n, p = args.n, args.p
    count = args.count if args.count is not None else math.floor(n * p / 4)
    rows = []
    all_valid = True
    for j, omega in enumerate(omegas):
        delta = math.ceil(n * p / omega)
        sizes = threshold_sizes(n, delta) if delta >= 2 else []
        if not sizes:
            log.warning("omega=%g: no degree-{1,%d} tree with size in [n/2, 3n/4]; skipped", omega, delta)
            rows.append({"omega": omega, "delta": delta, "trees": count, "trials": 0,
                         "degree_cap_failures": 0, "embedding_failures": 0, "rate": "",
                         "invalid": 0, "skipped": 1})
            continue
        jobs = [(trial_seed(seed, j * 1_000_003 + k), n, p, delta, count, sizes, args.backend)
                for k in range(args.trials)]
        res = _map(_threshold_trial, jobs, args.jobs)
        cap = sum(1 for kind, _ in res if kind == "degree_cap")
        emb = sum(1 for kind, _ in res if kind == "embedding")
        invalid = sum(1 for _, ok in res if not ok)
        all_valid &= invalid == 0
        rows.append({"omega": omega, "delta": delta, "trees": count, "trials": args.trials,
                     "degree_cap_failures": cap, "embedding_failures": emb,
                     "rate": repr(cap / args.trials) if args.trials else "", "invalid": invalid,
                     "skipped": 0})
    _write(rows, THRESH_COLUMNS, args)
    if args.strict and not all_valid:
        return 1
    return 0


# ---------------------------------------------------------------------------
# validate / selftest

def cmd_validate(args) -> int:
    try:
        rep = validate_params(args.n, args.p, args.alpha, args.eps, args.delta, args.count)
    except ValueError as exc:
        raise ConfigError(str(exc))
    text = json.dumps(rep.as_dict(), indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_selftest(args) -> int:
    seed = _resolve_seed(args) if (args.seed is not None or os.environ.get("TREEPACK_SEED")
                                   or args.strict) else verify.BatteryConfig.seed
    kw = {}
    if args.trials is not None:
        kw = {"moment_trials": args.trials, "backend_trials": args.trials,
              "uniformity_trials": args.trials}
    rep = verify.stat_battery(verify.BatteryConfig(seed=seed, **kw))
    if args.format == "json":
        text = rep.to_json(indent=2, default=_jsonable) + "\n"
    else:
        text = rep.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if rep.passed else 1


# ---------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treepack", description="Tree packing simulator for G(n,p).")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, trials=True):
        sp.add_argument("--seed", type=_nonneg_int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--strict", action="store_true")
        if trials:
            sp.add_argument("--trials", type=_nonneg_int, default=1)
            sp.add_argument("--jobs", type=_positive_int, default=1)
            sp.add_argument("--backend", choices=BACKENDS, default="lazy")

    sp = sub.add_parser("pack", help="run the clock packer and verify every outcome")
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--trees", action="append", default=None,
                    help="family:size[:degD][:legsK][:spineK], comma separated or repeated; 'none' for no trees")
    sp.add_argument("--count", type=_nonneg_int, default=1, help="trees per spec")
    common(sp)
    sp.set_defaults(func=cmd_pack)

    sp = sub.add_parser("pipeline", help="pack spanning trees with the two-stage pipeline")
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--trees", action="append", default=None)
    sp.add_argument("--count", type=_nonneg_int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("threshold", help="degree-cap failure rate of degree-{1,Delta} trees versus omega")
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--omega", default="2,4,8,16,32")
    sp.add_argument("--count", type=_nonneg_int, default=None, help="trees per trial (default floor(np/4))")
    common(sp)
    sp.set_defaults(func=cmd_threshold)

    sp = sub.add_parser("validate", help="evaluate the parameter assumptions")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--delta", type=int, default=None, help="maximum degree Delta")
    sp.add_argument("--count", type=int, default=None, help="number of trees N")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("selftest", help="statistical battery with pinned seeds")
    common(sp, trials=False)
    sp.add_argument("--trials", type=_nonneg_int, default=None, help="override every trial budget")
    sp.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InfeasibleTreeSpec) as exc:
        print(f"treepack: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
