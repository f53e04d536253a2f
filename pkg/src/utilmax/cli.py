"""Command-line interface: ``utilmax <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import List, Optional

import numpy as np

from .config import Config, default_config
from .engine import SolveResult, _jsonable, expected_utility, solve, verify_optimality, verify_uniqueness
from .errors import BoundaryOptimum, MalformedInput, UtilMaxError
from .geometry import validate_tree
from .measure import Claim, martingale_measure, price_claim
from .tree import binomial_tree, load_tree
from .utility import Example73, utility_from_dict


def _read_json(arg: str):
    """JSON given inline or as a path."""
    text = arg
    if not arg.lstrip().startswith(("{", "[")):
        with open(arg, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON in {arg!r}: {exc}") from None


def _config(args) -> Config:
    kw = {}
    if getattr(args, "config", None):
        kw.update(_read_json(args.config))
    for name in ("n_grid", "phimax", "seed", "threads", "require_ae", "refine_rounds",
                 "wealth_halfwidth", "value_tol", "fo_tol", "price_tol"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    if getattr(args, "force", False):
        kw["force"] = True
    try:
        return default_config(**kw)
    except (TypeError, ValueError) as exc:
        raise MalformedInput(f"bad configuration: {exc}") from None


def _cone(args):
    if getattr(args, "cone", None) is None:
        return None
    rays = np.asarray(_read_json(args.cone), dtype=float)
    return rays.reshape(len(rays), -1)


def _emit(obj, args) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load(args):
    cfg = _config(args)
    tree = load_tree(args.tree, cfg.max_nodes)
    return tree, cfg


def _dump_csv(result: SolveResult, folder: str) -> None:
    os.makedirs(folder, exist_ok=True)
    with open(os.path.join(folder, "strategy.csv"), "w", encoding="utf-8") as fh:
        fh.write(result.strategy_csv())
    for n, f in sorted(result.value_fns.items()):
        with open(os.path.join(folder, f"value_node{n}.csv"), "w", encoding="utf-8") as fh:
            fh.write(f.to_csv())


# subcommands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    tree, cfg = _load(args)
    verdict = validate_tree(tree, _cone(args), cfg.rank_tol, cfg.sphere_tol)
    _emit(verdict.to_dict(), args)
    return 0 if verdict.na else 2


def cmd_solve(args) -> int:
    tree, cfg = _load(args)
    u = utility_from_dict(_read_json(args.utility))
    result = solve(tree, u, args.capital, cfg, cone=_cone(args))
    if cfg.require_ae == "strict" and result.boundary:
        raise BoundaryOptimum("optimum touches the position bound under the strict elasticity policy")
    if args.csv:
        _dump_csv(result, args.csv)
    _emit(result.to_dict(), args)
    return 0


def cmd_measure(args) -> int:
    tree, cfg = _load(args)
    u = utility_from_dict(_read_json(args.utility))
    result = solve(tree, u, args.capital, cfg, cone=_cone(args), grid=False)
    rep = martingale_measure(result, tree, u)
    out = rep.to_dict()
    out["config"] = cfg.to_dict()
    _emit(out, args)
    return 0


def cmd_price(args) -> int:
    tree, cfg = _load(args)
    u = utility_from_dict(_read_json(args.utility))
    claim = Claim.from_dict(_read_json(args.claim))
    res = price_claim(tree, u, args.capital, claim, cfg, cone=_cone(args))
    out = res.to_dict()
    out["config"] = cfg.to_dict()
    _emit(out, args)
    return 0


def cmd_verify(args) -> int:
    tree, cfg = _load(args)
    u = utility_from_dict(_read_json(args.utility))
    result = solve(tree, u, args.capital, cfg, cone=_cone(args), grid=False)
    out = {"root_value": result.root_value,
           "optimality": verify_optimality(result, tree, u, trials=args.trials,
                                           lattice_step=args.lattice_step),
           "uniqueness": verify_uniqueness(result, tree, u, restarts=args.restarts),
           "config": cfg.to_dict()}
    _emit(out, args)
    return 0 if out["optimality"]["passed"] else 3


def example73_table(N: int, nmax: int) -> List[dict]:
    """EU(n S_1) for n = 1..nmax on the 3/4-1/4 coin market against the partial sums."""
    tree = binomial_tree()
    u = Example73(N)
    rows = []
    for n in range(1, nmax + 1):
        eu = expected_utility(tree, u, 0.0, {tree.root: [float(n)]})
        ps = math.fsum(1.0 / (j * j) for j in range(1, n + 1))
        rows.append({"n": n, "expected_utility": eu, "partial_sum": ps, "error": abs(eu - ps)})
    return rows


def cmd_demo(args) -> int:
    if args.name != "example73":
        raise MalformedInput(f"unknown demo {args.name!r}")
    N = args.N if args.N is not None else int(args.phimax) + 1
    if N < 2:
        raise MalformedInput("N must be at least 2")
    rows = example73_table(N, args.nmax)
    cfg = default_config(phimax=args.phimax, n_grid=args.n_grid or 513)
    tree = binomial_tree()
    result = solve(tree, Example73(N), 0.0, cfg)
    limit = math.pi ** 2 / 6
    summary = {
        "N": N,
        "phimax": args.phimax,
        "max_error": max(r["error"] for r in rows),
        "increasing": all(b["expected_utility"] > a["expected_utility"] for a, b in zip(rows, rows[1:])),
        "root_value": result.root_value,
        "position": float(result.strategy[tree.root][0]),
        "boundary": result.boundary,
        "gap_to_limit": limit - result.root_value,
        "limit": limit,
        "config": cfg.to_dict(),
    }
    if args.format == "json":
        _emit({"table": rows, "summary": summary}, args)
    else:
        print(f"{'n':>4}  {'EU(n S1)':>18}  {'partial sum':>18}  {'error':>9}")
        for r in rows:
            print(f"{r['n']:>4}  {r['expected_utility']:>18.15f}  {r['partial_sum']:>18.15f}  {r['error']:>9.1e}")
        print(f"solve with position bound {args.phimax:g}: value {result.root_value:.6f} at "
              f"position {summary['position']:g}, boundary={result.boundary}, "
              f"gap to pi^2/6 = {summary['gap_to_limit']:.6f}")
    return 0


# parser --------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, model: bool = True) -> None:
    p.add_argument("tree", help="scenario tree JSON file")
    if model:
        p.add_argument("--utility", required=True, help="utility JSON (file or inline)")
        p.add_argument("--capital", type=float, default=0.0)
    p.add_argument("--cone", help="cone generating rays as a JSON list of vectors")
    p.add_argument("--config", help="configuration JSON (file or inline)")
    p.add_argument("--phimax", type=float)
    p.add_argument("--grid", dest="n_grid", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--require-ae", dest="require_ae", choices=("strict", "warn", "off"))
    p.add_argument("--output", "-o", help="write the JSON report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="utilmax", description="Expected-utility maximization on scenario trees.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="no-arbitrage test with per-node certificates")
    _common(p, model=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="optimal strategy and value functions")
    _common(p)
    p.add_argument("--refine", dest="refine_rounds", type=int)
    p.add_argument("--csv", help="directory for value-function and strategy CSV files")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("measure", help="martingale measure from the optimal strategy")
    _common(p)
    p.add_argument("--force", action="store_true", help="build the measure even on a boundary optimum")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("price", help="indifference price of a claim")
    _common(p)
    p.add_argument("--claim", required=True, help="claim JSON: {\"payoff\": {leaf: amount}, \"bound\": l}")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("verify", help="brute-force optimality and restart checks")
    _common(p)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--lattice-step", type=float, default=0.05)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("demo", help="built-in demonstrations")
    p.add_argument("name", choices=("example73",))
    p.add_argument("--N", type=int, help="truncation depth of the utility (default phimax + 1)")
    p.add_argument("--phimax", type=float, default=200.0)
    p.add_argument("--nmax", type=int, default=50)
    p.add_argument("--grid", dest="n_grid", type=int)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_demo)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UtilMaxError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
