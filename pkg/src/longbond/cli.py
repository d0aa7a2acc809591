"""
Command-line interface: ``longbond <verb> ...``.

Every verb prints a JSON document with a top-level ``"schema": 1`` and
sorted keys, so identical arguments give byte-identical output. Exit codes:
0 success, 2 invalid input, 3 a statistical check failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .curve import cantor_curve, flat_curve, power_law_curve, read_curve_csv
from .errors import ConfigError, LongBondError
from .montecarlo import MCConfig, RunningStats
from .paths import DEFAULT_STEP, ModelParams, TimeGrid, iter_path_blocks, simulate_paths
from .pricing import CapletSpec, caplet_price, caplet_price_approx, forward_contract, pitfall_gap
from .rates import forward_rate_alternate, identity_sweep
from .strategies import Ensemble, load_strategy, no_arbitrage_check, supermartingale_test, tameness_check

SCHEMA = 1
EXIT_OK, EXIT_INVALID, EXIT_STAT = 0, 2, 3


class StatisticalFailure(Exception):
    def __init__(self, doc: dict):
        super().__init__("statistical check failed")
        self.doc = doc


# ---------------------------------------------------------------------------
# argument helpers


def _step(text: str) -> float:
    v = float(text)
    if not 0 < v <= 0.25:
        raise argparse.ArgumentTypeError("step must lie in (0, 0.25]")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_curve_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("initial curve")
    g.add_argument("--curve", type=Path, help="CSV file with header maturity,price (log-linear)")
    g.add_argument(
        "--scheme",
        choices=["loglinear", "flat", "powerlaw", "cantor"],
        default="loglinear",
        help="curve scheme; loglinear without --curve means a flat 5%% curve",
    )
    g.add_argument("--rate", type=float, default=0.05, help="flat continuously compounded rate")
    g.add_argument("--horizon", type=float, default=10.0, help="horizon date T_h for generated curves")
    g.add_argument("--a", type=float, default=0.5, help="power-law scale in F(t) = a (T_h - t)^b")
    g.add_argument("--b", type=float, default=1.0, help="power-law exponent")
    g.add_argument("--depth", type=int, default=24, help="Cantor construction depth")
    g.add_argument("--sigma", type=float, default=1.0, help="volatility of the driving martingale")


def _add_mc_args(p: argparse.ArgumentParser, paths: int = 100_000) -> None:
    g = p.add_argument_group("Monte Carlo")
    g.add_argument("--paths", type=_positive_int, default=paths, help="number of paths")
    g.add_argument("--seed", type=int, required=True, help="seed (mandatory)")
    g.add_argument("--step", type=_step, default=None, help="grid step in (0, 0.25]")
    g.add_argument("--threads", type=_positive_int, default=1, help="worker threads")


def _curve(args):
    if args.curve is not None:
        if args.scheme != "loglinear":
            raise ConfigError("--curve files are log-linear; drop --scheme")
        if not args.curve.exists():
            raise ConfigError(f"curve file {args.curve} does not exist")
        return read_curve_csv(args.curve)
    if args.scheme in ("loglinear", "flat"):
        return flat_curve(args.rate, args.horizon)
    if args.scheme == "powerlaw":
        return power_law_curve(args.a, args.b, args.horizon)
    return cantor_curve(args.depth)


def _params(args) -> ModelParams:
    return ModelParams(args.sigma, _curve(args))


def _mc(args) -> MCConfig:
    return MCConfig(n_paths=args.paths, seed=args.seed, step=args.step, threads=args.threads)


def _stat(values: np.ndarray) -> dict:
    est = RunningStats().add(values).estimate()
    q = np.quantile(values, [0.05, 0.5, 0.95])
    return {"mean": est.mean, "stderr": est.stderr, "q05": q[0], "q50": q[1], "q95": q[2]}


def _terminal_nodes(args, params: ModelParams, t: float):
    """``(M_t, A_t)`` for every path of the ensemble."""
    if t == 0:
        return np.ones(args.paths), np.zeros(args.paths)
    grid = TimeGrid.uniform(t, args.step or DEFAULT_STEP)
    Ms, As = [], []
    for block in iter_path_blocks(params.sigma, grid, args.paths, args.seed):
        Ms.append(block.M[:, -1])
        As.append(block.A[:, -1])
    return np.concatenate(Ms), np.concatenate(As)


# ---------------------------------------------------------------------------
# verbs


def cmd_calibrate(args) -> dict:
    curve = _curve(args)
    params = ModelParams(args.sigma, curve)
    out = {
        "scheme": curve.scheme,
        "horizon": curve.horizon,
        "F0": float(params.forward.F(0.0)),
        "long_bond_price": curve.long_bond_price,
        "strict": curve.strict,
        "abs_continuous": curve.abs_continuous,
    }
    if curve.knots is not None:
        out["knots"] = [float(k) for k in curve.knots]
    return out


def cmd_simulate(args) -> dict:
    params = _params(args)
    end = args.end if args.end is not None else params.horizon
    if end > params.horizon:
        raise ConfigError("--end beyond the horizon")
    grid = TimeGrid.uniform(end, args.step or DEFAULT_STEP)
    paths = simulate_paths(params, grid, args.paths, args.seed)
    files = []
    if args.dump is not None:
        args.dump.mkdir(parents=True, exist_ok=True)
        for i in range(args.paths):
            name = args.dump / f"path_{i:06d}.csv"
            table = np.column_stack([grid.times, paths.B[i], paths.M[i], paths.A[i]])
            np.savetxt(name, table, delimiter=",", header="t,B,M,A", comments="", fmt="%.17g")
            files.append(str(name))
    return {
        "n": args.paths,
        "seed": args.seed,
        "step": grid.step,
        "end": end,
        "M_end": _stat(paths.M[:, -1]),
        "A_end": _stat(paths.A[:, -1]),
        "files": files,
    }


def cmd_price_bond(args) -> dict:
    params = _params(args)
    if not 0 <= args.t <= args.T <= params.horizon:
        raise ConfigError("need 0 <= t <= T <= T_h")
    M, A = _terminal_nodes(args, params, args.t)
    fwd = params.forward
    s2 = params.sigma**2
    y_T = 2 * M * fwd.F(args.T) / (2 + s2 * A * fwd.F(args.T))
    y_t = 2 * M * fwd.F(args.t) / (2 + s2 * A * fwd.F(args.t))
    out = {"t": args.t, "T": args.T, "n": args.paths, "seed": args.seed}
    out["price"] = _stat(np.exp(y_T - y_t))
    out["long_bond"] = _stat(np.exp(-y_t))
    out["initial"] = float(params.curve.price(args.T))
    return out


def cmd_price_caplet(args) -> dict:
    params = _params(args)
    spec = CapletSpec(args.T, args.Tprime, args.cap)
    if args.t != 0:
        raise ConfigError("caplets are priced at t = 0 from the CLI")
    out = {"T": args.T, "Tprime": args.Tprime, "cap": args.cap, "sigma": args.sigma, "t": args.t}
    out["approx"] = caplet_price_approx(params, 0.0, spec)
    if not args.approx:
        out.update(caplet_price(params, 0.0, spec, _mc(args)).as_dict())
    return out


def cmd_price_forward(args) -> dict:
    params = _params(args)
    Tp = args.Tprime if args.Tprime is not None else params.horizon
    q = forward_contract(params, 0.0, args.T, Tp, args.kappa)
    return {
        "T": args.T,
        "Tprime": Tp,
        "kappa": args.kappa,
        "value": q.price,
        "fair_kappa": float(params.curve.price(Tp) / params.curve.price(args.T)),
        "positions": {repr(float(k)): v for k, v in q.positions.items()},
    }


def cmd_rates(args) -> dict:
    params = _params(args)
    if args.check_identities:
        sweep = identity_sweep(params, n_nodes=args.nodes, seed=args.seed)
        out = {
            "n_nodes": sweep.n_nodes,
            "seed": args.seed,
            "max_rel_error_forward": sweep.forward_vs_alternate,
            "max_rel_error_near_zero": sweep.near_zero,
            "tolerance": 1e-9,
        }
        out["passed"] = max(sweep.forward_vs_alternate, sweep.near_zero) <= 1e-9
        if not out["passed"]:
            raise StatisticalFailure(out)
        return out
    if args.t is None or args.T is None:
        raise ConfigError("rates needs --t and --T (or --check-identities)")
    if not 0 <= args.t <= args.T < params.horizon:
        raise ConfigError("need 0 <= t <= T < T_h")
    fwd = params.forward
    M, A = _terminal_nodes(args, params, args.t)
    r_tT = forward_rate_alternate(fwd.density(args.T), fwd.F(args.T), M, A, params.sigma)
    r_t = forward_rate_alternate(fwd.density(args.t), fwd.F(args.t), M, A, params.sigma)
    return {
        "t": args.t,
        "T": args.T,
        "n": args.paths,
        "seed": args.seed,
        "forward_rate": _stat(r_tT),
        "spot_rate": _stat(r_t),
    }


def cmd_check_strategy(args) -> dict:
    params = _params(args)
    if not args.file.exists():
        raise ConfigError(f"strategy file {args.file} does not exist")
    strategy = load_strategy(args.file)
    end = args.end if args.end is not None else params.horizon
    ens = Ensemble(TimeGrid.uniform(end, args.step or 2.0**-8), args.paths, args.seed)
    verdict = tameness_check(strategy, params, ens)
    out = {
        "name": strategy.name,
        "n": args.paths,
        "seed": args.seed,
        "tame": verdict.tame,
        "infimum_discounted_gains": verdict.infimum,
        "bound": verdict.bound,
        "witness": verdict.witness,
    }
    checkpoints = args.checkpoints or [0.0, end]
    try:
        rep = supermartingale_test(strategy, params, ens, checkpoints)
    except LongBondError as exc:
        out["supermartingale"] = {"error": str(exc)}
        out["passed"] = False
        raise StatisticalFailure(out)
    out["supermartingale"] = {
        "checkpoints": list(rep.checkpoints),
        "means": list(rep.means),
        "stderrs": list(rep.stderrs),
        "passed": rep.passed,
    }
    out["self_financing_residual"] = rep.self_financing_residual
    if abs(strategy.endowment(params)) < 1e-12:
        out["no_arbitrage"] = no_arbitrage_check(strategy, params, ens)
    out["passed"] = rep.passed and out.get("no_arbitrage", {}).get("passed", True)
    if not out["passed"]:
        raise StatisticalFailure(out)
    return out


def cmd_demo_pitfall(args) -> dict:
    params = _params(args)
    rep = pitfall_gap(params, args.T, _mc(args), stop_level=args.stop_level)
    out = rep.as_dict()
    out.update({"T": args.T, "F_T": float(params.forward.F(args.T))})
    if args.ci and not out["z"] > 3:
        raise StatisticalFailure(out)
    return out


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="longbond", description="Term-structure model with the long bond as numeraire."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--out", type=Path, default=None, help="write JSON here instead of stdout")
    verbs = parser.add_subparsers(dest="verb", required=True)

    p = verbs.add_parser("calibrate", help="summarize an initial curve")
    _add_curve_args(p)
    p.set_defaults(func=cmd_calibrate)

    p = verbs.add_parser("simulate", help="simulate (B, M, A) paths, optionally dumping CSVs")
    _add_curve_args(p)
    _add_mc_args(p, paths=10)
    p.add_argument("--end", type=float, default=None, help="last grid time (default T_h)")
    p.add_argument("--dump", type=Path, default=None, help="directory for per-path t,B,M,A CSVs")
    p.set_defaults(func=cmd_simulate)

    price = verbs.add_parser("price", help="price bonds, caplets and forwards").add_subparsers(
        dest="instrument", required=True
    )
    p = price.add_parser("bond", help="distribution of P(t, T) over an ensemble")
    _add_curve_args(p)
    _add_mc_args(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    p.set_defaults(func=cmd_price_bond)

    p = price.add_parser("caplet", help="caplet on (T, T') with cap rate k")
    _add_curve_args(p)
    _add_mc_args(p)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--Tprime", type=float, required=True)
    p.add_argument("--cap", type=float, required=True)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--approx", action="store_true", help="only the normal approximation")
    p.set_defaults(func=cmd_price_caplet)

    p = price.add_parser("forward", help="forward contract at t = 0")
    _add_curve_args(p)
    p.add_argument("--T", type=float, required=True, help="delivery date")
    p.add_argument("--Tprime", type=float, default=None, help="underlying maturity (default T_h)")
    p.add_argument("--kappa", type=float, required=True, help="delivery price")
    p.set_defaults(func=cmd_price_forward)

    p = verbs.add_parser("rates", help="forward and spot rates, or the identity sweep")
    _add_curve_args(p)
    _add_mc_args(p, paths=10_000)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--check-identities", action="store_true", help="run the rate identity sweep")
    p.add_argument("--nodes", type=_positive_int, default=100, help="random nodes in the sweep")
    p.set_defaults(func=cmd_rates)

    check = verbs.add_parser("check", help="statistical checks").add_subparsers(
        dest="target", required=True
    )
    p = check.add_parser("strategy", help="tameness, self-financing and supermartingale checks")
    _add_curve_args(p)
    _add_mc_args(p, paths=10_000)
    p.add_argument("--file", type=Path, required=True, help="JSON strategy description")
    p.add_argument("--end", type=float, default=None, help="last grid time (default T_h)")
    p.add_argument("--checkpoints", type=float, nargs="+", default=None, help="grid times to compare")
    p.set_defaults(func=cmd_check_strategy)

    demo = verbs.add_parser("demo", help="demonstrations").add_subparsers(dest="name", required=True)
    p = demo.add_parser("pitfall", help="naive expectation of the discounted bond at maturity")
    _add_curve_args(p)
    _add_mc_args(p)
    p.set_defaults(rate=0.4)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--stop-level", type=float, default=None, help="also report the stopped mean")
    p.add_argument("--ci", action="store_true", help="exit 3 unless z > 3")
    p.set_defaults(func=cmd_demo_pitfall)
    return parser


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(doc: dict, out: Optional[Path]) -> None:
    doc = dict(_jsonable(doc), schema=SCHEMA)
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = args.func(args)
    except StatisticalFailure as exc:
        _emit(exc.doc, args.out)
        return EXIT_STAT
    except (LongBondError, ValueError, OSError) as exc:
        print(f"longbond: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _emit(doc, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
