"""Command-line entry point: ``renewal-ldp <command> [options]``.

Every command reads a model (or Hawkes) JSON file, writes its data
artifacts (CSV and/or JSON) to ``--out`` and a ``manifest.json`` echoing the
resolved configuration.  Data artifacts depend only on the configuration
and the seed, never on the worker count or the clock.

Exit status: 0 success, 1 I/O, parse or parameter error, 2 hypothesis
violation (``theta0 = 0`` or ``eta0 = 0``), 3 infeasible or censored result
(including a failed tolerance in ``compare``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .deviation import estimate_approx_rate, estimate_tail
from .entropy import minimize_i
from .exceptions import (
    HypothesisViolation,
    ParameterError,
    InsufficientCyclesError,
    InsufficientEventsError,
    RenewalLDPError,
    SchemaError,
)
from .hawkes import extract_renewal_pairs, hawkes_deviation_pipeline, load_hawkes_config, simulate_hawkes
from .io import compare_artifacts, read_artifact, write_json, write_manifest, write_text
from .legendre import cramer_transform, deviation_bound, fmt_real, profile_on_grid, rate_function_jbar
from .models import DiscreteJoint, load_model
from .seeding import default_workers
from .simulation import ShiftTau, TruncateW, lln_clt_check, simulate_coupled, simulate_ensemble, simulate_path

EXIT_OK, EXIT_ERROR, EXIT_HYPOTHESIS, EXIT_INFEASIBLE = 0, 1, 2, 3

# config keys that describe where things go, not what is computed
_PLUMBING = {"out", "config", "workers", "func", "command", "seed_given"}


class CommandFailed(Exception):
    """Result computed and written but infeasible, censored or out of tolerance."""


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).replace(",", " ").split()]


def _variant(text: str):
    """``truncate:<n>`` or ``shift:<eps>``."""
    kind, _, val = str(text).partition(":")
    if kind == "truncate":
        return TruncateW(float(val))
    if kind == "shift":
        return ShiftTau(float(val))
    raise ParameterError(f"variant must be truncate:<n> or shift:<eps>, got {text!r}")


def _grid(value) -> list[float]:
    return value if isinstance(value, list) else _floats(value)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _write_pair(out: Path, stem: str, csv_text: str | None, obj: dict | None) -> list[Path]:
    files = []
    if csv_text is not None:
        files.append(write_text(out / f"{stem}.csv", csv_text))
    if obj is not None:
        files.append(write_json(out / f"{stem}.json", obj))
    return files


def cmd_rate_profile(args, out: Path) -> list[Path]:
    model = load_model(args.model)
    if args.m_grid is not None:
        grid = _grid(args.m_grid)
    else:
        grid = np.linspace(args.m_lo, args.m_hi, args.n_points)
    prof = profile_on_grid(model, grid)
    return _write_pair(out, "rate_profile", prof.to_csv(), prof.to_dict())


def cmd_deviation_bound(args, out: Path) -> list[Path]:
    model = load_model(args.model)
    db = deviation_bound(model, args.a, args.side, args.kappa)
    d = {"schema": "deviation-bound/1", "model_digest": model.digest, "a": args.a, "side": args.side, **db.to_dict()}
    return _write_pair(out, "deviation_bound", None, d)


def cmd_simulate(args, out: Path) -> list[Path]:
    model = load_model(args.model)
    variants = [_variant(v) for v in args.variant]
    if args.n_paths == 1:
        paths = simulate_coupled(model, variants, args.t, args.seed) if variants else [simulate_path(model, args.t, args.seed)]
        files = _write_pair(out, "path", paths[0].to_csv(), None)
        summary = {
            "schema": "path-summary/1",
            "model_digest": model.digest,
            "t": args.t,
            "parent": paths[0].summary(),
            "variants": [{"variant": v.to_dict(), **p.summary()} for v, p in zip(variants, paths[1:])],
        }
        return files + _write_pair(out, "path_summary", None, summary)
    ens = simulate_ensemble(model, args.t, args.n_paths, args.seed, variants, workers=args.workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["path", "M_t", "Z_t"]
    for k in range(len(variants)):
        head += [f"M_t_v{k}", f"Z_t_v{k}"]
    w.writerow(head)
    for i in range(ens.n_paths):
        row = [i, int(ens.M[i]), fmt_real(ens.Z[i])]
        for vm, vz in zip(ens.variant_M, ens.variant_Z):
            row += [int(vm[i]), fmt_real(vz[i])]
        w.writerow(row)
    files = _write_pair(out, "ensemble", buf.getvalue(), None)
    if not variants:
        stats = lln_clt_check(model, args.t, args.n_paths, args.seed, args.workers)
        files += _write_pair(out, "ensemble_stats", None, {"model_digest": model.digest, **stats.to_dict()})
    return files


def cmd_mc_tail(args, out: Path) -> list[Path]:
    model = load_model(args.model)
    rep = estimate_tail(model, args.side, args.a, _grid(args.t_grid), args.n, args.seed, args.workers)
    files = _write_pair(out, "mc_tail", rep.to_csv(), rep.to_dict())
    if rep.insufficient_events:
        raise CommandFailed("fewer than 3 horizons with at least one hit; no slope could be fitted")
    return files


def cmd_approx_rate(args, out: Path) -> list[Path]:
    model = load_model(args.model)
    rep = estimate_approx_rate(model, _variant(args.variant), args.delta, _grid(args.t_grid), args.n, args.seed, args.workers)
    files = _write_pair(out, "approx_rate", rep.to_csv(), rep.to_dict())
    if rep.slope_fit is None and any(c > 0 for c in rep.counts):
        raise CommandFailed("too few horizons with hits to fit a slope")
    return files


def cmd_entropy_oracle(args, out: Path) -> list[Path]:
    model = load_model(args.model)
    if not isinstance(model, DiscreteJoint):
        raise HypothesisViolation("entropy-oracle needs a finitely supported (DiscreteJoint) model")
    theta0 = float(model.exp_moment_bounds().theta0)
    grid = _grid(args.m_grid)
    psi = (model.u, model.w, model.p)
    results, rows, cmp_rows, all_ok = [], [], [], True
    for m in grid:
        res = minimize_i(psi, m, theta0, seed=args.seed)
        results.append({"m": m, **res.to_dict()})
        jb = float(rate_function_jbar(model, m))
        ov = float(res.value)
        if ov == math.inf or jb == math.inf:
            ok, diff = ov == jb, (0.0 if ov == jb else math.inf)
        else:
            diff = abs(ov - jb)
            ok = diff <= max(args.atol, args.rtol * abs(jb))
        all_ok &= ok
        rows.append([fmt_real(m), fmt_real(ov), fmt_real(res.mass)])
        cmp_rows.append([fmt_real(m), fmt_real(ov), fmt_real(jb), fmt_real(diff), "pass" if ok else "fail"])
    files = []
    for stem, head, body in (
        ("oracle", ["m", "value", "mass"], rows),
        ("comparison", ["m", "oracle", "jbar", "abs_diff", "result"], cmp_rows),
    ):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(head)
        w.writerows(body)
        files.append(write_text(out / f"{stem}.csv", buf.getvalue()))
    files.append(
        write_json(out / "oracle.json", {"schema": "oracle-sweep/1", "model_digest": model.digest, "results": results})
    )
    if not all_ok:
        raise CommandFailed("entropy oracle and Jbar disagree beyond tolerance; see comparison.csv")
    return files


def cmd_hawkes(args, out: Path) -> list[Path]:
    cfg = load_hawkes_config(args.model)
    if args.seed_given:
        cfg = type(cfg)(cfg.baseline, cfg.kernel, cfg.horizon, args.seed)
    path = simulate_hawkes(cfg)
    pairs = extract_renewal_pairs(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "w"])
    w.writerows([fmt_real(a), fmt_real(b)] for a, b in pairs)
    files = [write_text(out / "hawkes_pairs.csv", buf.getvalue())]
    files += _write_pair(out, "hawkes_summary", None, {"schema": "hawkes-summary/1", "config": cfg.to_dict(), **path.summary()})
    if args.t_grid is not None:
        rep, _ = hawkes_deviation_pipeline(
            cfg, _grid(args.t_grid), args.a, args.n, cfg.seed, args.workers, with_bound=not args.no_bound
        )
        files += _write_pair(out, "hawkes_tail", rep.to_csv(), rep.to_dict())
        if rep.insufficient_events:
            raise CommandFailed("fewer than 3 horizons with at least one hit; no slope could be fitted")
    return files


def cmd_validate(args, out: Path) -> list[Path]:
    if "kernel" in json.loads(Path(args.model).read_text()):
        cfg = load_hawkes_config(args.model)
        print(f"{args.model}: valid Hawkes config; L={cfg.L:.6g}, kernel integral={cfg.kernel.integral:.6g}")
        d = {"schema": "validation/1", "hawkes": cfg.to_dict(), "kernel_integral": cfg.kernel.integral}
        return _write_pair(out, "validation", None, d) if out is not None else []
    model = load_model(args.model)
    b = model.exp_moment_bounds()
    d = {
        "schema": "validation/1",
        "model": model.to_dict(),
        "model_digest": model.digest,
        "theta0": float(b.theta0),
        "eta0": float(b.eta0),
        "provenance": getattr(b, "provenance", None),
    }
    ok = d["theta0"] > 0 and d["eta0"] > 0
    try:
        mom = model.moments()
        d["moments"] = mom._asdict()
        d["lambda_star_at_mean"] = float(cramer_transform(model, mom.mean_tau, mom.mean_w)) if ok else None
    except RenewalLDPError as exc:
        d["moments"] = None
        d["notes"] = [str(exc)]
    print(f"{args.model}: valid {type(model).__name__}; theta0={d['theta0']:.6g}, eta0={d['eta0']:.6g}")
    files = _write_pair(out, "validation", None, d) if out is not None else []
    if not ok:
        raise HypothesisViolation(f"theta0 = {d['theta0']} and eta0 = {d['eta0']}; both must be positive")
    return files


def cmd_compare(args, out: Path) -> list[Path]:
    if args.rule == "one-sided":
        rep = _one_sided(args.a_path, args.b_path)
    else:
        cols = None if args.columns is None else [c.strip() for c in args.columns.split(",") if c.strip()]
        rep = compare_artifacts(args.a_path, args.b_path, args.atol, args.rtol, cols)
    files = [write_json(out / "comparison.json", rep)] if out is not None else []
    print(f"compare: {'pass' if rep['pass'] else 'FAIL'}")
    if not rep["pass"]:
        raise CommandFailed("at least one entry exceeds the tolerance")
    return files


def _one_sided(tail_path, bound_path) -> dict:
    """``slope <= -bound + 2 stderr`` between an mc-tail and a deviation-bound artifact."""
    _, tail = read_artifact(tail_path)
    _, bound = read_artifact(bound_path)
    if tail.get("schema") != "deviation-report/1" or bound.get("schema") != "deviation-bound/1":
        raise SchemaError("one-sided rule needs a deviation-report/1 and a deviation-bound/1 artifact")
    fit = tail.get("slope_fit")
    if fit is None:
        raise CommandFailed("the tail artifact has no fitted slope")
    b = bound["bound"]
    b = math.inf if b == "inf" else float(b)
    limit = -b + 2 * fit["stderr"]
    return {
        "schema": "comparison/1",
        "rule": "one-sided",
        "slope": fit["slope"],
        "stderr": fit["stderr"],
        "bound": b,
        "limit": limit,
        "pass": fit["slope"] <= limit,
    }


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="renewal-ldp", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(name, func, help_, model=True):
        s = sub.add_parser(name, help=help_)
        if model:
            s.add_argument("--model", required=True, help="model JSON file")
        s.add_argument("--out", type=Path, help="output directory (created if missing)")
        s.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        s.add_argument("--workers", type=int, default=None, help="worker threads (default LDP_WORKERS or CPU count)")
        s.add_argument("--config", type=Path, help="JSON file with parameter values; flags take precedence")
        s.set_defaults(func=func)
        return s

    s = common("rate-profile", cmd_rate_profile, "J and Jbar on a grid of m")
    s.add_argument("--m-lo", type=float, default=0.0)
    s.add_argument("--m-hi", type=float, default=4.0)
    s.add_argument("--n-points", type=int, default=17)
    s.add_argument("--m-grid", default=None, help="explicit comma-separated grid (overrides lo/hi/n)")

    s = common("deviation-bound", cmd_deviation_bound, "asymptotic rate bound for a tail event")
    s.add_argument("--a", type=float, required=True)
    s.add_argument("--side", choices=["Upper", "Lower"], default="Upper")
    s.add_argument("--kappa", type=float, default=None, help="fixed kappa; optimised when omitted")

    s = common("simulate", cmd_simulate, "one path (n-paths=1) or an ensemble of (M_t, Z_t)")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--n-paths", type=int, default=1)
    s.add_argument("--variant", action="append", default=[], help="coupled variant truncate:<n> or shift:<eps>")

    s = common("mc-tail", cmd_mc_tail, "Monte Carlo tail slope")
    s.add_argument("--a", type=float, required=True)
    s.add_argument("--side", choices=["Upper", "Lower"], default="Upper")
    s.add_argument("--t-grid", required=True, help="comma-separated horizons")
    s.add_argument("--n", type=int, default=100_000, help="replications per horizon")

    s = common("approx-rate", cmd_approx_rate, "slope of the approximation error of a coupled variant")
    s.add_argument("--variant", required=True, help="truncate:<n> or shift:<eps>")
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--t-grid", required=True)
    s.add_argument("--n", type=int, default=100_000)

    s = common("entropy-oracle", cmd_entropy_oracle, "entropy minimisation for a finite-support law")
    s.add_argument("--m-grid", required=True)
    s.add_argument("--atol", type=float, default=1e-3)
    s.add_argument("--rtol", type=float, default=1e-3)

    s = common("hawkes", cmd_hawkes, "regeneration pairs (and optional tail slopes) of a Hawkes process")
    s.add_argument("--a", type=float, default=0.5)
    s.add_argument("--t-grid", default=None, help="horizons for the tail pipeline; skipped when omitted")
    s.add_argument("--n", type=int, default=100_000)
    s.add_argument("--no-bound", action="store_true", help="skip the theory bound of the estimated law")

    s = common("validate", cmd_validate, "check a model file and report its moment boundaries")

    s = common("compare", cmd_compare, "compare two artifacts", model=False)
    s.add_argument("a_path", type=Path)
    s.add_argument("b_path", type=Path)
    s.add_argument("--atol", type=float, default=0.0)
    s.add_argument("--rtol", type=float, default=0.0)
    s.add_argument("--columns", default=None, help="comma-separated columns or JSON keys to compare")
    s.add_argument("--rule", choices=["tolerance", "one-sided"], default="tolerance")
    return p


def _resolve(parser: argparse.ArgumentParser, argv: Sequence[str] | None) -> argparse.Namespace:
    """Parse ``argv``; values from ``--config`` fill in whatever the flags leave unset."""
    argv = list(sys.argv[1:] if argv is None else argv)
    cfg_path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            cfg_path = argv[i + 1]
        elif tok.startswith("--config="):
            cfg_path = tok.split("=", 1)[1]
    subs = parser._subparsers._group_actions[0].choices
    command = next((tok for tok in argv if tok in subs), None)
    if cfg_path is None or command is None:
        return parser.parse_args(argv)
    try:
        cfg = json.loads(Path(cfg_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise RenewalLDPError(f"cannot read config {cfg_path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise RenewalLDPError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items() if k != "command"}
    sub = subs[command]
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise RenewalLDPError(f"unknown config keys for {command}: {', '.join(unknown)}")
    for action in sub._actions:
        if action.dest in cfg:
            action.required = False  # supplied by the config file
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _resolve(parser, argv)
    except RenewalLDPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # argparse usage errors
        return EXIT_ERROR if exc.code else EXIT_OK
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    out = args.out
    if out is None and args.command not in ("validate", "compare"):
        print("error: --out is required for this command", file=sys.stderr)
        return EXIT_ERROR
    status = EXIT_OK
    files: list[Path] = []
    try:
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        files = args.func(args, out)
    except CommandFailed as exc:
        print(f"infeasible or censored: {exc}", file=sys.stderr)
        status = EXIT_INFEASIBLE
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        status = EXIT_HYPOTHESIS
    except (InsufficientCyclesError, InsufficientEventsError) as exc:
        print(f"infeasible or censored: {exc}", file=sys.stderr)
        status = EXIT_INFEASIBLE
    except (RenewalLDPError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if out is not None:
        files = files or sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
        config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in _PLUMBING}
        model_path = getattr(args, "model", None)
        write_manifest(out, args.command, {**config, "workers": args.workers or default_workers(), "exit_status": status}, files, model_path, __version__)
    return status


if __name__ == "__main__":
    sys.exit(main())
