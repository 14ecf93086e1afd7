"""Command-line interface.

One command, nine subcommands wiring the library end to end:

    scan        run lengths of one stream on an n grid
    census      exact word counts and tau_k table
    entropy     entropy-exponent estimate (plus Perron value for SFTs)
    blocker     find and verify a blocker word
    exceptional construct + verify an exceptional stream
    bounded     construct a bounded-run stream and check its run bound
    dimbound    homogeneous-Moran dimension lower bound
    montecarlo  limit-law Monte Carlo trial/aggregate tables
    bounds      tail-event frequency table

Outputs land in a run directory named by a content hash of the resolved
configuration, so identical invocations reuse the same path.  Exit codes:
0 success, 1 validation error, 2 internal invariant failure (e.g. a
sandwich violation in a constructed stream).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from fractions import Fraction


from . import census, experiment, moran
from .errors import InputError, MaxrunError, SandwichViolationError
from .family import load_family_file, parse_family_spec, serialize_family_spec
from .scanner import (
    BufferStream,
    RationalStream,
    SeededRandomStream,
    max_run_naive,
    read_digit_file,
    scan_series,
    write_digit_file,
)


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so we control exit codes."""

    def error(self, message):
        raise InputError(message)


def _parse_n_grid(text: str, factor: int = 2) -> list[int]:
    """Grid syntax: '2^10..2^20', '1024..65536', '4096,16384', or '2^20'."""

    def value(tok: str) -> int:
        tok = tok.strip()
        if "^" in tok:
            b, e = tok.split("^", 1)
            return int(b) ** int(e)
        return int(tok)

    text = text.strip()
    if "," in text:
        grid = [value(t) for t in text.split(",")]
    elif ".." in text:
        lo_s, hi_s = text.split("..", 1)
        lo, hi = value(lo_s), value(hi_s)
        if lo < 1 or hi < lo:
            raise InputError(f"--n: bad range {text!r}")
        if factor < 2:
            raise InputError("--grid-factor must be >= 2")
        grid = []
        v = lo
        while v < hi:
            grid.append(v)
            v *= factor
        grid.append(hi)
    else:
        grid = [value(text)]
    if any(v < 1 for v in grid) or any(b >= a for b, a in zip(grid, grid[1:])):
        raise InputError(f"--n: grid must be increasing and positive, got {grid}")
    return grid


def _parse_phi(text: str) -> moran.PhiRule:
    if text == "log2":
        return moran.phi_log2()
    if text.startswith("pow:"):
        return moran.phi_pow(float(text.split(":", 1)[1]))
    if text.startswith("file:"):
        path = text.split(":", 1)[1]
        with open(path, "r", encoding="utf-8") as fh:
            vals = [float(line) for line in fh if line.strip()]
        return moran.phi_table(vals)
    raise InputError(f"--phi: expected log2, pow:<alpha> or file:<path>, got {text!r}")


def _load_family(spec: str):
    if spec.lstrip().startswith("{"):
        return parse_family_spec(spec)
    return load_family_file(spec)


def _make_stream(text: str, base: int):
    """Stream syntax: random:<seed>, rational:<p>/<q>, or file:<path>."""
    if text.startswith("random:"):
        return SeededRandomStream(int(text.split(":", 1)[1]), base=base)
    if text.startswith("rational:"):
        frac = text.split(":", 1)[1]
        p, q = frac.split("/", 1)
        return RationalStream(int(p), int(q), base=base)
    if text.startswith("file:"):
        path = text.split(":", 1)[1]
        return BufferStream(read_digit_file(path, base), base=base, label=os.path.basename(path))
    raise InputError(
        f"--stream: expected random:<seed>, rational:<p>/<q> or file:<path>, got {text!r}"
    )


def _run_dir(out: str, sub: str, config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    digest = hashlib.sha256(blob).hexdigest()[:12]
    path = os.path.join(out, f"{sub}-{digest}")
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(config, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _default_workers() -> int:
    return min(4, os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maxrun", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_family(p):
        p.add_argument(
            "--family",
            required=True,
            help="family spec: path to a JSON file or an inline JSON object",
        )

    def add_out(p):
        p.add_argument("--out", default="runs", help="output directory root")
        p.add_argument(
            "--format",
            default="csv",
            choices=("csv", "svg"),
            help="csv only, or csv plus an svg plot",
        )

    p = sub.add_parser("scan", help="run lengths of one stream on an n grid")
    add_family(p)
    p.add_argument("--stream", required=True, help="random:<seed> | rational:<p>/<q> | file:<path>")
    p.add_argument("--n", required=True, help="n grid, e.g. 2^10..2^20 or 4096,16384")
    p.add_argument("--grid-factor", type=int, default=2, help="geometric grid factor")
    p.add_argument(
        "--engine",
        default="route",
        choices=("route", "naive", "downset"),
        help="route = fastest exact engine for the family's closure flags",
    )
    add_out(p)

    p = sub.add_parser("census", help="exact |A_k| counts and tau_k table")
    add_family(p)
    p.add_argument("--K", type=int, required=True, help="maximum word length")
    add_out(p)

    p = sub.add_parser("entropy", help="entropy-exponent estimate")
    add_family(p)
    p.add_argument("--K", type=int, required=True, help="maximum word length")
    add_out(p)

    p = sub.add_parser("blocker", help="find and verify a blocker word")
    add_family(p)
    p.add_argument("--n", required=True, help="blocker length (single integer)")
    p.add_argument("--s", required=True, help="slack factor, exact rational e.g. 1, 0.4, 2/5")
    p.add_argument(
        "--verify-budget",
        type=int,
        default=1 << 22,
        help="max extension words for the exhaustive verification",
    )

    p = sub.add_parser("exceptional", help="construct + verify an exceptional stream")
    add_family(p)
    p.add_argument("--s", required=True, help="slack factor, exact rational")
    p.add_argument("--phi", default="log2", help="gauge: log2 | pow:<alpha> | file:<path>")
    p.add_argument("--digits", type=int, required=True, help="number of digits to emit/verify")
    p.add_argument("--seed", type=int, default=None, help="randomize fillers with this seed")
    add_out(p)

    p = sub.add_parser("bounded", help="bounded-run stream from complement words")
    add_family(p)
    p.add_argument("--word-len", type=int, required=True, help="complement word length N")
    p.add_argument("--digits", type=int, required=True, help="number of digits to emit")
    p.add_argument("--seed", type=int, default=0, help="word-choice seed")
    add_out(p)

    p = sub.add_parser("dimbound", help="homogeneous-Moran dimension lower bound")
    p.add_argument("--K", type=int, required=True, help="depth of the bound sequence")
    p.add_argument("--nk", default=None, help="constant branch count, e.g. 2")
    p.add_argument("--ck", default=None, help="constant contraction ratio, e.g. 0.5")
    p.add_argument("--family", default=None, help="derive (n_k, c_k) from a construction instead")
    p.add_argument("--s", default=None, help="slack factor for --family mode")
    p.add_argument("--phi", default="log2", help="gauge for --family mode")
    add_out(p)

    p = sub.add_parser("montecarlo", help="limit-law Monte Carlo tables")
    add_family(p)
    p.add_argument("--n", required=True, help="n grid, e.g. 2^10..2^20")
    p.add_argument("--grid-factor", type=int, default=2, help="geometric grid factor")
    p.add_argument("--trials", type=int, required=True, help="number of independent trials")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument(
        "--tau",
        default="auto",
        help="entropy exponent: auto (closed form/census) or an explicit number",
    )
    p.add_argument("--workers", type=int, default=_default_workers(), help="worker processes")
    add_out(p)

    p = sub.add_parser("bounds", help="tail-event frequency table")
    add_family(p)
    p.add_argument("--n", required=True, help="n list, e.g. 2^12,2^16,2^20")
    p.add_argument("--grid-factor", type=int, default=2, help="geometric grid factor")
    p.add_argument("--trials", type=int, required=True, help="number of independent trials")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--epsilon", type=float, required=True, help="tail parameter in (0, 1-tau)")
    p.add_argument("--tau", default="auto", help="entropy exponent: auto or explicit number")
    p.add_argument("--workers", type=int, default=_default_workers(), help="worker processes")
    add_out(p)

    return parser


def _resolve_tau(tau_arg: str, family) -> float:
    if tau_arg != "auto":
        try:
            return float(tau_arg)
        except ValueError as exc:
            raise InputError(f"--tau: expected a number or 'auto', got {tau_arg!r}") from exc
    tau = census.exact_tau(family)
    if tau is None:
        est = census.entropy_estimate(family, K=16)
        tau = est.tau_hat
        print(f"tau estimated from counts up to K=16: {tau:.6f}")
    return tau


def _cmd_scan(args) -> int:
    family = _load_family(args.family)
    grid = _parse_n_grid(args.n, args.grid_factor)
    stream = _make_stream(args.stream, family.base)
    if args.engine == "naive":
        digits = stream.take(grid[-1])
        values = [max_run_naive(digits, n, family) for n in grid]
        series_values = values
        sid = stream.stream_id()
    else:
        from .scanner import max_run_incremental

        series = (
            scan_series(stream, grid, family)
            if args.engine == "route"
            else max_run_incremental(stream, grid, family, engine="downset")
        )
        series_values = [int(v) for v in series.values]
        sid = series.stream_id
    config = {
        "command": "scan",
        "family": serialize_family_spec(family),
        "stream": args.stream,
        "n": grid,
        "engine": args.engine,
    }
    rundir = _run_dir(args.out, "scan", config)
    path = os.path.join(rundir, "runlength.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("family,stream,n,ell\n")
        for n, v in zip(grid, series_values):
            fh.write(f"{family.family_id()},{sid},{n},{v}\n")
    print(path)
    return 0


def _cmd_census(args) -> int:
    family = _load_family(args.family)
    if args.K < 1:
        raise InputError("--K must be >= 1")
    nonempty = census.verify_nonempty(family)
    table = census.count_table(family, args.K)
    taus = table.tau_sequence()
    config = {"command": "census", "family": serialize_family_spec(family), "K": args.K}
    rundir = _run_dir(args.out, "census", config)
    path = os.path.join(rundir, "census.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,count,tau_k\n")
        for k in range(1, args.K + 1):
            c = table.counts.get(k)
            fh.write(f"{k},{'' if c is None else c},{'' if c is None else repr(float(taus[k - 1]))}\n")
    if nonempty.nonempty_all_k is False:
        print(f"warning: family empty at length {nonempty.first_empty_k}")
    print(path)
    return 0


def _cmd_entropy(args) -> int:
    family = _load_family(args.family)
    est = census.entropy_estimate(family, args.K)
    config = {"command": "entropy", "family": serialize_family_spec(family), "K": args.K}
    rundir = _run_dir(args.out, "entropy", config)
    path = os.path.join(rundir, "entropy.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,tau_k\n")
        for k, t in enumerate(est.tau_sequence, start=1):
            fh.write(f"{k},{repr(float(t))}\n")
    line = f"tau_hat={est.tau_hat!r} mode={est.mode} K={est.K}"
    if est.tau_perron is not None:
        line += f" tau_perron={est.tau_perron!r} perron_root={est.perron!r}"
    if est.partial:
        line += " (partial: counts unavailable at some k)"
    print(line)
    print(path)
    return 0


def _cmd_blocker(args) -> int:
    family = _load_family(args.family)
    n = int(args.n)
    s = Fraction(args.s)
    result = census.find_blocker(family, n, s)
    e = result.extension_len
    m = family.base
    verified = "skipped"
    if m ** e <= args.verify_budget:
        ok = census.verify_blocker(family, result.word, s, budget=args.verify_budget)
        verified = "true" if ok else "FALSE"
    print(f"n={n} s={s} u={result.word} e={e} method={result.method} verified={verified}")
    return 0 if verified != "FALSE" else 2


def _cmd_exceptional(args) -> int:
    family = _load_family(args.family)
    phi = _parse_phi(args.phi)
    v_rule = "zeros" if args.seed is None else ("random", args.seed)
    config_obj = moran.ExceptionalConfig(
        family=family, s=Fraction(args.s), phi=phi, v_rule=v_rule
    )
    report = moran.verify_exceptional(config_obj, args.digits)
    stream = moran.build_exceptional_stream(config_obj)
    digits = stream.take(args.digits)
    config = {
        "command": "exceptional",
        "family": serialize_family_spec(family),
        "s": str(config_obj.s),
        "phi": phi.name,
        "digits": args.digits,
        "v_rule": list(v_rule) if isinstance(v_rule, tuple) else v_rule,
    }
    rundir = _run_dir(args.out, "exceptional", config)
    digits_path = os.path.join(rundir, "digits.txt")
    write_digit_file(digits_path, digits)
    prov_path = os.path.join(rundir, "provenance.json")
    prov = dict(stream.provenance)
    prov["blockers"] = {str(m): "".join(map(str, u)) for m, u in sorted(stream._blockers.items())}
    prov["final_ell"] = report.final_ell
    with open(prov_path, "w", encoding="utf-8") as fh:
        json.dump(prov, fh, sort_keys=True, indent=2)
        fh.write("\n")
    csv_path = os.path.join(rundir, "sandwich.csv")
    report.to_csv(csv_path)
    print(f"k0={report.k0} blocks={len(report.rows)} final_ell={report.final_ell} passed={report.passed}")
    for path in (digits_path, prov_path, csv_path):
        print(path)
    return 0


def _cmd_bounded(args) -> int:
    family = _load_family(args.family)
    stream, report = moran.build_bounded_run_stream(family, args.word_len, args.seed)
    digits = stream.take(args.digits)
    from .scanner import run_length_profile

    profile = run_length_profile(digits, family)
    max_ell = int(profile.max())
    ok = max_ell < report.run_bound
    config = {
        "command": "bounded",
        "family": serialize_family_spec(family),
        "word_len": args.word_len,
        "digits": args.digits,
        "seed": args.seed,
    }
    rundir = _run_dir(args.out, "bounded", config)
    digits_path = os.path.join(rundir, "digits.txt")
    write_digit_file(digits_path, digits)
    report_path = os.path.join(rundir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "family": report.family_id,
                "word_len": report.word_len,
                "complement_count": report.complement_count,
                "dim_floor": None if report.dim_floor is None else str(report.dim_floor),
                "similarity_dim": report.similarity_dim,
                "max_ell": max_ell,
                "run_bound": report.run_bound,
                "bound_holds": ok,
            },
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")
    print(f"N={report.word_len} complement={report.complement_count} "
          f"dim_floor={report.dim_floor} max_ell={max_ell} bound={report.run_bound} ok={ok}")
    for path in (digits_path, report_path):
        print(path)
    if not ok:
        raise SandwichViolationError(
            f"bounded-run stream reached ell={max_ell} >= {report.run_bound}"
        )
    return 0


def _cmd_dimbound(args) -> int:
    if args.family is not None:
        if args.s is None:
            raise InputError("--family mode needs --s")
        family = _load_family(args.family)
        config_obj = moran.ExceptionalConfig(
            family=family, s=Fraction(args.s), phi=_parse_phi(args.phi)
        )
        params = moran.derive_moran_params(config_obj, args.K)
        mode = {
            "family": serialize_family_spec(family),
            "s": str(config_obj.s),
            "phi": config_obj.phi.name,
        }
    else:
        if args.nk is None or args.ck is None:
            raise InputError("provide either --family/--s or constant --nk and --ck")
        params = moran.MoranParams.constant(int(args.nk), float(args.ck), args.K)
        mode = {"nk": int(args.nk), "ck": float(args.ck)}
    bound = moran.dim_lower_bound(params)
    config = {"command": "dimbound", "K": args.K, **mode}
    rundir = _run_dir(args.out, "dimbound", config)
    path = os.path.join(rundir, "dimbound.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,f_k\n")
        for k, f in enumerate(bound.f, start=1):
            fh.write(f"{k},{f!r}\n")
    print(
        f"tail_estimate={bound.tail_estimate!r} over k in "
        f"[{bound.tail_window[0]}, {bound.tail_window[1]}]"
    )
    print(path)
    return 0


def _cmd_montecarlo(args) -> int:
    family = _load_family(args.family)
    grid = _parse_n_grid(args.n, args.grid_factor)
    tau = _resolve_tau(args.tau, family)
    table = experiment.monte_carlo_limit(
        family, tau, grid, args.trials, args.seed, workers=args.workers
    )
    config = {
        "command": "montecarlo",
        "family": serialize_family_spec(family),
        "n": grid,
        "trials": args.trials,
        "seed": args.seed,
        "tau": tau,
    }
    rundir = _run_dir(args.out, "montecarlo", config)
    trials_path = os.path.join(rundir, "trials.csv")
    agg_path = os.path.join(rundir, "aggregate.csv")
    experiment.emit_trials_csv(table, trials_path)
    experiment.emit_aggregate_csv(table, agg_path)
    paths = [trials_path, agg_path]
    if args.format == "svg":
        plot_path = os.path.join(rundir, "ratios.svg")
        experiment.emit_plot([table], plot_path)
        paths.append(plot_path)
    target = "inf" if math.isinf(table.target) else repr(table.target)
    print(f"target={target} (tau={tau!r}); mean ratio at n={grid[-1]}: "
          f"{experiment.aggregate(table)[-1].mean!r}")
    for path in paths:
        print(path)
    return 0


def _cmd_bounds(args) -> int:
    family = _load_family(args.family)
    n_list = _parse_n_grid(args.n, args.grid_factor)
    tau = _resolve_tau(args.tau, family)
    freq = experiment.bound_event_frequency(
        family, tau, args.epsilon, n_list, args.trials, args.seed, workers=args.workers
    )
    config = {
        "command": "bounds",
        "family": serialize_family_spec(family),
        "n": n_list,
        "trials": args.trials,
        "seed": args.seed,
        "epsilon": args.epsilon,
        "tau": tau,
    }
    rundir = _run_dir(args.out, "bounds", config)
    path = os.path.join(rundir, "frequencies.csv")
    experiment.emit_frequency_csv(freq, path)
    flagged = [r.n for r in freq.rows if r.exceeds_bound]
    print(f"flagged={flagged if flagged else 'none'}")
    print(path)
    return 0


_HANDLERS = {
    "scan": _cmd_scan,
    "census": _cmd_census,
    "entropy": _cmd_entropy,
    "blocker": _cmd_blocker,
    "exceptional": _cmd_exceptional,
    "bounded": _cmd_bounded,
    "dimbound": _cmd_dimbound,
    "montecarlo": _cmd_montecarlo,
    "bounds": _cmd_bounds,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except SandwichViolationError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 2
    except (InputError, MaxrunError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
