"""Command-line entry point: ``settleflow <subcommand> ...``.

Exit status is 0 on success, 1 on invalid input or missing files and 2
on usage errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Any, Sequence

import numpy as np

from . import flowlab, ingest, loanmatch, netstats, synthgen, viz
from .core import DatasetError, WeekDataset, dataset_totals, dollars, validate

SCHEMA_VERSION = 1
SIG_DIGITS = 6


class InputError(Exception):
    """Bad input data or files; maps to exit status 1."""


# --------------------------------------------------------------------------
# report sections

def _real(x) -> float | None:
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.{SIG_DIGITS}g}")


def _safe(fn, *args, **kwargs):
    """Call ``fn``; undefined statistics become None."""
    try:
        return fn(*args, **kwargs)
    except (ValueError, ArithmeticError, netstats.GmmCollapseError):
        return None


def _stat(fn, *args):
    """Real-valued statistic rounded for the report, or None when undefined."""
    v = _safe(fn, *args)
    return None if v is None else _real(v)


def _bank_map(values) -> dict[str, int]:
    return {b: int(values[b]) for b in sorted(values)}


def totals_section(week: WeekDataset) -> list[dict]:
    return [{"day": t.day, "volume": t.volume, "total_value_cents": t.total_value}
            for t in dataset_totals(week)]


def mixture_section(week: WeekDataset, seed: int) -> list[dict]:
    out = []
    for d, txs in enumerate(week.days):
        u = np.log10(np.array([t.value for t in txs], dtype=float) / 100.0)
        fit = _safe(netstats.fit_gmm, u, 2, seed=seed) if len(u) >= 4 else None
        entry: dict[str, Any] = {"day": d, "n": len(u)}
        if fit is None:
            entry["components"] = None
        else:
            entry["components"] = [
                {"mean": _real(m), "variance": _real(v), "proportion": _real(p)}
                for m, v, p in fit.components
            ]
            entry["log_likelihood"] = _real(fit.log_likelihood)
            entry["converged"] = fit.converged
        out.append(entry)
    return out


def _fit_dict(fit) -> dict | None:
    if fit is None:
        return None
    return {"intercept": _real(fit.intercept), "slope": _real(fit.slope),
            "intercept_stderr": _real(fit.intercept_stderr), "slope_stderr": _real(fit.slope_stderr),
            "n": fit.n}


def loans_section(result: loanmatch.LoanExtractionResult) -> dict:
    p = result.params
    terms = {}
    for term in range(1, p.max_term_days + 1):
        loans = result.by_term(term)
        stats = _safe(loanmatch.loan_rate_stats, loans)
        terms[str(term)] = {
            "count": len(loans),
            "value_cents": sum(ln.value for ln in loans),
            "rate_mean": _real(stats.mean) if stats else None,
            "rate_std": _real(stats.std) if stats else None,
        }
    contamination = loanmatch.estimate_contamination(result.week, p, 1, result=result)
    return {
        "count": len(result.loans),
        "by_term": terms,
        "per_day": [
            {"day": s.day, "count": s.volume, "value_cents": s.value, "loan_fraction": _real(s.loan_fraction)}
            for s in result.day_stats(term=1)
        ],
        "rate_value_fit": _fit_dict(_safe(loanmatch.rate_value_fit, result.by_term(1))),
        "contamination": {
            "in_box": contamination.in_box,
            "side_band": contamination.side_band,
            "expected_false": _real(contamination.expected_false),
            "fraction": _real(contamination.fraction),
        },
    }


def daily_networks(result: loanmatch.LoanExtractionResult):
    """Per-day (loan flows, nonloan flows) over the week's bank set."""
    week = result.week
    out = []
    for d in range(week.n_days):
        loan = flowlab.aggregate_flows(result.first_legs(d), "loan", d, week.banks)
        nonloan = flowlab.aggregate_flows(result.nonloans(d), "nonloan", d, week.banks)
        out.append((loan, nonloan))
    return out


def imbalance_section(networks) -> list[dict]:
    out = []
    for loan, nonloan in networks:
        li, ni = flowlab.imbalances(loan), flowlab.imbalances(nonloan)
        out.append({
            "day": loan.day,
            "correlation": _stat(flowlab.imbalance_correlation, li, ni),
            "size_tolerance": _stat(flowlab.size_tolerance_correlation, li, nonloan),
            "loan": _bank_map(li.values),
            "nonloan": _bank_map(ni.values),
        })
    return out


def flows_section(networks) -> dict:
    days = []
    for loan, nonloan in networks:
        entry = {"day": loan.day}
        for net in (loan, nonloan):
            entry[net.kind] = {"flows": len(net), "value_cents": net.total_value(),
                               "net_flows": len(flowlab.net_flows(net))}
        days.append(entry)
    pairs = []
    for (_, a), (_, b) in zip(networks, networks[1:]):
        per = flowlab.persistence(a, b)
        pairs.append({
            "days": [a.day, b.day],
            "persistent": len(per.persistent),
            "fraction_count": _real(per.fraction_count),
            "fraction_value_first": _real(per.fraction_value_d),
            "fraction_value_second": _real(per.fraction_value_d1),
            "distance": _stat(flowlab.flow_distance, a, b),
            "distance_persistent": _stat(flowlab.flow_distance, a, b, True),
        })
    return {"days": days, "consecutive": pairs}


def _active_degrees(net) -> tuple[list[int], list[int]]:
    seqs = netstats.degree_sequences(net)
    active = [b for b in seqs.in_degree if seqs.in_degree[b] or seqs.out_degree[b]]
    return [seqs.in_degree[b] for b in active], [seqs.out_degree[b] for b in active]


def network_section(networks) -> dict:
    days = []
    in_degrees, out_degrees = [], []
    for loan, nonloan in networks:
        net = flowlab.net_flows(nonloan)
        ins, outs = _active_degrees(net)
        in_degrees.append(ins)
        out_degrees.append(outs)
        shares = netstats.degree_value_shares(net, "in")
        power = _safe(netstats.fit_power_law, netstats.transactions_per_flow(nonloan))
        days.append({
            "day": loan.day,
            "net_flows": len(net),
            "assortativity_in": _stat(netstats.assortativity, net, "in"),
            "assortativity_out": _stat(netstats.assortativity, net, "out"),
            "loan_assortativity_in": _stat(netstats.assortativity, flowlab.net_flows(loan), "in"),
            "value_share_low_degree": _real(shares[0]),
            "value_share_high_degree": _real(shares[1]),
            "value_by_in_degree": {str(k): v for k, v in netstats.value_by_degree(net, "in").items()},
            "tx_per_flow_exponent": _real(power.exponent) if power else None,
            "tx_per_flow_exponent_stderr": _real(power.stderr) if power else None,
        })
    ks = []
    for d in range(len(networks) - 1):
        for mode, seqs in (("in", in_degrees), ("out", out_degrees)):
            res = _safe(netstats.ks_two_sample, seqs[d], seqs[d + 1])
            ks.append({"days": [d, d + 1], "mode": mode,
                       "statistic": _real(res.statistic) if res else None,
                       "p_value": _real(res.p_value) if res else None})
    pooled = {}
    for mode, seqs in (("in", in_degrees), ("out", out_degrees)):
        sample = [x for day in seqs for x in day if x > 0]
        res = _safe(netstats.ad_exponential_test, sample)
        pooled[mode] = {"n": len(sample),
                        "ad_statistic": _real(res.statistic) if res else None,
                        "ad_reject_5pct": res.reject_at_5pct if res else None}
    return {"days": days, "degree_ks": ks, "pooled_degree_exponential": pooled}


def stats_report(result: loanmatch.LoanExtractionResult, seed: int) -> dict:
    networks = daily_networks(result)
    return {"value_mixtures": mixture_section(result.week, seed), "network": network_section(networks)}


def build_report(week: WeekDataset, params: loanmatch.MatchParams, seed: int = 0) -> dict:
    result = loanmatch.extract_loans(week, params)
    networks = daily_networks(result)
    return {
        "schema_version": SCHEMA_VERSION,
        "params": {
            "target_rate": _real(params.target_rate),
            "rate_band": _real(params.rate_band),
            "min_loan_value_cents": params.min_value,
            "max_term_days": params.max_term_days,
            "seed": seed,
        },
        "banks": len(week.banks),
        "days": totals_section(week),
        "value_mixtures": mixture_section(week, seed),
        "loans": loans_section(result),
        "imbalances": imbalance_section(networks),
        "flows": flows_section(networks),
        "network": network_section(networks),
    }


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# --------------------------------------------------------------------------
# argument handling

def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SETTLEFLOW_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InputError(f"SETTLEFLOW_SEED must be an integer, got {env!r}") from None


def _params(args) -> loanmatch.MatchParams:
    try:
        return loanmatch.MatchParams(
            target_rate=args.target_rate,
            rate_band=args.rate_band,
            min_value=dollars(args.min_loan_value),
            max_term_days=args.max_term,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _read_week(path: str) -> WeekDataset:
    if not os.path.isfile(path):
        raise InputError(f"no such file: {path}")
    try:
        week = ingest.read_file(path)
    except ingest.ParseError as exc:
        raise InputError(f"{path}: {exc}") from None
    problems = validate(week)
    if problems:
        raise InputError(f"{path}: " + "; ".join(problems[:5]))
    return week


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)


def cmd_ingest(args) -> int:
    week = _read_week(args.in_path)
    _emit(ingest.write_transactions(week), args.out)
    for t in dataset_totals(week):
        print(f"day {t.day}: {t.volume} transactions, {t.total_value} cents", file=sys.stderr)
    return 0


def cmd_extract(args) -> int:
    week = _read_week(args.in_path)
    result = loanmatch.extract_loans(week, _params(args))
    if args.out:
        _emit(loanmatch.write_loans(result.loans), args.out)
    for s in result.day_stats(term=None):
        print(f"day {s.day}: {s.volume} loans, {s.value} cents, loan fraction {s.loan_fraction:.4f}")
    if args.truth:
        if not os.path.isfile(args.truth):
            raise InputError(f"no such file: {args.truth}")
        with open(args.truth, newline="", encoding="utf-8") as fh:
            try:
                truth = synthgen.read_truth(fh)
            except ValueError as exc:
                raise InputError(f"{args.truth}: {exc}") from None
        score = loanmatch.score_against_truth(result.loans, [(t.first_leg, t.second_leg) for t in truth])
        print(f"precision {score.precision:.4f} recall {score.recall:.4f} "
              f"(tp {score.true_positive}, fp {score.false_positive}, fn {score.false_negative})")
    return 0


def cmd_flows(args) -> int:
    week = _read_week(args.in_path)
    result = loanmatch.extract_loans(week, _params(args))
    nets = []
    for loan, nonloan in daily_networks(result):
        for net in (loan, nonloan):
            nets.append(flowlab.net_flows(net) if args.net else net)
    _emit(flowlab.write_flows(nets), args.out)
    return 0


def cmd_stats(args) -> int:
    week = _read_week(args.in_path)
    result = loanmatch.extract_loans(week, _params(args))
    _emit(dumps(stats_report(result, _seed(args))), args.out)
    return 0


def cmd_simulate(args) -> int:
    seed = _seed(args)
    try:
        if args.config:
            if not os.path.isfile(args.config):
                raise InputError(f"no such file: {args.config}")
            with open(args.config, encoding="utf-8") as fh:
                config = synthgen.parse_config(fh, seed=seed)
        else:
            config = synthgen.GeneratorConfig(seed=seed)
            config.check()
    except synthgen.ConfigError as exc:
        raise InputError(str(exc)) from None
    labeled = synthgen.generate_week(config)
    _emit(ingest.write_transactions(labeled.week), args.out)
    if args.truth:
        _emit(synthgen.write_truth(labeled.truth), args.truth)
    return 0


def cmd_render(args) -> int:
    week = _read_week(args.in_path)
    if not 0 <= args.day < week.n_days:
        raise InputError(f"day {args.day} outside 0..{week.n_days - 1}")
    result = loanmatch.extract_loans(week, _params(args))
    loan, nonloan = daily_networks(result)[args.day]
    net = flowlab.net_flows(loan if args.kind == "loan" else nonloan)
    if args.keep_nodes:
        keep = {b.strip() for b in args.keep_nodes.split(",") if b.strip()}
        try:
            net = viz.merge_others(net, keep)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    layout = viz.layout_fr(net, weighted=args.weighted_layout, seed=_seed(args))
    _emit(viz.export_dot(net, layout, name=f"{args.kind}_day{args.day}"), args.out)
    return 0


def cmd_report(args) -> int:
    week = _read_week(args.in_path)
    _emit(dumps(build_report(week, _params(args), _seed(args))), args.out)
    return 0


def _add_match_flags(p: argparse.ArgumentParser) -> None:
    d = loanmatch.MatchParams()
    p.add_argument("--target-rate", type=float, default=d.target_rate, help="target rate, annual percent")
    p.add_argument("--rate-band", type=float, default=d.rate_band, help="half-width of the rate box, percent")
    p.add_argument("--min-loan-value", type=float, default=d.min_value / 100, help="minimum principal, A$")
    p.add_argument("--max-term", type=int, default=d.max_term_days, help="longest loan term, days")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="settleflow", description="RTGS loan and flow analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_text, needs_input=True, match=True, seed=False):
        p = sub.add_parser(name, help=help_text)
        if needs_input:
            p.add_argument("--in", dest="in_path", required=True, help="transaction CSV")
        p.add_argument("--out", help="output file (default stdout)")
        if match:
            _add_match_flags(p)
        if seed:
            p.add_argument("--seed", type=int, help="random seed (default $SETTLEFLOW_SEED or 0)")
        p.set_defaults(func=fn)
        return p

    command("ingest", cmd_ingest, "validate and canonicalise a transaction CSV", match=False)
    p = command("extract-loans", cmd_extract, "identify loans")
    p.add_argument("--truth", help="truth CSV from simulate; prints precision and recall")
    p = command("flows", cmd_flows, "daily loan and nonloan flow tables")
    p.add_argument("--net", action="store_true", help="write net flows")
    command("stats", cmd_stats, "value mixtures, degree statistics and tests", seed=True)
    p = command("simulate", cmd_simulate, "generate a labelled synthetic week", needs_input=False,
                match=False, seed=True)
    p.add_argument("--config", help="generator config file (key = value lines)")
    p.add_argument("--truth", help="write the truth loans CSV here")
    p = command("render", cmd_render, "DOT drawing of one day's net flows", seed=True)
    p.add_argument("--day", type=int, default=0)
    p.add_argument("--kind", choices=("nonloan", "loan"), default="nonloan")
    p.add_argument("--keep-nodes", help="comma-separated banks to keep; the rest merge into 'others'")
    p.add_argument("--weighted-layout", action="store_true", help="value-weighted attraction")
    command("report", cmd_report, "full analysis as JSON", seed=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (InputError, DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
