"""Command-line entry point wiring the pipeline end to end.

Subcommands hand work off through files: `synth` writes a synthetic market,
`vix` prints the index series, `backtest` runs the rolling protocol and
leaves a report directory (models included), `weights` extracts a saved
model's portfolio on a given date, and `report` renders finished backtests
into the option-count x algorithm R^2 table.
"""

from __future__ import annotations

import argparse
import csv
import sys
from datetime import date
from pathlib import Path

from .errors import VolindexError
from .feature_pipeline import (
    FeatureConfig,
    Normalizer,
    apply_normalizer,
    build_dataset,
    build_feature_row,
)
from .index_builder import daily_weights, liquidity_report
from .market_data import (
    SyntheticMarketConfig,
    generate_synthetic_market,
    load_chain_series,
    load_market_config,
    load_price_series,
    write_chain_series,
    write_price_series,
    write_rates,
)
from .persistence import ModelBundle, load_bundle, save_bundle
from .regressors import FnnTrainConfig
from .targets import REG_I, REG_II, build_targets
from .validation import BacktestConfig, assemble_dataset, run_backtest
from .vix_engine import synthetic_vix

ALGO_COLUMNS = [("benchmark", "VIX*^2"), ("linear", "Linear"),
                ("ridge", "Ridge"), ("forest", "RF"), ("fnn", "FNN")]


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    if args.config:
        cfg = load_market_config(args.config)
    else:
        cfg = SyntheticMarketConfig()
    overrides = {
        "rng_seed": args.seed, "n_days": args.days, "premium": args.premium,
        "quote_gap_rate": args.gap_rate, "spot0": args.spot,
        "strike_spacing": args.spacing, "strikes_per_side": args.strikes_per_side,
        "rate": args.rate,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.tenors is not None:
        parts = [int(p) for p in args.tenors.split(",")]
        cfg.tenor_days = (parts[0], parts[1])
    cfg.validate()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prices, chains = generate_synthetic_market(cfg)
    write_chain_series(chains, out / "options.csv")
    write_price_series(prices, out / "underlying.csv")
    write_rates(chains, out / "rates.csv")
    print(f"wrote {len(chains)} days to {out}")
    return 0


# ---------------------------------------------------------------------------
# vix
# ---------------------------------------------------------------------------

def _cmd_vix(args) -> int:
    chains = load_chain_series(args.options, args.underlying, args.rates)
    rows = []
    for snap in chains:
        res = synthetic_vix(snap, args.horizon)
        rows.append([snap.quote_date.isoformat(), _fmt(res.value),
                     res.option_count,
                     _fmt(res.variance_by_term[0]), _fmt(res.variance_by_term[1])])
    _write_csv(args.out, ["date", "vix_star", "option_count",
                          "sigma1_sq", "sigma2_sq"], rows)
    return 0


def _write_csv(out_path, header, rows):
    if out_path:
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# backtest
# ---------------------------------------------------------------------------

def _cmd_backtest(args) -> int:
    chains = load_chain_series(args.options, args.underlying, args.rates)
    prices = load_price_series(args.underlying)
    fcfg = FeatureConfig(
        horizon_days=args.horizon, strikes_per_side=args.n_per_side,
        strike_step=args.step_spacing,
        include_returns_features=args.with_returns_features,
    )
    build = build_dataset(chains, prices, fcfg)
    vix_sq = {d: t.variance() for d, t in build.vix_terms.items()}
    mode = args.mode
    target_rows = build_targets(prices, vix_sq, mode, fcfg.horizon_days)
    dataset = assemble_dataset(build, target_rows, fcfg)

    cfg = BacktestConfig(
        initial=args.initial, step=args.step, seed=args.seed, jobs=args.jobs,
        fnn=FnnTrainConfig(epochs=args.fnn_epochs, learning_rate=args.fnn_lr,
                           batch_size=args.fnn_batch),
        n_trees=args.n_trees,
    )
    report = run_backtest(dataset, args.algo, mode, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "models").mkdir(exist_ok=True)

    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "actual", "pred", "fold", "hyperparam"])
        for fold in report.folds:
            hyper = "" if fold.hyperparam is None and args.algo != "forest" \
                else ("inf" if fold.hyperparam is None else repr(fold.hyperparam))
            for d, a, p in zip(fold.dates, fold.actuals, fold.preds):
                writer.writerow([d.isoformat(), _fmt(a), _fmt(p), fold.fold, hyper])

    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "mode", "n_options", "oos_r2"])
        writer.writerow([report.algorithm, report.mode, report.n_options,
                         _fmt(report.oos_r2)])

    all_weights = report.all_weights()
    if all_weights:
        with open(out / "weights.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "expiry", "strike", "kind", "weight"])
            for pw in all_weights:
                merged = dict(pw.legs)
                if pw.vix_component is not None:
                    for key, w in pw.vix_component.legs.items():
                        merged[key] = merged.get(key, 0.0) + w
                for (expiry, strike, kind) in sorted(merged):
                    writer.writerow([pw.date.isoformat(), expiry.isoformat(),
                                     _fmt(strike), kind,
                                     _fmt(merged[(expiry, strike, kind)])])
        liq = liquidity_report(all_weights, args.materiality)
        with open(out / "weights_summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "n_legs", "n_material", "turnover",
                             "cash", "adjustment"])
            for row in liq.rows:
                writer.writerow([
                    row.date.isoformat(), row.n_legs, row.n_material,
                    "" if row.turnover is None else _fmt(row.turnover),
                    _fmt(row.cash), _fmt(row.adjustment)])

    for fold in report.folds:
        bundle = ModelBundle(
            algorithm=report.algorithm, mode=report.mode,
            horizon_days=report.horizon_days, fold=fold.fold,
            feature_config=fcfg,
            normalizer=Normalizer(mean=fold.normalizer_mean,
                                  std=fold.normalizer_std),
            model=fold.model)
        save_bundle(bundle, out / "models" / f"fold_{fold.fold:04d}.json")

    print(f"{report.algorithm} {report.mode} n_options={report.n_options} "
          f"oos_r2={report.oos_r2:.6f} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

def _cmd_weights(args) -> int:
    bundle = load_bundle(args.model)
    if bundle.feature_config.include_returns_features:
        raise VolindexError(
            "bundle was trained with returns features; the prediction is not "
            "replicable by an option portfolio")
    chains = load_chain_series(args.options, args.underlying, args.rates)
    target_date = date.fromisoformat(args.date)
    snap = next((s for s in chains if s.quote_date == target_date), None)
    if snap is None:
        raise VolindexError(f"no snapshot for {args.date} in {args.options}")
    prices = load_price_series(args.underlying) if args.underlying else None
    row, vix_terms = build_feature_row(snap, bundle.feature_config, prices)
    row_n = apply_normalizer(bundle.normalizer, row)
    pw = daily_weights(bundle.model, row_n, bundle.mode, vix_terms=vix_terms)

    merged = dict(pw.legs)
    if pw.vix_component is not None:
        for key, w in pw.vix_component.legs.items():
            merged[key] = merged.get(key, 0.0) + w
    rows = [[pw.date.isoformat(), expiry.isoformat(), _fmt(strike), kind,
             _fmt(merged[(expiry, strike, kind)])]
            for (expiry, strike, kind) in sorted(merged)]
    _write_csv(args.out, ["date", "expiry", "strike", "kind", "weight"], rows)
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _cmd_report(args) -> int:
    root = Path(args.dir)
    cells: dict[tuple[str, int, str], float] = {}
    for path in sorted(root.rglob("summary.csv")):
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                cells[(row["mode"], int(row["n_options"]), row["algorithm"])] = \
                    float(row["oos_r2"])
    if not cells:
        raise VolindexError(f"no summary.csv files under {root}")
    modes = sorted({mode for mode, _, _ in cells})
    if args.mode:
        modes = [m for m in modes if m == args.mode]
    for mode in modes:
        counts = sorted({n for m, n, _ in cells if m == mode})
        print(f"OOS R^2 -- mode {mode}")
        header = ["options"] + [label for _, label in ALGO_COLUMNS]
        print("  ".join(f"{h:>8}" for h in header))
        for n in counts:
            cols = [f"{n:>8}"]
            for algo, _ in ALGO_COLUMNS:
                value = cells.get((mode, n, algo))
                cols.append(f"{value:>8.4f}" if value is not None else f"{'-':>8}")
            print("  ".join(cols))
        print()
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volindex",
        description="Volatility indexing: synthetic markets, index values, "
                    "rolling backtests, and tradable portfolio weights.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic market")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--premium", type=float)
    p.add_argument("--gap-rate", type=float, dest="gap_rate")
    p.add_argument("--spot", type=float)
    p.add_argument("--spacing", type=float)
    p.add_argument("--strikes-per-side", type=int, dest="strikes_per_side")
    p.add_argument("--tenors", help="pair like 25,35")
    p.add_argument("--rate", type=float)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("vix", help="compute the index series from a chain")
    p.add_argument("--options", required=True)
    p.add_argument("--underlying")
    p.add_argument("--rates")
    p.add_argument("--horizon", type=int, default=30)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_vix)

    p = sub.add_parser("backtest", help="run the rolling OOS protocol")
    p.add_argument("--options", required=True)
    p.add_argument("--underlying", required=True)
    p.add_argument("--rates", required=True)
    p.add_argument("--algo", required=True,
                   choices=["benchmark", "linear", "ridge", "forest", "fnn"])
    p.add_argument("--mode", required=True, choices=[REG_I, REG_II])
    p.add_argument("--horizon", type=int, default=30)
    p.add_argument("--n-per-side", type=int, default=10, dest="n_per_side")
    p.add_argument("--step-spacing", type=int, default=1, choices=[1, 2],
                   dest="step_spacing")
    p.add_argument("--with-returns-features", action="store_true",
                   dest="with_returns_features")
    p.add_argument("--initial", type=int, default=1000)
    p.add_argument("--step", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--fnn-epochs", type=int, default=2000, dest="fnn_epochs")
    p.add_argument("--fnn-lr", type=float, default=1e-3, dest="fnn_lr")
    p.add_argument("--fnn-batch", type=int, default=32, dest="fnn_batch")
    p.add_argument("--n-trees", type=int, default=100, dest="n_trees")
    p.add_argument("--materiality", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_backtest)

    p = sub.add_parser("weights", help="portfolio weights from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--date", required=True)
    p.add_argument("--options", required=True)
    p.add_argument("--underlying")
    p.add_argument("--rates")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_weights)

    p = sub.add_parser("report", help="render backtest summaries as a table")
    p.add_argument("--dir", required=True)
    p.add_argument("--mode", choices=[REG_I, REG_II])
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (VolindexError, OSError, ValueError) as exc:
        print(f"error: {args.command}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
