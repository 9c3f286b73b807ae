"""Command-line entry point: ``linkcorr <command> ...``.

Commands: synth, estimate, diagnose, forecast, ingest. Link ranges on the
command line are 1-based and inclusive (``--observe 1-11``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import analytics, forecast, ingest, synthetic
from .gaussian import GaussianParams, cov_to_corr, matrix_from_json, save_matrix
from .gibbs import GibbsConfig, load_chain, posterior_mean_corr, run_gibbs, save_chain
from .niw import NIWParams, default_prior
from .observation import read_observations, write_observations

log = logging.getLogger("linkcorr")


def parse_links(text: str) -> list[int]:
    """``"1-3,7"`` -> ``[0, 1, 2, 6]`` (1-based inclusive ranges in, 0-based out)."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, _, hi = part.partition("-")
        a, b = int(lo), int(hi or lo)
        if a < 1 or b < a:
            raise ValueError(f"bad link range {part!r}")
        out.extend(range(a - 1, b))
    if len(set(out)) != len(out):
        raise ValueError(f"repeated links in {text!r}")
    return out


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    cfg = json.loads(Path(path).read_text())
    unknown = set(cfg) - {"prior", "gibbs", "periods", "rope"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _gibbs_config(args, cfg: dict) -> GibbsConfig:
    values = dict(cfg.get("gibbs", {}))
    allowed = {f.name for f in fields(GibbsConfig)}
    bad = set(values) - allowed
    if bad:
        raise ValueError(f"unknown gibbs settings: {sorted(bad)}")
    for name in ("k1", "k2", "thin", "workers"):
        if getattr(args, name, None) is not None:
            values[name] = getattr(args, name)
    values["seed"] = args.seed
    return GibbsConfig(**values)


def _prior(cfg: dict, n: int) -> NIWParams:
    d = cfg.get("prior")
    if not d:
        return default_prior(n)
    base = default_prior(n)
    return NIWParams(
        np.asarray(d.get("mu0", base.mu0), dtype=float),
        float(d.get("lambda0", base.lambda0)),
        np.asarray(d.get("psi0", base.psi0), dtype=float),
        float(d.get("nu0", base.nu0)),
    )


def _rope(cfg: dict) -> dict:
    d = cfg.get("rope", {})
    return {
        "rope": (float(d.get("low", analytics.ROPE[0])), float(d.get("high", analytics.ROPE[1]))),
        "reject_threshold": float(d.get("reject", analytics.REJECT_THRESHOLD)),
        "accept_threshold": float(d.get("accept", analytics.ACCEPT_THRESHOLD)),
    }


def _observations_path(data: Path, period: str | None) -> Path:
    if data.is_file():
        if period:
            raise ValueError("--period needs a data directory, not a single file")
        return data
    name = f"observations_{period}.jsonl" if period else "observations.jsonl"
    path = data / name
    if not path.exists():
        raise FileNotFoundError(f"{path} not found")
    return path


# -- commands --------------------------------------------------------------

def cmd_synth(args, cfg) -> dict:
    spec_d = json.loads(Path(args.spec).read_text()) if args.spec else {}
    spec, mean, design = synthetic.spec_from_dict(spec_d)
    ds = synthetic.generate_dataset(spec, mean, design, np.random.default_rng(args.seed))
    out = Path(args.out)
    ds.save(out)
    return {"out": str(out), "observations": len(ds.observations), "n_links": spec.n_links,
            "kinds": {k: ds.kinds.count(k) for k in sorted(set(ds.kinds))}}


def cmd_estimate(args, cfg) -> dict:
    path = _observations_path(Path(args.data), args.period)
    obs = read_observations(path)
    if args.kinds:
        keep = set(args.kinds.split(","))
        obs = [o for o in obs if o.kind in keep]
    if not obs:
        raise ValueError(f"no observations to estimate from in {path}")
    n = obs[0].n
    if any(o.n != n for o in obs):
        raise ValueError("observations disagree on the number of links")
    config = _gibbs_config(args, cfg)
    prior = _prior(cfg, n)
    chain = run_gibbs(obs, prior, config)
    save_chain(chain, args.out)
    # extra chains (seeds seed+1, seed+2, ...) only feed convergence diagnostics
    for c in range(1, args.chains):
        extra = run_gibbs(obs, prior, replace(config, seed=config.seed + c))
        save_chain(extra, Path(args.out) / "extra" / f"chain-{c}")
    return {"out": str(args.out), "observations": len(obs), "n_links": n, "samples": len(chain),
            "chains": args.chains, "config": asdict(config)}


def _truth(path: Path) -> GaussianParams:
    d = json.loads(path.read_text())
    return GaussianParams(np.asarray(d["mean"], dtype=float), matrix_from_json(d["cov"]))


def cmd_diagnose(args, cfg) -> dict:
    dirs = [Path(p) for p in args.chain]
    dirs += sorted((dirs[0] / "extra").glob("chain-*")) if len(dirs) == 1 else []
    chains = [load_chain(p) for p in dirs]
    chain = chains[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rope = _rope(cfg)
    decisions = analytics.chain_decisions(chain.corr_samples, level=args.level, **rope)
    analytics.write_decisions(decisions, out / "decisions.csv")
    corr = posterior_mean_corr(chain)
    save_matrix(corr, out / "corr_mean.csv")
    save_matrix(analytics.threshold_display(corr, decisions), out / "corr_thresholded.csv")
    est = chain.posterior_mean()
    save_matrix(est.cov, out / "cov_mean.csv")
    summary = {
        "samples": len(chain),
        "verdicts": {v: sum(d.verdict == v for d in decisions)
                     for v in (analytics.REJECT, analytics.ACCEPT, analytics.UNDECIDED)},
        "mean": [float(v) for v in est.mean],
    }
    if len(chains) > 1:
        k = min(len(c) for c in chains)
        stacked = np.stack([np.concatenate([c.mean_samples[:k], c.cov_samples[:k].reshape(k, -1)], axis=1)
                            for c in chains])
        rhat = analytics.split_rhat(stacked)
        summary["split_rhat_max"] = float(np.nanmax(rhat))
    truth_path = Path(args.truth) if args.truth else None
    if truth_path is None and args.data and (Path(args.data) / "truth.json").exists():
        truth_path = Path(args.data) / "truth.json"
    if truth_path is not None:
        truth = _truth(truth_path)
        summary["kl"] = analytics.kl_gaussian(truth, est)
        summary["misclassification"] = analytics.misclassification_rate(
            analytics.threshold_display(corr, decisions),
            analytics.threshold_truth(cov_to_corr(truth.cov), rope["rope"]))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def _read_rows(path: Path, observed: list[int], n: int) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not any(c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1:
                    continue   # header
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
            if len(vals) == n:
                vals = [vals[j] for j in observed]
            elif len(vals) != len(observed):
                raise ValueError(f"{path}:{lineno}: expected {len(observed)} or {n} values, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no input rows")
    return np.asarray(rows)


def cmd_forecast(args, cfg) -> dict:
    chain = load_chain(args.chain)
    observed, predict = parse_links(args.observe), parse_links(args.predict)
    bad = [j + 1 for j in observed + predict if j >= chain.n]
    if bad:
        raise ValueError(f"links {bad} exceed the chain's {chain.n} links")
    rows = _read_rows(Path(args.input), observed, chain.n)
    rng = np.random.default_rng(args.seed)
    link_out, trip_out = [], []
    for k, vals in enumerate(rows, start=1):
        fc = forecast.forecast_links(chain, observed, vals, predict, mode=args.mode, rng=rng)
        link_out.append((k, fc))
        if args.trip_out:
            trips = [forecast.forecast_trip(chain, observed, vals, predict[:m], mode=args.mode, rng=rng)
                     for m in range(1, len(predict) + 1)]
            trip_out.append((k, trips))
    forecast.write_link_forecasts(link_out, args.out)
    if args.trip_out:
        forecast.write_trip_forecasts(trip_out, args.trip_out)
    return {"out": str(args.out), "rows": len(rows), "observed": [j + 1 for j in observed],
            "predicted": [j + 1 for j in predict], "mode": args.mode}


def cmd_ingest(args, cfg) -> dict:
    rejects: list[ingest.Reject] = []
    events = ingest.parse_events(args.events, rejects)
    geometry = ingest.load_geometry(args.geometry)
    periods = ingest.PeriodSpec.from_dict(cfg["periods"]) if "periods" in cfg else ingest.PeriodSpec()
    by_period, report = ingest.events_to_observations(
        events, geometry, periods, max_ragged_span=args.max_ragged_span, period_key=args.period_key)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, obs in by_period.items():
        write_observations(obs, out / f"observations_{name}.jsonl")
    write_observations([o for obs in by_period.values() for o in obs], out / "observations.jsonl")
    with open(out / "rejects.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line", "reason"])
        w.writerows((r.line, r.reason) for r in rejects)
    summary = {"events": len(events), "rejected_rows": len(rejects), **report.to_dict()}
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--json", action="store_true", help="print a JSON summary to stdout")
    common.add_argument("--config", help="JSON file with prior, gibbs, periods and rope sections")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="linkcorr", description="Link travel-time correlation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--spec", help="synthetic spec JSON (defaults to the 18-link benchmark)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("estimate", parents=[common], help="run the Gibbs sampler")
    s.add_argument("--data", required=True, help="observations file or directory")
    s.add_argument("--period", help="use observations_<period>.jsonl from the data directory")
    s.add_argument("--kinds", help="comma list of observation kinds to keep: full,ragged,missing")
    s.add_argument("--k1", type=int)
    s.add_argument("--k2", type=int)
    s.add_argument("--thin", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--chains", type=int, default=1,
                   help="independent chains; extras go to OUT/extra and feed split-R-hat in diagnose")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("diagnose", parents=[common], help="posterior summaries of a chain")
    s.add_argument("--chain", required=True, nargs="+",
                   help="chain directories; several (or one with an extra/ folder) enable split-R-hat")
    s.add_argument("--out", required=True)
    s.add_argument("--truth", help="truth.json with mean and cov")
    s.add_argument("--data", help="synthetic data directory (its truth.json is used if present)")
    s.add_argument("--level", type=float, default=0.95)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("forecast", parents=[common], help="forecast unobserved links")
    s.add_argument("--chain", required=True)
    s.add_argument("--observe", required=True, help="1-based observed links, e.g. 1-11")
    s.add_argument("--predict", required=True, help="1-based links to forecast, e.g. 12-18")
    s.add_argument("--input", required=True, help="CSV of observed values, one bus per row")
    s.add_argument("--out", required=True)
    s.add_argument("--trip-out", help="also write cumulative trip forecasts here")
    s.add_argument("--mode", choices=("mix", "plugin"), default="mix")
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("ingest", parents=[common], help="turn stop events into observations")
    s.add_argument("--events", required=True)
    s.add_argument("--geometry", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--max-ragged-span", type=int, default=3)
    s.add_argument("--period-key", choices=("first_link", "trip_start"), default="first_link")
    s.set_defaults(func=cmd_ingest)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        summary = args.func(args, cfg)
    except Exception as exc:  # noqa: BLE001 - report and exit non-zero
        print(f"linkcorr {args.command}: error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
