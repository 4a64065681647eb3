"""Command-line entry points for every experiment the engine supports.

Subcommands: train, sweep-queries, ablate, risk-check, serve, gen-data.
Flags mirror config keys dot-separated (e.g. --train.epochs 80,
--oracle.orientation B); OCC_OUT_DIR overrides the output directory.
Reports are CSV/JSON plus fixed-width text tables, and each report also
renders its matplotlib figure next to the delimited output.
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import figures
from .config import build_synthetic_spec, build_train_config, load_config
from .data import export_scatter, generate_synthetic, load_dataset, save_dataset
from .errors import ConfigError, InputError, OccError
from .nn import forward, save_params
from .oracle import AnnotationStore
from .query import optimal_sampling_distribution, d_p
from .risk import (bernstein_bound, monte_carlo_coverage,
                   monte_carlo_deviations, risk_decomposition, RiskPopulation)
from .trainer import SimulatedOracle, train


def _config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _collect_overrides(extra):
    """Turn leftover ['--a.b', 'v', ...] tokens into an override mapping."""
    overrides = {}
    k = 0
    while k < len(extra):
        tok = extra[k]
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unrecognized argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            k += 1
            if k >= len(extra):
                raise ConfigError(f"override {tok!r} is missing a value")
            value = extra[k]
        overrides[key] = value
        k += 1
    return overrides


def _load(args, extra):
    overrides = _collect_overrides(extra)
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("train.seed", str(args.seed))
        overrides.setdefault("data.seed", str(args.seed))
    cfg = load_config(args.config, overrides)
    if getattr(args, "out", None):
        cfg["output"] = args.out
    return cfg


def _dataset_from_config(cfg):
    if cfg["data"]["path"]:
        return load_dataset(cfg["data"]["path"])
    return generate_synthetic(build_synthetic_spec(cfg))


def _oracle_from_config(cfg, dataset):
    spec = build_synthetic_spec(cfg)
    orientation = {"A": spec.orientation_a, "B": spec.orientation_b}[cfg["oracle"]["orientation"]]
    return SimulatedOracle(dataset, orientation)


def format_metrics_table(final_metrics):
    lines = [f"{'orientation':<12}{'NMI':>8}{'ARI':>8}{'ACC':>8}"]
    for orient in sorted(final_metrics):
        m = final_metrics[orient]
        lines.append(f"{orient:<12}{m['nmi']:>8.3f}{m['ari']:>8.3f}{m['acc']:>8.3f}")
    return "\n".join(lines)


def _write_run_outputs(outdir, cfg, params, record, dataset, store):
    os.makedirs(outdir, exist_ok=True)
    meta = {"config_hash": _config_hash(cfg), "seed": record.seed}
    payload = record.to_dict()
    payload.update(meta)
    with open(os.path.join(outdir, "run.json"), "w") as f:
        json.dump(payload, f, indent=1)
    record.save_query_log(os.path.join(outdir, "query_log.jsonl"))
    save_params(params, os.path.join(outdir, "checkpoint.bin"))
    store.save_jsonl(os.path.join(outdir, "annotations.jsonl"))
    table = format_metrics_table(record.final_metrics)
    with open(os.path.join(outdir, "metrics.txt"), "w") as f:
        f.write(table + "\n")
    zhat = forward(params, dataset.features).zhat
    export_scatter(dataset, zhat, record.final_assignment,
                   os.path.join(outdir, "scatter.csv"))
    rows = list(csv.DictReader(open(os.path.join(outdir, "scatter.csv"))))
    for r in rows:
        r["pc1"], r["pc2"] = float(r["pc1"]), float(r["pc2"])
        r["cluster"] = int(r["cluster"])
    figures.save_scatter(rows, os.path.join(outdir, "scatter.png"))
    figures.save_loss_curves(record.epochs, os.path.join(outdir, "loss_curves.png"))
    if any(r["metrics"] for r in record.epochs):
        figures.save_metric_curves(record.epochs, os.path.join(outdir, "metric_curves.png"))
    return table


def cmd_train(args, extra):
    cfg = _load(args, extra)
    dataset = _dataset_from_config(cfg)
    train_cfg = build_train_config(cfg)
    oracle = _oracle_from_config(cfg, dataset)
    store = AnnotationStore()
    params, record = train(dataset, oracle, train_cfg, store=store)
    table = _write_run_outputs(cfg["output"], cfg, params, record, dataset, store)
    print(table)
    print(f"queries spent: {record.queries_spent} / budget {record.budget_total}")
    print(f"outputs in {cfg['output']}")
    return 0


def cmd_gen_data(args, extra):
    cfg = _load(args, extra)
    dataset = generate_synthetic(build_synthetic_spec(cfg))
    os.makedirs(cfg["output"], exist_ok=True)
    path = os.path.join(cfg["output"], "data.csv")
    save_dataset(dataset, path)
    print(f"wrote {len(dataset)} samples to {path}")
    return 0


def cmd_sweep_queries(args, extra):
    cfg = _load(args, extra)
    budgets = [float(b) for b in args.budgets.split(",")]
    strategies = args.strategies.split(",")
    base_seed = cfg["train"]["seed"]
    dataset = _dataset_from_config(cfg)
    oracle = _oracle_from_config(cfg, dataset)
    orient = cfg["oracle"]["orientation"]
    rows = []
    for strategy in strategies:
        for pct in budgets:
            for s in range(args.seeds):
                train_cfg = build_train_config(cfg)
                train_cfg.strategy = strategy if pct > 0 else "none"
                train_cfg.budget_fraction = pct / 100.0
                train_cfg.seed = base_seed + s
                train_cfg.augment.seed = train_cfg.seed
                _, record = train(dataset, oracle, train_cfg)
                rows.append({"strategy": strategy, "budget_pct": pct,
                             "seed": train_cfg.seed,
                             "acc": record.final_metrics[orient]["acc"],
                             "nmi": record.final_metrics[orient]["nmi"],
                             "queries": record.queries_spent})
                print(f"{strategy:>8} budget {pct:5.1f}% seed {train_cfg.seed}: "
                      f"ACC vs {orient} = {rows[-1]['acc']:.3f} "
                      f"({rows[-1]['queries']} queries)")
    outdir = cfg["output"]
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "sweep.csv")
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["strategy", "budget_pct", "seed",
                                               "acc", "nmi", "queries"])
        writer.writeheader()
        writer.writerows(rows)
    with open(os.path.join(outdir, "sweep.json"), "w") as f:
        json.dump({"config_hash": _config_hash(cfg), "seed": base_seed,
                   "orientation": orient, "rows": rows}, f, indent=1)
    figures.save_query_efficiency(rows, os.path.join(outdir, "query_efficiency.png"))
    print(f"outputs in {outdir}")
    return 0


_SPACE_VARIANTS = (("R+A", True, True), ("R only", True, False), ("A only", False, True))


def cmd_ablate(args, extra):
    cfg = _load(args, extra)
    dataset = _dataset_from_config(cfg)
    spec = build_synthetic_spec(cfg)
    orientations = {"A": spec.orientation_a, "B": spec.orientation_b}
    rows = []
    if args.which == "spaces":
        variants = [(name, {"use_rep_space": r, "use_assign_space": a})
                    for name, r, a in _SPACE_VARIANTS]
    else:
        variants = [("extension on", {"label_extension": True}),
                    ("extension off", {"label_extension": False})]
    for orient_name, orientation in orientations.items():
        oracle = SimulatedOracle(dataset, orientation)
        for variant_name, settings in variants:
            train_cfg = build_train_config(cfg)
            for key, value in settings.items():
                setattr(train_cfg, key, value)
            _, record = train(dataset, oracle, train_cfg)
            m = record.final_metrics[orient_name]
            rows.append({"orientation": orient_name, "variant": variant_name,
                         "nmi": m["nmi"], "ari": m["ari"], "acc": m["acc"],
                         "excluded": ",".join(record.excluded_spaces)})
            print(f"oracle {orient_name} {variant_name:>13}: "
                  f"NMI {m['nmi']:.3f} ARI {m['ari']:.3f} ACC {m['acc']:.3f}")
    outdir = cfg["output"]
    os.makedirs(outdir, exist_ok=True)
    name = f"ablate_{args.which.replace('-', '_')}"
    with open(os.path.join(outdir, f"{name}.csv"), "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["orientation", "variant", "nmi",
                                               "ari", "acc", "excluded"])
        writer.writeheader()
        writer.writerows(rows)
    lines = [f"{'oracle':<8}{'variant':<16}{'NMI':>8}{'ARI':>8}{'ACC':>8}"]
    for r in rows:
        lines.append(f"{r['orientation']:<8}{r['variant']:<16}"
                     f"{r['nmi']:>8.3f}{r['ari']:>8.3f}{r['acc']:>8.3f}")
    table = "\n".join(lines)
    with open(os.path.join(outdir, f"{name}.txt"), "w") as f:
        f.write(table + "\n")
    figures.save_ablation_bars(rows, os.path.join(outdir, f"{name}.png"))
    print(table)
    return 0


def cmd_risk_check(args, extra):
    if args.trials < 1000:
        raise ConfigError(f"trials must be >= 1000, got {args.trials}")
    if not 0.0 < args.delta < 1.0:
        raise ConfigError(f"delta must be in (0, 1), got {args.delta}")
    if args.n < 2:
        raise ConfigError(f"n must be >= 2, got {args.n}")
    rng = np.random.default_rng(args.seed)
    population_losses = rng.uniform(0.0, 1.0, size=args.n * 10)
    target = rng.choice(population_losses, size=args.n, replace=False)
    target = np.maximum(target, 1e-6)  # keep p* strictly positive
    p_star = optimal_sampling_distribution(target)
    uniform = np.full(args.n, 1.0 / args.n)
    pop = RiskPopulation(losses=target, probs=p_star,
                         expected_risk=float(population_losses.mean()))
    q_ref = (rng.random(args.n) < p_star).astype(float)
    a, b, c = risk_decomposition(pop, q_ref)
    bound = bernstein_bound(target, p_star, args.delta)
    deviations = monte_carlo_deviations(target, p_star, args.trials, rng=rng)
    coverage = float((deviations <= bound).mean())
    report = {
        "seed": args.seed, "n": args.n, "delta": args.delta,
        "trials": args.trials,
        "terms": {"A": a, "B": b, "C": c},
        "bound": bound, "coverage": coverage,
        "Dp_star": d_p(target, p_star), "Dp_uniform": d_p(target, uniform),
        "config_hash": _config_hash({"n": args.n, "delta": args.delta,
                                     "trials": args.trials, "seed": args.seed}),
    }
    outdir = args.out or os.environ.get("OCC_OUT_DIR") or "runs/risk"
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "risk_report.json"), "w") as f:
        json.dump(report, f, indent=1)
    with open(os.path.join(outdir, "deviations.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["trial", "deviation"])
        for k, dev in enumerate(deviations):
            writer.writerow([k, repr(float(dev))])
    figures.save_risk_histogram(deviations, bound,
                                os.path.join(outdir, "risk_hist.png"))
    print(json.dumps(report, indent=1))
    return 0


def cmd_serve(args, extra):
    from .service import InteractiveOracle, OracleSession, serve_in_thread

    cfg = _load(args, extra)
    cfg["oracle"]["interactive"] = True
    dataset = _dataset_from_config(cfg)
    session = OracleSession(dataset, timeout=cfg["oracle"]["timeout"])
    server, _ = serve_in_thread(session, host=args.host, port=args.port)
    host, port = server.server_address
    print(f"oracle service listening on http://{host}:{port}")
    train_cfg = build_train_config(cfg)
    store = AnnotationStore()
    try:
        params, record = train(dataset, InteractiveOracle(session), train_cfg,
                               store=store, observer=session)
        table = _write_run_outputs(cfg["output"], cfg, params, record, dataset, store)
        print(table)
    finally:
        server.shutdown()
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="occ",
        description="Oracle-guided contrastive clustering experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None, help="YAML/JSON run config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override train.seed and data.seed")

    p = sub.add_parser("train", help="one full training run")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gen-data", help="write the synthetic dataset to CSV")
    add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("sweep-queries", help="strategy x budget grid")
    add_common(p)
    p.add_argument("--budgets", default="0,5,10,25,100",
                   help="comma-separated budget percentages")
    p.add_argument("--strategies", default="csd,random,entropy")
    p.add_argument("--seeds", type=int, default=1, help="seeds per grid cell")
    p.set_defaults(func=cmd_sweep_queries)

    p = sub.add_parser("ablate", help="contrastive-space or label-extension ablation")
    add_common(p)
    p.add_argument("--which", choices=("spaces", "label-extension"),
                   default="spaces")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("risk-check", help="bound coverage and sampling optimality")
    p.add_argument("--n", type=int, default=50, help="number of target pairs")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_risk_check)

    p = sub.add_parser("serve", help="train with a live human oracle over HTTP")
    add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        return args.func(args, extra)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OccError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
