"""Command-line experiment runner.

Verbs: ingest, inject, train, eval, sweep, variance. Every output file is a
deterministic function of (config, seed); reruns are byte-identical. Exit
codes: 0 success, 2 configuration error, 3 runtime numeric error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import data as data_mod
from . import noise as noise_mod
from .backbone import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_hash, config_text, load_config, validate_config
from .evaluation import save_metric_table, variance_comparison, variance_order_confidence
from .exceptions import ConfigError, NumericError, ParseError
from .reliability import save_gmm
from .training import TransitionCorrectedClassifier, save_history

SWEEP_AXES = ("lambda", "rho", "noise_rate")


@dataclass
class RunReport:
    config_hash: str
    run_dirs: list
    metric_rows: list  # (variant, metric, k, mean, std)
    matrix_rows: list  # (variant, mean, std)


def _ingest(cfg):
    """Parse, split, and filter per the config; returns (train, val, test_filtered)."""
    schema = data_mod.ColumnSchema(delimiter=cfg.data_delimiter, columns=cfg.data_columns)
    with open(cfg.data_path, "r", encoding="utf-8") as fh:
        ds = data_mod.parse_interactions(fh, schema, cfg.num_classes)
    if len(ds) == 0:
        raise ConfigError("data.path: the input file holds no interactions")
    train, val, test = data_mod.split_dataset(ds, data_mod.SplitSpec(cfg.split_ratios, cfg.split_seed))
    test = data_mod.filter_test_set(test, data_mod.TestFilter(cfg.filter_kind, cfg.filter_threshold))
    return train, val, test


def _maybe_inject(cfg, train, val):
    """Inject synthetic noise into train/validation labels when configured."""
    if cfg.noise_kind == "none":
        return train, val, None
    truth = noise_mod.NoiseSpec(cfg.noise_kind, cfg.noise_eta, cfg.num_classes, cfg.noise_seed).matrix()
    train = train.with_labels(noise_mod.inject_noise(train.labels, truth, cfg.noise_seed))
    if len(val):
        val = val.with_labels(noise_mod.inject_noise(val.labels, truth, cfg.noise_seed + 1))
    return train, val, truth


def _fit_one(cfg, variant, seed, train, val, truth):
    est = TransitionCorrectedClassifier(
        num_classes=cfg.num_classes, embedding_dim=cfg.embedding_dim, epochs=cfg.epochs,
        batch_size=cfg.batch_size, lambda_weight=cfg.lambda_weight, variant=variant,
        lr_class=cfg.lr_class, lr_transition=cfg.lr_transition, optimizer=cfg.optimizer,
        transition_optimizer=cfg.transition_optimizer,
        rho0=cfg.rho0, rho_decay=cfg.gamma, rho_min=cfg.rho_min, tau0=cfg.tau0,
        tau_decay=cfg.tau_gamma, refresh_interval=cfg.refresh_interval,
        sample_by_weight=cfg.sample_by_weight, weight_in_loss=cfg.weight_in_loss,
        include_self_cooccurrence=cfg.include_self, rank_score=cfg.rank_score,
        early_stop_patience=cfg.early_stop_patience, eval_every=cfg.eval_every,
        init_scale=cfg.init_scale, seed=seed,
    )
    X = np.column_stack([train.users, train.items])
    validation = None
    if len(val):
        validation = (np.column_stack([val.users, val.items]), val.labels)
    est.fit(X, train.labels, n_users=train.n_users, n_items=train.n_items,
            validation=validation, true_transition=truth)
    return est


def _test_metrics(cfg, est, train, test):
    from .evaluation import evaluate_ranking

    train_items = train.items_by_user()
    test_items = test.items_by_user()
    metrics, _ = evaluate_ranking(est.predict_proba, est.n_items_, train_items, test_items,
                                  ks=cfg.eval_ks, score_mode=cfg.rank_score)
    rows = []
    for k in cfg.eval_ks:
        rows.append(("recall", k, metrics[("recall", k)]))
        rows.append(("ndcg", k, metrics[("ndcg", k)]))
    if len(test):
        acc = est.score(np.column_stack([test.users, test.items]), test.labels)
    else:
        acc = 0.0
    rows.append(("accuracy", 0, acc))
    return rows


def _write_run_dir(run_dir, cfg, est, metric_rows, truth):
    os.makedirs(run_dir, exist_ok=True)
    save_history(os.path.join(run_dir, "history.csv"), est.history_)
    save_metric_table(os.path.join(run_dir, "metrics.csv"),
                      [(m, k, v, None) for m, k, v in metric_rows])
    with open(os.path.join(run_dir, "matrix_error.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,l1_error\n")
        if truth is not None:
            for r in est.history_:
                if np.isfinite(r.l1_error):
                    fh.write(f"{r.epoch},{repr(r.l1_error)}\n")
    with open(os.path.join(run_dir, "utilization.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,utilization\n")
        for r in est.history_:
            fh.write(f"{r.epoch},{repr(r.utilization)}\n")
    gmm_path = os.path.join(run_dir, "gmm.txt")
    if est.reliability_ is not None:
        save_gmm(gmm_path, est.reliability_.mixture)
    else:
        open(gmm_path, "w", encoding="utf-8").close()
    save_checkpoint(os.path.join(run_dir, "checkpoint.txt"), est.checkpoint_tensors())


def _final_l1(est, truth):
    if truth is None:
        return None
    finite = [r.l1_error for r in est.history_ if np.isfinite(r.l1_error)]
    return finite[-1] if finite else None


def run_experiment(cfg):
    """Ingest, optionally inject noise, train every (variant, seed), evaluate.

    Writes one directory per run plus aggregate tables under cfg.out_dir and
    returns a RunReport.
    """
    validate_config(cfg)
    train, val, test = _ingest(cfg)
    train, val, truth = _maybe_inject(cfg, train, val)
    os.makedirs(cfg.out_dir, exist_ok=True)

    run_dirs, metric_acc, l1_acc, util_acc = [], {}, {}, {}
    for variant in cfg.variants:
        for seed in cfg.seeds:
            est = _fit_one(cfg, variant, seed, train, val, truth)
            metric_rows = _test_metrics(cfg, est, train, test)
            run_dir = os.path.join(cfg.out_dir, f"{variant}_seed{seed}")
            _write_run_dir(run_dir, cfg, est, metric_rows, truth)
            run_dirs.append(run_dir)
            for m, k, v in metric_rows:
                metric_acc.setdefault((variant, m, k), []).append(v)
            l1 = _final_l1(est, truth)
            if l1 is not None:
                l1_acc.setdefault(variant, []).append(l1)
            for r in est.history_:
                util_acc.setdefault((variant, r.epoch), []).append(r.utilization)

    metric_rows = [
        (variant, m, k, float(np.mean(vs)), float(np.std(vs)))
        for (variant, m, k), vs in metric_acc.items()
    ]
    metric_rows.sort(key=lambda r: (r[0], r[1], r[2]))
    with open(os.path.join(cfg.out_dir, "metrics.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,metric,k,mean,std\n")
        for variant, m, k, mean, std in metric_rows:
            fh.write(f"{variant},{m},{k},{repr(mean)},{repr(std)}\n")

    matrix_rows = [
        (variant, float(np.mean(vs)), float(np.std(vs))) for variant, vs in sorted(l1_acc.items())
    ]
    with open(os.path.join(cfg.out_dir, "matrix_error.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,mean,std\n")
        for variant, mean, std in matrix_rows:
            fh.write(f"{variant},{repr(mean)},{repr(std)}\n")

    with open(os.path.join(cfg.out_dir, "utilization.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,epoch,mean\n")
        for (v, epoch), vals in sorted(util_acc.items()):
            fh.write(f"{v},{epoch},{repr(float(np.mean(vals)))}\n")

    digest = config_hash(cfg)
    with open(os.path.join(cfg.out_dir, "config.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_text(cfg))
        fh.write(f"hash = {digest}\n")
    return RunReport(digest, run_dirs, metric_rows, matrix_rows)


def emit_sweep(cfg, axis, values):
    """One full experiment per axis value; aggregates a plottable table."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got '{axis}'")
    base_out = cfg.out_dir
    table = []
    for value in values:
        sub = replace(cfg, out_dir=os.path.join(base_out, f"{axis}_{value:g}"))
        if axis == "lambda":
            sub.lambda_weight = float(value)
        elif axis == "rho":
            sub.rho0 = float(value)
        else:
            sub.noise_eta = float(value)
        report = run_experiment(sub)
        for variant, m, k, mean, std in report.metric_rows:
            table.append((axis, value, variant, m, k, mean, std))
        for variant, mean, std in report.matrix_rows:
            table.append((axis, value, variant, "l1_matrix_error", 0, mean, std))
    os.makedirs(base_out, exist_ok=True)
    with open(os.path.join(base_out, "sweep.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("axis,value,variant,metric,k,mean,std\n")
        for axis_, value, variant, m, k, mean, std in table:
            fh.write(f"{axis_},{value:g},{variant},{m},{k},{repr(mean)},{repr(std)}\n")
    return table


def _cmd_ingest(cfg, out_dir):
    validate_config(cfg)
    train, val, test = _ingest(cfg)
    os.makedirs(out_dir, exist_ok=True)
    data_mod.save_splits(os.path.join(out_dir, "dataset.tsv"), train, val, test)
    with open(os.path.join(out_dir, "ingest_stats.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"users = {train.n_users}\nitems = {train.n_items}\n")
        fh.write(f"train = {len(train)}\nvalidation = {len(val)}\ntest = {len(test)}\n")
    return 0


def _cmd_inject(cfg, out_dir):
    validate_config(cfg)
    if cfg.noise_kind == "none":
        raise ConfigError("noise.kind: must be symmetric or pairflip for inject")
    train, val, test = data_mod.load_splits(cfg.data_path, cfg.num_classes)
    train, val, truth = _maybe_inject(cfg, train, val)
    os.makedirs(out_dir, exist_ok=True)
    data_mod.save_splits(os.path.join(out_dir, "dataset_noisy.tsv"), train, val, test)
    noise_mod.save_matrix(os.path.join(out_dir, "true_matrix.txt"), truth)
    return 0


def _cmd_eval(cfg, checkpoint_path, data_path, out_dir):
    validate_config(cfg, need_data=False)
    tensors = load_checkpoint(checkpoint_path)
    est = TransitionCorrectedClassifier.from_checkpoint(
        tensors, variant=cfg.variants[0], rank_score=cfg.rank_score)
    train, val, test = data_mod.load_splits(data_path, cfg.num_classes)
    test = data_mod.filter_test_set(test, data_mod.TestFilter(cfg.filter_kind, cfg.filter_threshold))
    rows = _test_metrics(cfg, est, train, test)
    os.makedirs(out_dir, exist_ok=True)
    save_metric_table(os.path.join(out_dir, "metrics.csv"), [(m, k, v, None) for m, k, v in rows])
    return 0


def _cmd_variance(cfg, out_dir):
    validate_config(cfg, need_data=False)
    report = variance_comparison(cfg.variance_p, cfg.variance_eta, cfg.variance_trials,
                                 cfg.variance_per_trial, cfg.variance_seed)
    conf = variance_order_confidence(cfg.variance_p, cfg.variance_eta, cfg.variance_trials,
                                     cfg.variance_per_trial, cfg.variance_seed)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "variance.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("var_bltm,var_cltm,ratio,n_trials,n_per_trial,confidence\n")
        fh.write(f"{repr(report.var_bltm)},{repr(report.var_cltm)},{repr(report.ratio)},"
                 f"{report.n_trials},{report.n_per_trial},{repr(conf)}\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="noisyrec",
                                     description="Noise-robust recommendation experiments")
    parser.add_argument("--config", required=True, help="path to a key-value config file")
    parser.add_argument("--seed", type=int, default=None, help="override train.seeds with one seed")
    parser.add_argument("--out", default=None, help="override output.dir")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="parse, split, and filter the raw log")
    sub.add_parser("inject", help="inject synthetic label noise into a canonical dump")
    sub.add_parser("train", help="run the full experiment per config")
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a canonical dump")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_sweep = sub.add_parser("sweep", help="run a one-axis sensitivity sweep")
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    sub.add_parser("variance", help="run the estimator variance comparison")
    return parser


def main(argv=None):
    # global flags may appear before or after the verb
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seeds = (args.seed,)
        if args.out is not None:
            cfg.out_dir = args.out
        if args.command == "ingest":
            return _cmd_ingest(cfg, cfg.out_dir)
        if args.command == "inject":
            return _cmd_inject(cfg, cfg.out_dir)
        if args.command == "train":
            run_experiment(cfg)
            return 0
        if args.command == "eval":
            return _cmd_eval(cfg, args.checkpoint, args.data, cfg.out_dir)
        if args.command == "sweep":
            values = [float(v) for v in args.values.split(",") if v.strip()]
            if not values:
                raise ConfigError("sweep values: none given")
            emit_sweep(cfg, args.axis, values)
            return 0
        if args.command == "variance":
            return _cmd_variance(cfg, cfg.out_dir)
        raise ConfigError(f"unknown command '{args.command}'")
    except (ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
