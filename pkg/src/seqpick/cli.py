"""Command-line harness.

Subcommands: collect-expert, train, eval, verify-theory. Exit codes:
0 success, 2 config error, 3 missing input, 4 certification violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import agents, divergence, plots, ursfo
from . import env as envmod
from .config import ConfigError, ExperimentConfig
from .datasets import Dataset
from .nn import Network, q_network

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_VIOLATION = 4


def _parse_seeds(text):
    return [int(s) for s in text.split(",") if s.strip() != ""]


def _prepare_out(out_dir, cfg):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as fh:
        json.dump(cfg.resolved(), fh, indent=2, sort_keys=True)


def cmd_collect_expert(cfg, out_dir):
    _prepare_out(out_dir, cfg)
    exp = cfg.expert
    dataset = envmod.collect_expert(cfg.scene, exp["n_episodes"],
                                    noise_std=exp["noise_std"],
                                    include_actions=exp["include_actions"])
    path = os.path.join(out_dir, "expert_dataset.bin")
    dataset.save(path)
    manifest = {
        "dataset": path,
        "n_episodes": dataset.n_episodes,
        "include_actions": dataset.include_actions,
        "n_records": dataset.n_records(),
        "n_state_pairs": len(dataset.state_pairs()),
        "expert_successes": dataset.header["expert_successes"],
        "expert_steps": dataset.header["expert_steps"],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(json.dumps(manifest, sort_keys=True))
    return EXIT_OK


def _load_dataset(cfg):
    path = cfg.expert["dataset"]
    if not path or not os.path.exists(path):
        raise FileNotFoundError(f"expert dataset not found: {path!r}")
    return Dataset.load(path)


def _train_one_seed(args):
    algo, resolved_doc, seed, out_dir = args
    cfg = ExperimentConfig(resolved_doc)
    metrics_path = os.path.join(out_dir, f"metrics_seed{seed}.csv")
    ckpt_path = os.path.join(out_dir, f"checkpoint_seed{seed}.bin")
    if algo == "dql":
        net, rows = agents.run_dql(cfg.scene, cfg.dql, seed,
                                   metrics_path=metrics_path)
    elif algo == "ursfo":
        dataset = _load_dataset(cfg)
        disc_log = os.path.join(out_dir, f"disc_loss_seed{seed}.csv")
        net, rows, _ = ursfo.ursfo_train(cfg.scene, dataset, cfg.dql,
                                         cfg.shaping, seed,
                                         metrics_path=metrics_path,
                                         disc_log_path=disc_log)
    else:  # bc
        dataset = _load_dataset(cfg)
        h, w = cfg.scene.obs_hw
        net = q_network((h, w), seed=(seed, 0))
        net, losses = agents.bc_train(dataset, net, cfg.bc["steps"],
                                      learning_rate=cfg.bc["learning_rate"],
                                      seed=seed)
        success, mean_return = agents.evaluate(net, cfg.scene,
                                               n_scenes=cfg.dql.n_final_eval_scenes)
        rows = [{"step": cfg.bc["steps"], "eval_return": mean_return,
                 "eval_success_percent": success, "loss": losses[-1] if losses else "",
                 "epsilon": "", "lambda2": ""}]
        agents.write_metrics(metrics_path, rows)
        plots.save_loss_curve(losses, os.path.join(out_dir, f"bc_loss_seed{seed}.png"))
    net.save(ckpt_path)
    return seed, rows


def cmd_train(cfg, algo, out_dir, parallel=True):
    _prepare_out(out_dir, cfg)
    if algo in ("bc", "ursfo"):
        _load_dataset(cfg)  # fail fast (exit 3) before spawning workers
    resolved = cfg.resolved()
    jobs = [(algo, resolved, seed, out_dir) for seed in cfg.seeds]
    if parallel and len(jobs) > 1:
        workers = min(len(jobs), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_one_seed, jobs))
    else:
        results = [_train_one_seed(job) for job in jobs]
    results.sort(key=lambda item: item[0])

    finals = {"eval_return": [], "eval_success_percent": []}
    metrics_by_seed = {}
    for seed, rows in results:
        metrics_by_seed[seed] = rows
        last = rows[-1]
        finals["eval_return"].append(float(last["eval_return"]))
        finals["eval_success_percent"].append(float(last["eval_success_percent"]))
    summary = {
        "algo": algo,
        "seeds": cfg.seeds,
        "final_eval_return_mean": float(np.mean(finals["eval_return"])),
        "final_eval_return_std": float(np.std(finals["eval_return"])),
        "final_success_percent_mean": float(np.mean(finals["eval_success_percent"])),
        "final_success_percent_std": float(np.std(finals["eval_success_percent"])),
        "per_seed_final_eval_return": finals["eval_return"],
        "per_seed_final_success_percent": finals["eval_success_percent"],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    if algo in ("dql", "ursfo"):
        plots.save_learning_curves(metrics_by_seed,
                                   os.path.join(out_dir, "curves.png"))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eval(cfg, checkpoint, out_dir):
    if not checkpoint or not os.path.exists(checkpoint):
        raise FileNotFoundError(f"checkpoint not found: {checkpoint!r}")
    net = Network.load(checkpoint)
    success, mean_return = agents.evaluate(net, cfg.scene,
                                           n_scenes=cfg.dql.n_final_eval_scenes)
    report = {"checkpoint": checkpoint, "n_scenes": cfg.dql.n_final_eval_scenes,
              "success_percent": success, "mean_return": mean_return}
    if out_dir:
        _prepare_out(out_dir, cfg)
        with open(os.path.join(out_dir, "eval_report.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_verify_theory(cfg, out_dir):
    t = cfg.theory
    report = divergence.certify(n_instances=t["n_instances"], seed=t["seed"],
                                max_states=t["max_states"],
                                max_actions=t["max_actions"],
                                gammas=tuple(t["gammas"]),
                                n_pinsker=t["n_pinsker"], n_lsgan=t["n_lsgan"])
    slacks = report.pop("slacks")
    if out_dir:
        _prepare_out(out_dir, cfg)
        with open(os.path.join(out_dir, "theory_report.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        finite = [s for s in slacks if np.isfinite(s)]
        plots.save_slack_histogram(finite, os.path.join(out_dir, "slack_hist.png"))
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK if report["ok"] else EXIT_VIOLATION


def build_parser():
    parser = argparse.ArgumentParser(prog="seqpick")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("collect-expert", "train", "eval", "verify-theory"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--out", default="runs/out", help="output directory")
        p.add_argument("--seeds", default=None, help="comma-separated seed list")
        if name == "train":
            p.add_argument("--algo", required=True, choices=["bc", "dql", "ursfo"])
            p.add_argument("--serial", action="store_true",
                           help="run seeds sequentially")
        if name == "eval":
            p.add_argument("--checkpoint", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            if not os.path.exists(args.config):
                print(f"error: config file not found: {args.config}", file=sys.stderr)
                return EXIT_MISSING
            cfg = ExperimentConfig.from_file(args.config)
        else:
            cfg = ExperimentConfig({})
        if args.seeds is not None:
            cfg.seeds = _parse_seeds(args.seeds)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "collect-expert":
            return cmd_collect_expert(cfg, args.out)
        if args.command == "train":
            return cmd_train(cfg, args.algo, args.out, parallel=not args.serial)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.out)
        return cmd_verify_theory(cfg, args.out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
