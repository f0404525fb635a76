"""Command line interface: train | baseline | sweep | eval.

Every command resolves a config (preset -> optional file -> flag
overrides), snapshots it into the output directory, and writes plain CSV
or JSON artifacts for offline plotting. Runs are pure functions of
(config, seed): re-running a command reproduces its files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from simcf import marl
from simcf.baselines import codebook_search, make_codebook
from simcf.harness import metrics as metrics_mod
from simcf.harness.config import (
    ConfigError,
    ExperimentConfig,
    build_env_config,
    config_from_dict,
    config_to_dict,
    load_config,
    save_snapshot,
)
from simcf.marl import EVAL_SEED_BASE, Hyperparams, Trainer
from simcf.neural import load_checkpoint, save_checkpoint
from simcf.neural.nets import GaussianRecurrentActor
from simcf.simenv import SimEnv

TRAIN_METHOD = "mappo_nv"  # recurrent MAPPO with noisy critic inputs
BASELINE_METHOD = "codebook_wf"


def _env_factory(cfg: ExperimentConfig):
    env_cfg = build_env_config(cfg)
    return lambda seed: SimEnv(env_cfg, seed=seed)


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _reward_windows(rows: list[dict], window: int = 20) -> tuple[float, float, int]:
    window = max(1, min(window, len(rows) // 2 or 1))
    first = float(np.mean([r["mean_reward"] for r in rows[:window]]))
    last = float(np.mean([r["mean_reward"] for r in rows[-window:]]))
    return first, last, window


def cmd_train(cfg: ExperimentConfig, out_dir: Path) -> int:
    save_snapshot(cfg, out_dir / "config.yaml")
    trainer = Trainer(_env_factory(cfg), cfg.marl, seed=cfg.run.seed)
    rows = trainer.train()
    metrics_mod.write_metrics_csv(out_dir / "metrics.csv", rows, method=TRAIN_METHOD)
    meta = {
        "method": TRAIN_METHOD,
        "obs_dim": trainer.env.obs_dim,
        "act_dim": trainer.env.act_dim,
        "hidden_dim": cfg.marl.hidden_dim,
        "seed": cfg.run.seed,
    }
    save_checkpoint(out_dir / "checkpoint.npz", trainer.checkpoint_arrays(), meta=meta)
    first, last, window = _reward_windows(rows)
    summary = {
        "method": TRAIN_METHOD,
        "seed": cfg.run.seed,
        "episodes": len(rows),
        "final_sum_se_eval": rows[-1]["sum_se_eval"],
        "mean_reward_first_window": first,
        "mean_reward_last_window": last,
        "window": window,
    }
    _write_json(out_dir / "summary.json", summary)
    print(f"train: {len(rows)} episodes, final eval sum SE "
          f"{rows[-1]['sum_se_eval']:.4f} bit/s/Hz -> {out_dir}")
    return 0


def _held_out_channels(cfg: ExperimentConfig, count: int):
    """The evaluation channel set shared by the policy and the baseline."""
    env = SimEnv(build_env_config(cfg), seed=cfg.run.seed)
    for i in range(count):
        env.reset(seed=EVAL_SEED_BASE + i)
        yield env.h_hat.copy(), env.prop


def cmd_baseline(cfg: ExperimentConfig, out_dir: Path, channels: int | None,
                 codebook_size: int | None) -> int:
    save_snapshot(cfg, out_dir / "config.yaml")
    count = cfg.marl.eval_episodes if channels is None else channels
    size = cfg.baseline.codebook_size if codebook_size is None else codebook_size
    geo = cfg.geometry
    cb = make_codebook(size, agents=cfg.channel.ap_count, layers=geo.layer_count,
                       atoms=geo.atoms_per_layer, seed=cfg.run.seed)
    env_cfg = build_env_config(cfg)
    per_channel = []
    for h_hat, prop in _held_out_channels(cfg, count):
        _, best = codebook_search(h_hat, prop, cb, env_cfg.sigma2_w, env_cfg.p_max_w)
        per_channel.append(best)
    rows = metrics_mod.baseline_rows(per_channel)
    metrics_mod.write_metrics_csv(out_dir / "baseline.csv", rows, method=BASELINE_METHOD)
    mean_se = float(np.mean(per_channel)) if per_channel else float("nan")
    _write_json(out_dir / "baseline_summary.json", {
        "method": BASELINE_METHOD,
        "codebook_size": size,
        "channels": count,
        "mean_sum_se": mean_se,
        "per_channel_sum_se": per_channel,
    })
    print(f"baseline: best-of-{size} codebook + water-filling on {count} channels, "
          f"mean sum SE {mean_se:.4f} bit/s/Hz -> {out_dir}")
    return 0


def _axis_config(cfg: ExperimentConfig, axis: str, value: int) -> ExperimentConfig:
    data = config_to_dict(cfg)
    key = "layer_count" if axis == "layers" else "atoms_per_layer"
    data["geometry"][key] = value
    return config_from_dict(data)


def cmd_sweep(cfg: ExperimentConfig, out_dir: Path, axis: str, values: list[int],
              num_seeds: int, methods: list[str], codebook_size: int | None) -> int:
    # validate the whole grid before any run
    configs = {value: _axis_config(cfg, axis, value) for value in values}
    for m in methods:
        if m not in (BASELINE_METHOD, TRAIN_METHOD):
            raise ConfigError(f"unknown sweep method {m!r}")
    save_snapshot(cfg, out_dir / "config.yaml")
    size = cfg.baseline.codebook_size if codebook_size is None else codebook_size
    rows = []
    for value in values:
        point_cfg = configs[value]
        env_cfg = build_env_config(point_cfg)
        geo = point_cfg.geometry
        for seed in range(num_seeds):
            if BASELINE_METHOD in methods:
                env = SimEnv(env_cfg, seed=seed)
                env.reset(seed=EVAL_SEED_BASE)
                cb = make_codebook(size, agents=point_cfg.channel.ap_count,
                                   layers=geo.layer_count, atoms=geo.atoms_per_layer,
                                   seed=seed)
                _, best = codebook_search(env.h_hat, env.prop,
                                          cb, env_cfg.sigma2_w, env_cfg.p_max_w)
                rows.append({"axis": axis, "axis_value": value,
                             "method": BASELINE_METHOD, "seed": seed, "sum_se": best})
            if TRAIN_METHOD in methods:
                trainer = Trainer(lambda s: SimEnv(env_cfg, seed=s),
                                  point_cfg.marl, seed=seed)
                trainer.train()
                score = trainer.evaluate(episodes=1)  # the shared held-out channel
                rows.append({"axis": axis, "axis_value": value,
                             "method": TRAIN_METHOD, "seed": seed, "sum_se": score})
        print(f"sweep {axis}={value}: done ({num_seeds} seeds)")
    metrics_mod.write_sweep_csv(out_dir / "sweep.csv", rows)
    print(f"sweep: {len(rows)} rows -> {out_dir / 'sweep.csv'}")
    return 0


def _load_actor(checkpoint_path: Path, env: SimEnv, hidden_dim: int
                ) -> GaussianRecurrentActor:
    tensors, meta = load_checkpoint(checkpoint_path)
    expected = {"obs_dim": env.obs_dim, "act_dim": env.act_dim}
    found = {k: meta.get(k) for k in expected}
    if any(expected[k] != found[k] for k in expected):
        raise ConfigError(
            f"checkpoint/config dimension mismatch: expected {expected}, "
            f"checkpoint has {found}")
    actor = GaussianRecurrentActor(
        obs_dim=env.obs_dim, act_dim=env.act_dim,
        hidden_dim=int(meta.get("hidden_dim", hidden_dim)), seed=0)
    actor.params.load_arrays({
        name.removeprefix("actor/"): value
        for name, value in tensors.items() if name.startswith("actor/")})
    return actor


def cmd_eval(cfg: ExperimentConfig, out_dir: Path, checkpoint: Path,
             episodes: int | None) -> int:
    count = cfg.marl.eval_episodes if episodes is None else episodes
    env = SimEnv(build_env_config(cfg), seed=cfg.run.seed)
    if count <= 0:
        warnings.warn("eval requested with zero episodes; writing empty result")
        payload = {"episodes": 0, "mean_sum_se": None, "std_sum_se": None,
                   "per_channel_sum_se": []}
    else:
        actor = _load_actor(checkpoint, env, cfg.marl.hidden_dim)
        per_channel = [marl.evaluate_policy(actor, env, 1,
                                            seed_base=EVAL_SEED_BASE + i)
                       for i in range(count)]
        payload = {
            "episodes": count,
            "mean_sum_se": float(np.mean(per_channel)),
            "std_sum_se": float(np.std(per_channel)),
            "per_channel_sum_se": per_channel,
        }
    _write_json(out_dir / "eval.json", payload)
    if payload["mean_sum_se"] is not None:
        print(f"eval: mean sum SE {payload['mean_sum_se']:.4f} bit/s/Hz over "
              f"{count} channels -> {out_dir / 'eval.json'}")
    else:
        print(f"eval: empty result -> {out_dir / 'eval.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simcf",
        description="Metasurface-stack cell-free downlink simulator: "
                    "multi-agent PPO trainer and codebook baselines.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="YAML config file (overrides the preset)")
        p.add_argument("--preset", choices=("desk", "paper"), default="desk")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", type=Path, default=None, help="override run.out_dir")

    p_train = sub.add_parser("train", help="train the policy, write metrics/checkpoint")
    common(p_train)
    p_train.add_argument("--episodes", type=int, default=None,
                         help="override marl.episodes")

    p_base = sub.add_parser("baseline", help="codebook + water-filling baseline")
    common(p_base)
    p_base.add_argument("--channels", type=int, default=None,
                        help="number of held-out channels (default marl.eval_episodes)")
    p_base.add_argument("--codebook-size", type=int, default=None)

    p_sweep = sub.add_parser("sweep", help="sweep stack layers or atoms per layer")
    common(p_sweep)
    p_sweep.add_argument("--axis", choices=("layers", "atoms"), required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values, e.g. 1,2,4")
    p_sweep.add_argument("--num-seeds", type=int, default=3)
    p_sweep.add_argument("--methods", default=BASELINE_METHOD,
                         help=f"comma-separated: {BASELINE_METHOD},{TRAIN_METHOD}")
    p_sweep.add_argument("--codebook-size", type=int, default=None)

    p_eval = sub.add_parser("eval", help="deterministic policy evaluation")
    common(p_eval)
    p_eval.add_argument("--checkpoint", type=Path, required=True)
    p_eval.add_argument("--episodes", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides: dict = {}
        if args.seed is not None:
            overrides.setdefault("run", {})["seed"] = args.seed
        if args.out is not None:
            overrides.setdefault("run", {})["out_dir"] = str(args.out)
        if getattr(args, "episodes", None) is not None and args.command == "train":
            overrides.setdefault("marl", {})["episodes"] = args.episodes
        cfg = load_config(args.config, preset=args.preset, overrides=overrides)
        out_dir = Path(cfg.run.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        if args.command == "train":
            return cmd_train(cfg, out_dir)
        if args.command == "baseline":
            return cmd_baseline(cfg, out_dir, args.channels, args.codebook_size)
        if args.command == "sweep":
            values = [int(v) for v in args.values.split(",") if v]
            if not values:
                raise ConfigError("sweep needs at least one axis value")
            methods = [m.strip() for m in args.methods.split(",") if m.strip()]
            return cmd_sweep(cfg, out_dir, args.axis, values, args.num_seeds,
                             methods, args.codebook_size)
        if args.command == "eval":
            return cmd_eval(cfg, out_dir, args.checkpoint, args.episodes)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
