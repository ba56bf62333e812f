"""Command-line entry points wiring the whole pipeline.

Subcommands: gen-demos, train-constraints, train-rl, ceres, eval, serve.
Every run writes its exact config into the output directory, and a fixed
seed makes single-process runs bit-for-bit reproducible.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import mlp, ppo
from .ceres import (
    CeresConfig,
    METRIC_FIELDS,
    activation_probability,
    ceres_loop,
    sample,
)
from .constraint_net import (
    ConstraintTrainConfig,
    init_constraint_net,
    train_constraints,
)
from .demos import build_scripted_dataset, load_demos, save_demos
from .envs import EnvConfig, NavigationEnv
from .geometry import ActionBox


def _action_box(config):
    return ActionBox.symmetric(config.action_half_range, 2)


def _load_env_config(path):
    return EnvConfig.from_json(path) if path else EnvConfig()


def _prepare_run_dir(args, env_config):
    os.makedirs(args.out, exist_ok=True)
    snapshot = {
        "command": args.command,
        "seed": args.seed,
        "env_config": json.loads(json.dumps(env_config.__dict__, default=list)),
    }
    for key, value in vars(args).items():
        if key not in ("func",):
            snapshot.setdefault("args", {})[key] = value
    with open(os.path.join(args.out, "config.json"), "w") as f:
        json.dump(snapshot, f, indent=2, default=str)


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k]
                             for k in METRIC_FIELDS})


def cmd_gen_demos(args):
    env_config = _load_env_config(args.env_config)
    if env_config.control_mode != "position" or env_config.obstacle_mode != "maze":
        raise SystemExit("gen-demos requires the position-controlled static maze")
    _prepare_run_dir(args, env_config)
    env = NavigationEnv(env_config, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    records = build_scripted_dataset(
        env, args.trajectories, rng,
        samples_per_state=args.samples_per_state,
        target_ratio=args.target_ratio,
    )
    path = os.path.join(args.out, "demos.jsonl")
    counts = save_demos(records, path, env_config.config_hash(),
                        env_config.n_obs_full, 2)
    print(f"wrote {path}: {counts['positive']} positive, {counts['negative']} negative")


def cmd_train_constraints(args):
    env_config = _load_env_config(args.env_config)
    _prepare_run_dir(args, env_config)
    records, header = load_demos(args.demos)
    box = _action_box(env_config)
    rng = np.random.default_rng(args.seed)
    net = init_constraint_net(rng, header["n_obs"], args.n_in, 2)
    config = ConstraintTrainConfig(epochs=args.epochs, n_in=args.n_in)
    demos = [r.to_labeled() for r in records]
    net, history = train_constraints(net, demos, config, box, rng, lr=args.lr)
    ckpt = os.path.join(args.out, "constraints.json")
    mlp.save_checkpoint(ckpt, net, extra={
        "n_in": args.n_in, "n_obs": header["n_obs"], "n_act": 2,
        "config_hash": header["config_hash"],
    })
    with open(os.path.join(args.out, "constraint_history.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss", "accuracy"])
        for i, (loss, acc) in enumerate(zip(history["loss"], history["accuracy"]), 1):
            writer.writerow([i, repr(loss), repr(acc)])
    print(f"final separation accuracy: {history['accuracy'][-1]:.4f}")
    print(f"wrote {ckpt}")


def _train_rl(env_config, seed, iterations, steps_per_iter, constraints_path, out,
              activation=None):
    """Shared PPO harness for the vanilla and constraint-guided variants."""
    box = _action_box(env_config)
    rng = np.random.default_rng(seed)
    env = NavigationEnv(env_config, seed=seed)
    policy = ppo.init_policy(rng, env_config.n_obs, 2)
    value_net = ppo.init_value_net(rng, env_config.n_obs)
    ppo_config = ppo.PpoConfig(horizon=steps_per_iter)
    cnet, n_in, act_prob = None, 2, 0.0
    if constraints_path:
        cnet, extra = mlp.load_checkpoint(constraints_path)
        n_in = extra["n_in"]
        act_prob = activation if activation is not None else 1.0
    adam_p = mlp.AdamState.for_params(policy.net, lr=ppo_config.policy_lr)
    adam_v = mlp.AdamState.for_params(value_net, lr=ppo_config.value_lr)
    metrics = []
    env_steps = 0
    for it in range(1, iterations + 1):
        batch, _, _, _, stats = sample(
            env, policy, value_net, cnet, box, n_in, act_prob, rng,
            steps_per_iter,
        )
        env_steps += len(batch)
        ppo.update_policy(policy, value_net, batch, ppo_config, adam_p, adam_v, rng)
        metrics.append({
            "iteration": it, "env_steps": env_steps,
            "mean_reward": stats["mean_reward"],
            "success_rate": stats["success_rate"],
            "failure_rate": stats["failure_rate"],
            "mean_ep_len": stats["mean_ep_len"],
            "activation_prob": act_prob,
            "constraint_loss": float("nan"),
            "constraint_accuracy": float("nan"),
        })
    return policy, value_net, metrics


def cmd_train_rl(args):
    env_config = _load_env_config(args.env_config)
    _prepare_run_dir(args, env_config)
    policy, value_net, metrics = _train_rl(
        env_config, args.seed, args.iterations, args.steps_per_iter,
        args.constraints, args.out,
    )
    write_metrics_csv(os.path.join(args.out, "metrics.csv"), metrics)
    mlp.save_checkpoint(os.path.join(args.out, "policy.json"), policy.net,
                        extra={"log_std": policy.log_std.tolist()})
    mlp.save_checkpoint(os.path.join(args.out, "value.json"), value_net)
    print(f"final mean reward: {metrics[-1]['mean_reward']:.3f}")


def cmd_ceres(args):
    env_config = _load_env_config(args.env_config)
    _prepare_run_dir(args, env_config)
    box = _action_box(env_config)
    rng = np.random.default_rng(args.seed)
    env_d = NavigationEnv(env_config, seed=args.seed)
    env_r = NavigationEnv(env_config, seed=args.seed + 1)
    policy_d = ppo.init_policy(rng, env_config.n_obs, 2)
    policy_r = ppo.init_policy(rng, env_config.n_obs_full, 2)
    value_d = ppo.init_value_net(rng, env_config.n_obs)
    value_r = ppo.init_value_net(rng, env_config.n_obs_full)
    config = CeresConfig(
        n_s=args.n_s, n_a=args.n_a, n_iter=args.iterations,
        steps_per_iter=args.steps_per_iter,
        recovery_steps_per_iter=args.steps_per_iter,
    )
    cnet = init_constraint_net(rng, env_config.n_obs_full, config.n_in, 2)
    ppo_config = ppo.PpoConfig(horizon=args.steps_per_iter)
    policy_d, policy_r, cnet, metrics, buffer = ceres_loop(
        env_d, env_r, policy_d, policy_r, cnet, value_d, value_r,
        box, config, ppo_config, rng,
    )
    write_metrics_csv(os.path.join(args.out, "metrics.csv"), metrics)
    mlp.save_checkpoint(os.path.join(args.out, "policy_direct.json"), policy_d.net,
                        extra={"log_std": policy_d.log_std.tolist()})
    mlp.save_checkpoint(os.path.join(args.out, "policy_recovery.json"), policy_r.net,
                        extra={"log_std": policy_r.log_std.tolist()})
    mlp.save_checkpoint(os.path.join(args.out, "constraints.json"), cnet,
                        extra={"n_in": config.n_in, "n_obs": env_config.n_obs_full,
                               "n_act": 2})
    save_demos(buffer.records, os.path.join(args.out, "buffer.jsonl"),
               env_config.config_hash(), env_config.n_obs_full, 2)
    print(f"final failure rate: {metrics[-1]['failure_rate']:.3f}")


def cmd_eval(args):
    env_config = _load_env_config(args.env_config)
    _prepare_run_dir(args, env_config)
    rng = np.random.default_rng(args.seed)
    env = NavigationEnv(env_config, seed=args.seed)
    if args.policy:
        net, extra = mlp.load_checkpoint(args.policy)
        policy = ppo.GaussianPolicy(net, np.array(extra["log_std"]))
    else:
        policy = ppo.init_policy(rng, env_config.n_obs, 2)
    returns, fails, succs, lens = [], 0, 0, []
    for ep in range(args.episodes):
        obs = env.reset(seed=args.seed + ep)
        total, steps = 0.0, 0
        while True:
            action, _ = ppo.sample_action(policy, obs, rng)
            result = env.step(action)
            total += result.reward
            steps += 1
            obs = result.observation
            if result.end:
                fails += int(result.info["failure"])
                succs += int(result.info["success"])
                break
        returns.append(total)
        lens.append(steps)
    summary = {
        "episodes": args.episodes,
        "mean_reward": float(np.mean(returns)),
        "success_rate": succs / args.episodes,
        "failure_rate": fails / args.episodes,
        "mean_ep_len": float(np.mean(lens)),
    }
    with open(os.path.join(args.out, "eval.json"), "w") as f:
        json.dump(summary, f, indent=2)
    print(json.dumps(summary, indent=2))
    return summary


def cmd_serve(args):
    from .serve import run_server
    env_config = _load_env_config(args.env_config)
    run_server(env_config, host=args.host, port=args.port, seed=args.seed,
               constraints_path=args.constraints, out_dir=args.out)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ceres-rl",
        description="Constrained RL with learned action-space constraints",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--env-config", default=None, help="EnvConfig JSON path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="runs/latest", help="output directory")

    p = sub.add_parser("gen-demos", help="scripted maze demonstration dataset")
    common(p)
    p.add_argument("--trajectories", type=int, default=500)
    p.add_argument("--samples-per-state", type=int, default=16)
    p.add_argument("--target-ratio", type=float, default=None,
                   help="subsample negatives to this ratio vs positives")
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("train-constraints", help="supervised constraint training")
    common(p)
    p.add_argument("--demos", required=True, help="demo JSONL path")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--n-in", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_train_constraints)

    p = sub.add_parser("train-rl", help="PPO, optionally constraint-guided")
    common(p)
    p.add_argument("--constraints", default=None,
                   help="constraint checkpoint (omit for vanilla PPO)")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--steps-per-iter", type=int, default=2048)
    p.set_defaults(func=cmd_train_rl)

    p = sub.add_parser("ceres", help="full dual-policy constraint discovery")
    common(p)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--steps-per-iter", type=int, default=1024)
    p.add_argument("--n-s", type=int, default=10)
    p.add_argument("--n-a", type=int, default=3)
    p.set_defaults(func=cmd_ceres)

    p = sub.add_parser("eval", help="seeded policy evaluation")
    common(p)
    p.add_argument("--policy", default=None, help="policy checkpoint")
    p.add_argument("--episodes", type=int, default=100)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="websocket session for the browser UI")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--constraints", default=None,
                   help="constraint checkpoint for the polytope overlay")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (FileNotFoundError, ValueError, SystemExit) as e:
        if isinstance(e, SystemExit):
            raise
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
