"""Command-line entry points: train, eval, sweep, serve.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .bench import BenchConfig, UsageError, run_experiment, run_sweep
from .pipeline import PipelineConfig, RewardSpec
from .qnet import TrainerConfig


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", help="CSV path; omit to use synthetic data")
    parser.add_argument("--format", choices=["cmu", "generic"], default="cmu",
                        dest="data_format")
    parser.add_argument("--label-column", default="label",
                        help="label column for --format generic")
    parser.add_argument("--expect-cmu-shape", action="store_true",
                        help="enforce the public keystroke table's 20400x51 shape")
    parser.add_argument("--mode", choices=["rltir-oracle", "rltir-interactive",
                                           "nofeed"], default="rltir-oracle")
    parser.add_argument("--enrolled-fraction", type=float, default=1.0)
    parser.add_argument("--trees", type=int, default=30, metavar="M")
    parser.add_argument("--max-depth", type=int, default=9)
    parser.add_argument("--min-depth", type=int, default=1)
    parser.add_argument("--terminal-depth", type=int, default=4)
    parser.add_argument("--beta", type=float, default=0.1)
    parser.add_argument("--gate", type=float, default=0.35)
    parser.add_argument("--sigma", type=float, default=0.5)
    parser.add_argument("--gamma", type=float, default=0.9)
    parser.add_argument("--alpha", type=float, default=0.01)
    parser.add_argument("--replace-step", type=int, default=200)
    parser.add_argument("--h1", type=int, default=32)
    parser.add_argument("--h2", type=int, default=32)
    parser.add_argument("--h3", type=int, default=16)
    parser.add_argument("--head", choices=["softmax", "linear"], default="softmax")
    parser.add_argument("--phi", type=int, default=250)
    parser.add_argument("--rho", type=float, default=0.3)
    parser.add_argument("--logistic-scale", choices=["paper", "standard"],
                        default="paper")
    parser.add_argument("--epsilon-start", type=float, default=0.1)
    parser.add_argument("--epsilon-end", type=float, default=0.02)
    parser.add_argument("--epsilon-decay", type=float, default=0.95)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--report", metavar="path.json")
    parser.add_argument("--series", metavar="path.csv")
    parser.add_argument("--audit", metavar="path.jsonl",
                        help="write per-instance outcome records")


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        trees=args.trees,
        max_depth=args.max_depth,
        min_depth=args.min_depth,
        terminal_depth=args.terminal_depth,
        beta=args.beta,
        gate=args.gate,
        phi=args.phi,
        rho=args.rho,
        logistic_scale=args.logistic_scale,
        reward=RewardSpec(sigma=args.sigma),
        trainer=TrainerConfig(
            gamma=args.gamma, alpha=args.alpha, replace_step=args.replace_step,
            epsilon_start=args.epsilon_start, epsilon_end=args.epsilon_end,
            epsilon_decay=args.epsilon_decay, h1=args.h1, h2=args.h2, h3=args.h3,
            head=args.head,
        ),
    )


def _bench_config(args) -> BenchConfig:
    return BenchConfig(
        mode=args.mode,
        dataset=args.dataset,
        data_format=args.data_format,
        label_column=args.label_column,
        enrolled_fraction=args.enrolled_fraction,
        reps=args.reps,
        seed=args.seed,
        expect_cmu_shape=args.expect_cmu_shape,
        pipeline=_pipeline_config(args),
    )


def _cmd_train(args) -> int:
    import numpy as np

    from .bench import load_instances
    from .data import make_split
    from .persist import save_registry
    from .pipeline import UserRegistry

    config = _bench_config(args)
    instances = load_instances(config)
    plan = make_split(instances, enrolled_fraction=args.enrolled_fraction,
                      seed=args.seed)
    registry = UserRegistry(config.pipeline, seed=args.seed)
    for user_id in plan.enrolled_initially:
        split = plan.users[user_id]
        genuine = np.stack([i.features for i in split.train_genuine])
        impostor = (np.stack([i.features for i in split.train_impostor])
                    if split.train_impostor else np.empty((0, genuine.shape[1])))
        registry.enroll(user_id, genuine, impostor)
        print(f"enrolled {user_id}: threshold_y="
              f"{registry.users[user_id].classifier.threshold_y:.4f}")
    save_registry(registry, args.model)
    print(f"saved {len(registry.users)} classifiers to {args.model}")
    return 0


def _cmd_eval(args) -> int:
    config = _bench_config(args)
    report = run_experiment(config, report_path=args.report,
                            series_path=args.series, audit_path=args.audit)
    mean = report["mean"]
    print(f"mode={config.mode} reps={config.reps} seed={config.seed}")
    for key in ("auc", "f1", "precision", "recall", "fnr", "fpr",
                "feedback_proportion"):
        value = mean[key]
        print(f"  {key}: {'n/a' if value is None else f'{value:.4f}'}")
    if args.report:
        print(f"report written to {args.report}")
    if args.series:
        print(f"series written to {args.series}")
    return 0


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}")


def _cmd_sweep(args) -> int:
    config = _bench_config(args)
    sweep = run_sweep(config, _parse_int_list(args.sweep_max_depth),
                      _parse_int_list(args.sweep_trees),
                      report_path=args.report)
    for cell in sweep["sweep"]:
        auc = cell["auc"]
        print(f"max_depth={cell['max_depth']:>2} trees={cell['trees']:>3} "
              f"AUC={'n/a' if auc is None else f'{auc:.4f}'}")
    if args.report:
        print(f"sweep written to {args.report}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import build_service

    app = build_service(
        bench=_bench_config(args),
        feedback_timeout=args.feedback_timeout,
        audit_path=args.audit,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rltir",
        description="Streaming person verification with feedback-driven model updates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="enroll classifiers and save a model document")
    _add_common_flags(p_train)
    p_train.add_argument("--model", required=True, metavar="path.json",
                         help="output model document (rltir-model/1)")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="run the streaming benchmark")
    _add_common_flags(p_eval)
    p_eval.set_defaults(func=_cmd_eval)

    p_sweep = sub.add_parser("sweep", help="grid AUC over tree count and depth")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--sweep-max-depth", default="3,5,7,9")
    p_sweep.add_argument("--sweep-trees", default="5,10,20,30")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_serve = sub.add_parser("serve", help="HTTP service for interactive feedback")
    _add_common_flags(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--feedback-timeout", type=float, default=60.0)
    p_serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
