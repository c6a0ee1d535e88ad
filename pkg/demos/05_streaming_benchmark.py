"""Run the full streaming benchmark on synthetic data and read the report.

Enrolls every subject, replays the interleaved test streams through the
oracle-feedback pipeline, and prints the aggregate metrics plus the first
iteration windows; compares against the no-feedback ablation on identical
splits and seeds.

The same runner handles the public keystroke table: pass its path via
BenchConfig(dataset=...) or the CLI's --dataset flag.
"""

from dataclasses import replace

from rltir.bench import BenchConfig, run_experiment
from rltir.pipeline import PipelineConfig
from rltir.qnet import TrainerConfig

config = BenchConfig(
    mode="rltir-oracle",
    dataset=None,        # None -> synthetic stand-in with the CMU shape
    reps=1,
    seed=7,
    pipeline=PipelineConfig(trees=15, max_depth=7, terminal_depth=3,
                            trainer=TrainerConfig(batch_size=16)),
)

report = run_experiment(config, report_path="/tmp/rltir_report.json",
                        series_path="/tmp/rltir_series.csv")
mean = report["mean"]
print(f"oracle mode: AUC={mean['auc']:.4f} F1={mean['f1']:.4f} "
      f"feedback={mean['feedback_proportion']:.2%}")

nofeed = run_experiment(replace(config, mode="nofeed"))
print(f"nofeed mode: AUC={nofeed['mean']['auc']:.4f} "
      f"F1={nofeed['mean']['f1']:.4f}")

print("\nfirst iteration windows (200 instances each):")
print(f"{'win':>4} {'auc':>7} {'fnr':>6} {'fpr':>6} {'feedback':>8}")
for row in report["reps"][0]["series"][:6]:
    auc = "n/a" if row["auc"] is None else f"{row['auc']:.4f}"
    print(f"{row['window']:>4} {auc:>7} {row['fnr']:>6.3f} "
          f"{row['fpr']:>6.3f} {row['feedback_count']:>8}")
print("\nfull report: /tmp/rltir_report.json, series: /tmp/rltir_series.csv")
