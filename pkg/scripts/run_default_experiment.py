"""Run the default benchmark: 11-domain synthetic family, 5 seeds, the full
sampler x adaptation grid with a budget of 10, oracle labels. Writes the
result files and prints per-method deltas against the no-adaptation baseline.

Usage: python scripts/run_default_experiment.py [out_dir]
"""

import sys
import time

from adashift.config import ExperimentConfig
from adashift.harness import emit_results, run_workflow


def main() -> int:
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "out/default"
    cfg = ExperimentConfig()
    start = time.time()
    report = run_workflow(cfg, progress=lambda line: print(line, file=sys.stderr))
    print(f"workflow finished in {(time.time() - start) / 60:.1f} min")

    for path in emit_results(report, out_dir):
        print(f"wrote {path}")

    base = report.baseline_aggregates()
    print(f"\n{'method':20s} " + " ".join(f"{t:>7s}" for t in report.targets))
    for method in report.methods:
        agg = report.method_aggregates(method)
        deltas = [agg[t].mean - base[t].mean for t in report.targets]
        print(f"{method:20s} " + " ".join(f"{d:+.3f}".rjust(7) for d in deltas))
    return 0


if __name__ == "__main__":
    sys.exit(main())
