"""Mean regret against the analytic bound over a range of horizons.

    python scripts/regret_scaling.py --task experts --horizons 250 500 1000 2000 4000
"""

import argparse
import csv
import sys

import numpy as np

from oracle_ftpl.harness import TASKS, ExperimentConfig, run_replicates


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--task", choices=TASKS, default="experts")
    p.add_argument("--horizons", type=int, nargs="+", default=[250, 500, 1000, 2000, 4000])
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--N", type=int, default=100)
    args = p.parse_args(argv)

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["T", "mean_regret", "se", "bound", "ratio"])
    for T in args.horizons:
        cfg = ExperimentConfig(task=args.task, T=T, d=args.d, K=args.K, N=args.N,
                               replicates=args.replicates, master_seed=args.seed)
        results = run_replicates(cfg)
        regrets = np.array([r.regret for r in results])
        bound = float(np.mean([r.bound for r in results]))
        se = regrets.std(ddof=1) / np.sqrt(len(regrets)) if len(regrets) > 1 else 0.0
        w.writerow([T, f"{regrets.mean():.3f}", f"{se:.3f}", f"{bound:.1f}", f"{regrets.mean() / bound:.4f}"])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
