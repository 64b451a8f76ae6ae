"""Oracle-based FTPL against exponential weights on the contextual experts task.

Both learners see the same oblivious loss sequence; Hedge enumerates all N
policies each round while FTPL makes one oracle call.

    python scripts/ftpl_vs_hedge.py --T 2000 --replicates 5
"""

import argparse
import time

import numpy as np

from oracle_ftpl.environments import HedgeState, compute_regret, make_experts_task, stochastic_losses
from oracle_ftpl.harness import optimal_epsilon
from oracle_ftpl.learners import FtplState
from oracle_ftpl.oracles import EnumerationOracle
from oracle_ftpl.perturbation import Purpose, SeedStream


def one_replicate(d, K, N, T, seed):
    root = SeedStream(seed)
    task = make_experts_task(d, K, N, int(root.child(0, Purpose.TASK).generator().integers(2**63)))
    seq = stochastic_losses(task.schedule, d, K, T, root.child(0, Purpose.ADVERSARY).generator())
    oracle = EnumerationOracle(task.pc)

    start = time.perf_counter()
    ftpl = FtplState(oracle, range(d), optimal_epsilon("transductive-general", d=d, m=1, K=K, N=N, T=T))
    ftpl_losses = []
    for t, y in enumerate(seq, start=1):
        pol = ftpl.choose(y.context, root.child(1, t))
        ftpl_losses.append(y.loss(pol.action(y.context)))
        ftpl.update(y)
    ftpl_time = time.perf_counter() - start

    start = time.perf_counter()
    hedge = HedgeState(task.pc, HedgeState.default_eta(N, T))
    rng = root.child(2, Purpose.BASELINE).generator()
    hedge_losses = []
    for y in seq:
        _, i = hedge.choose(y.context, rng)
        hedge_losses.append(y.loss(task.pc[i].action(y.context)))
        hedge.update(y)
    hedge_time = time.perf_counter() - start

    return (compute_regret(ftpl_losses, seq, oracle).regret_fixed, ftpl_time,
            compute_regret(hedge_losses, seq, oracle).regret_fixed, hedge_time)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--T", type=int, default=2000)
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rows = np.array([one_replicate(args.d, args.K, args.N, args.T, args.seed + r) for r in range(args.replicates)])
    mean = rows.mean(axis=0)
    print(f"FTPL : mean regret {mean[0]:8.2f}   {mean[1]:.2f}s per run")
    print(f"Hedge: mean regret {mean[2]:8.2f}   {mean[3]:.2f}s per run")


if __name__ == "__main__":
    main()
