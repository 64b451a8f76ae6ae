"""Experiment runner: configuration, seeded replicates, regret bounds and CSV output.

CLI::

    oracle-ftpl run --config exp.cfg --task experts --T 1000 --out results/
    oracle-ftpl verify [--full]

``run`` writes ``ledger.csv`` (one row per replicate and round) and
``summary.csv`` (one row per replicate plus a ``mean`` row) into ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigurationError, LossTerm, linear_term
from .environments import (
    AdaptiveAdversary,
    Interaction,
    ObliviousAdversary,
    RegretLedger,
    changepoint_losses,
    compute_regret,
    make_disjunction_class,
    make_experts_task,
    make_layered_dag,
    stochastic_losses,
)
from .learners import (
    FtplState,
    SemiBanditConfig,
    SemiBanditFTPL,
    default_L,
    previous_loss_predictor,
    zero_predictor,
)
from .oracles import AugmentedOracle, DagOracle, EnumerationOracle, count_switching_policies
from .perturbation import Purpose, SeedStream

SETTINGS = (
    "transductive-general",
    "transductive-linear",
    "separator-general",
    "semibandit-transductive",
    "semibandit-separator",
    "optimistic-transductive",
    "optimistic-separator",
)
TASKS = ("experts", "disjunction", "dag", "switching", "semibandit", "optimistic")
LEDGER_COLUMNS = ["replicate", "round", "learner_loss", "cum_regret_fixed", "cum_regret_switch", "bound", "oracle_calls"]
SUMMARY_COLUMNS = [
    "replicate", "T", "epsilon", "learner_total", "regret_fixed", "regret_switch", "bound", "ratio", "oracle_calls",
]


# --------------------------------------------------------------------------
# bounds


def _bound_coefficients(setting, d, m, K, N, T, L, predictor_error) -> tuple[float, float, float]:
    """``(a, b, c)`` with bound ``a * eps + b / eps + c``."""
    b = 10.0 * math.sqrt(d * m) * math.log(N) if N > 1 else 0.0
    if setting == "transductive-general":
        return 4.0 * K * T, b, 0.0
    if setting == "transductive-linear":
        return float(m * m * T), b, 0.0
    if setting == "separator-general":
        return 4.0 * K * d * T, b, 0.0
    if setting in ("semibandit-transductive", "semibandit-separator"):
        sep = setting == "semibandit-separator"
        L = default_L(K, T, separator=sep) if L is None else L
        c = K * T / (math.e * L)
        a = 8.0 * K * K * d * L * m * T if sep else 2.0 * m * K * T
        return a, b, c
    if setting in ("optimistic-transductive", "optimistic-separator"):
        err = float(T) if predictor_error is None else float(predictor_error)
        a = 4.0 * K * err * (d if setting == "optimistic-separator" else 1)
        return a, b, 0.0
    raise ConfigurationError(f"unknown setting {setting!r}; expected one of {SETTINGS}")


def optimal_epsilon(setting: str, d: int, m: int, K: int, N: int, T: int,
                    L: int | None = None, predictor_error: float | None = None) -> float:
    """Minimizer ``sqrt(b / a)`` of ``a eps + b / eps``; ``inf`` if ``a == 0``."""
    a, b, _ = _bound_coefficients(setting, d, m, K, N, T, L, predictor_error)
    if a == 0:
        return math.inf
    return math.sqrt(b / a)


def bound_value(setting: str, d: int, m: int, K: int, N: int, T: int, epsilon: float | None = None,
                L: int | None = None, predictor_error: float | None = None) -> float:
    """Closed-form expected-regret bound; with ``epsilon=None`` the analytic minimum over epsilon."""
    a, b, c = _bound_coefficients(setting, d, m, K, N, T, L, predictor_error)
    if epsilon is None:
        if a == 0 or b == 0:
            return c
        return 2.0 * math.sqrt(a * b) + c
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    return a * epsilon + b / epsilon + c


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    task: str = "experts"
    d: int = 5
    K: int = 5
    N: int = 100
    m: int = 1
    T: int = 1000
    k: int = 1
    L: int | None = None
    epsilon: float | None = None
    replicates: int = 1
    master_seed: int = 0
    adversary: str = "oblivious"
    predictor: str = "previous"
    layers: int = 3
    width: int = 2
    out: str = "results"

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.adversary not in ("oblivious", "adaptive"):
            raise ConfigurationError("adversary must be oblivious or adaptive")
        if self.predictor not in ("zero", "previous", "perfect"):
            raise ConfigurationError("predictor must be zero, previous or perfect")
        for name in ("d", "K", "N", "m", "replicates", "layers", "width"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.T < 0 or self.k < 0:
            raise ConfigurationError("T and k must be non-negative")
        if self.L is not None and self.L < 1:
            raise ConfigurationError("L must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")


_INT_FIELDS = {"d", "K", "N", "m", "T", "k", "L", "replicates", "master_seed", "layers", "width"}
_FLOAT_FIELDS = {"epsilon"}


def _convert(key: str, raw: str):
    if key in _INT_FIELDS | _FLOAT_FIELDS and raw.strip().lower() in ("", "none", "auto"):
        return None
    if key in _INT_FIELDS:
        return int(raw)
    if key in _FLOAT_FIELDS:
        return float(raw)
    return raw.strip()


def parse_config_text(text: str) -> dict:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "seed":
            key = "master_seed"
        if key not in known:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ConfigurationError(f"config line {lineno}: bad value {raw!r} for {key}") from None
    return values


# --------------------------------------------------------------------------
# replicates


@dataclass
class ReplicateResult:
    replicate: int
    epsilon: float
    ledger: RegretLedger
    setting: str
    bound_args: dict
    extras: dict = field(default_factory=dict)

    @property
    def bound(self) -> float:
        return float(self.ledger.bound[-1]) if self.ledger.T else float("nan")

    @property
    def regret(self) -> float:
        if self.ledger.switch_losses is not None:
            return self.ledger.regret_switch
        return self.ledger.regret_fixed


def _seed_for(root: SeedStream, rep: int, purpose: Purpose) -> np.random.Generator:
    return root.at(rep, 0, purpose).generator()


def _eps(cfg: ExperimentConfig, setting: str, **kw) -> float:
    if cfg.epsilon is not None:
        return cfg.epsilon
    return optimal_epsilon(setting, **kw)


def run_replicate(cfg: ExperimentConfig, rep: int) -> ReplicateResult:
    """Run one replicate of ``cfg``; a pure function of ``(cfg, rep)``."""
    root = SeedStream(cfg.master_seed)
    T = cfg.T
    task_rng = _seed_for(root, rep, Purpose.TASK)
    adv_rng = _seed_for(root, rep, Purpose.ADVERSARY)
    extras: dict = {}
    k_switch = None

    if cfg.task in ("experts", "semibandit", "optimistic"):
        task = make_experts_task(cfg.d, cfg.K, cfg.N, int(task_rng.integers(2**63)))
        oracle = EnumerationOracle(task.pc)
        d, m, K, N = cfg.d, 1, cfg.K, cfg.N
        if cfg.adversary == "oblivious":
            adversary = ObliviousAdversary(stochastic_losses(task.schedule, d, K, T, adv_rng))
        else:
            adversary = AdaptiveAdversary(task.schedule, K)
        noise = range(d)
        if cfg.task == "experts":
            setting = "transductive-general"
            bound_args = dict(d=d, m=m, K=K, N=N)
        elif cfg.task == "semibandit":
            setting = "semibandit-transductive"
            L = cfg.L if cfg.L is not None else default_L(K, max(T, 1))
            bound_args = dict(d=d, m=m, K=K, N=N, L=L)
        else:
            setting = "optimistic-transductive"
            bound_args = dict(d=d, m=m, K=K, N=N)
    elif cfg.task == "disjunction":
        task = make_disjunction_class(cfg.d)
        oracle = EnumerationOracle(task.pc)
        n_ctx = 2**cfg.d
        contexts = task_rng.integers(0, n_ctx, size=T)
        schedule = lambda t: int(contexts[t - 1])  # noqa: E731
        if cfg.adversary == "oblivious":
            target = task.pc[int(task_rng.integers(task.pc.N))]
            flips = adv_rng.random(T) < 0.1
            terms = []
            for t in range(1, T + 1):
                x = schedule(t)
                label = int(np.argmax(target.action(x))) ^ int(flips[t - 1])
                loss = np.ones(2)
                loss[label] = 0.0
                terms.append(linear_term(x, loss))
            adversary = ObliviousAdversary(terms)
        else:
            adversary = AdaptiveAdversary(schedule, 2)
        noise = task.separator.contexts
        setting = "separator-general"
        bound_args = dict(d=len(noise), m=1, K=2, N=task.pc.N)
    elif cfg.task == "dag":
        task = make_layered_dag(cfg.layers, cfg.width)
        dag = task.dag
        oracle = DagOracle(dag)
        scale = 1.0 / dag.m  # keeps every path cost in [0, 1]
        if cfg.adversary == "oblivious":
            means = adv_rng.uniform(0.2, 0.8, size=dag.K)
            jitter = adv_rng.uniform(-0.2, 0.2, size=(T, dag.K))
            adversary = ObliviousAdversary([linear_term(0, scale * np.clip(means + jitter[t], 0, 1)) for t in range(T)])
        else:
            adversary = AdaptiveAdversary(
                lambda t: 0, dag.K, lambda h, x, K: linear_term(x, scale * (h[-1].action if h else np.zeros(K)))
            )
        noise = [0]
        setting = "transductive-general"
        bound_args = dict(d=1, m=dag.m, K=dag.K, N=dag.count_paths())
    elif cfg.task == "switching":
        K = max(cfg.K, 2)
        base_pc_task = make_experts_task(1, K, K, 0)
        base = EnumerationOracle(base_pc_task.pc)
        if cfg.adversary == "oblivious":
            terms = changepoint_losses(T, K, adv_rng)
            adversary = ObliviousAdversary(terms)
        else:
            adversary = AdaptiveAdversary(lambda t: 0, K)
        k_switch = cfg.k
        oracle = base
        noise = range(T)
        setting = "transductive-general"
        bound_args = dict(d=max(T, 1), m=1, K=K, N=count_switching_policies(max(T, 1), K, cfg.k))
    else:  # pragma: no cover - guarded by ExperimentConfig
        raise ConfigurationError(cfg.task)

    eps_args = dict(bound_args, T=max(T, 1))
    if setting == "optimistic-transductive":
        # predictor quality is unknown up front: tune as for the zero predictor
        epsilon = cfg.epsilon if cfg.epsilon is not None else optimal_epsilon("transductive-general", **eps_args)
    else:
        epsilon = _eps(cfg, setting, **eps_args)

    losses: list[float] = []
    outcomes: list[LossTerm] = []
    calls: list[int] = []
    history: list[Interaction] = []
    pred_err: list[float] = []

    if cfg.task == "semibandit":
        learner = SemiBanditFTPL(oracle, list(noise), SemiBanditConfig(epsilon, bound_args["L"]))
        baseline = 0.0
        for t in range(1, T + 1):
            x = adversary.context(t)
            y = adversary.next(t, history)
            res = learner.round(x, y.linear, root.child(rep, t))
            losses.append(y.loss(res.played))
            outcomes.append(y)
            calls.append(res.oracle_calls)
            baseline += float(np.mean(y.linear))
            history.append(Interaction(x, res.played, y))
        extras["uniform_loss"] = baseline
    else:
        if cfg.task == "switching":
            aug = AugmentedOracle(base, [0] * T, cfg.k) if T else None
            state = FtplState(aug, list(noise), epsilon) if T else None
        else:
            state = FtplState(oracle, list(noise), epsilon)
        predictor = None
        if cfg.task == "optimistic":
            predictor = {
                "zero": zero_predictor(cfg.K),
                "previous": previous_loss_predictor(cfg.K),
                "perfect": None,
            }[cfg.predictor]
        for t in range(1, T + 1):
            x = adversary.context(t)
            stream = root.child(rep, t)
            before = state.oracle_calls
            if cfg.task == "switching":
                policy = state.choose(t - 1, stream)
                action = policy.action(t - 1)
            elif cfg.task == "optimistic":
                pred = predictor
                if pred is None:
                    truth = adversary.next(t, history)
                    pred = lambda _t, _h, _x, _y=truth: _y  # noqa: E731
                policy = state.optimistic_choose(x, pred, stream)
                action = policy.action(x)
                guess = pred(t, tuple(state.history), x)
            else:
                policy = state.choose(x, stream)
                action = policy.action(x)
            y = adversary.next(t, history)
            losses.append(y.loss(action))
            outcomes.append(y)
            if cfg.task == "switching":
                state.update(LossTerm(t - 1, linear=y.linear))
            else:
                state.update(y)
            if cfg.task == "optimistic":
                pred_err.append(float(np.max(np.abs(y.linear - guess.linear))) ** 2)
            calls.append(state.oracle_calls - before)
            history.append(Interaction(x, action, y))
        if cfg.task == "switching" and T:
            extras["interval_evaluations"] = aug.interval_evaluations

    ledger = compute_regret(losses, outcomes, oracle, k=k_switch)
    ledger.oracle_calls = np.asarray(calls, dtype=np.int64)
    if setting.startswith("optimistic"):
        cum_err = np.cumsum(pred_err)
        extras["predictor_error"] = float(cum_err[-1]) if T else 0.0
        ledger.bound = np.array(
            [bound_value(setting, T=t, epsilon=epsilon, predictor_error=cum_err[t - 1], **bound_args) for t in range(1, T + 1)]
        )
    else:
        ledger.bound = np.array([bound_value(setting, T=t, epsilon=epsilon, **bound_args) for t in range(1, T + 1)])
    if cfg.task == "semibandit":
        extras["uniform_regret"] = extras["uniform_loss"] - float(np.sum(ledger.fixed_losses))
    return ReplicateResult(rep, epsilon, ledger, setting, bound_args, extras)


# --------------------------------------------------------------------------
# experiments and CSV


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else str(v)


def _max_workers() -> int:
    raw = os.environ.get("ORACLE_FTPL_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigurationError(f"ORACLE_FTPL_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def run_replicates(cfg: ExperimentConfig) -> list[ReplicateResult]:
    workers = min(_max_workers(), cfg.replicates)
    if workers <= 1:
        return [run_replicate(cfg, r) for r in range(cfg.replicates)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_replicate, [cfg] * cfg.replicates, range(cfg.replicates)))


def render_csvs(results: Sequence[ReplicateResult]) -> tuple[str, str]:
    ledger_buf, summary_buf = io.StringIO(), io.StringIO()
    lw = csv.writer(ledger_buf, lineterminator="\n")
    sw = csv.writer(summary_buf, lineterminator="\n")
    lw.writerow(LEDGER_COLUMNS)
    sw.writerow(SUMMARY_COLUMNS)
    rows = []
    for res in results:
        led = res.ledger
        if led.T == 0:
            continue
        cf = led.cum_regret_fixed
        cs = led.cum_regret_switch
        for t in range(led.T):
            lw.writerow([
                res.replicate, t + 1, _fmt(led.learner_losses[t]), _fmt(cf[t]),
                _fmt(cs[t]) if cs is not None else "", _fmt(led.bound[t]), _fmt(led.oracle_calls[t]),
            ])
        row = [res.replicate, led.T, res.epsilon, float(led.learner_losses.sum()), led.regret_fixed,
               led.regret_switch, res.bound, res.regret / res.bound if res.bound else float("nan"),
               int(led.oracle_calls.sum())]
        rows.append(row)
        sw.writerow([_fmt(v) for v in row])
    if rows:
        def mean(i):
            vals = [r[i] for r in rows if r[i] is not None]
            return float(np.mean(vals)) if vals else None
        regret_mean = mean(5) if rows[0][5] is not None else mean(4)
        sw.writerow(["mean", rows[0][1], _fmt(rows[0][2]), _fmt(mean(3)), _fmt(mean(4)), _fmt(mean(5)),
                     _fmt(mean(6)), _fmt(regret_mean / mean(6) if mean(6) else float("nan")), _fmt(mean(8))])
    return ledger_buf.getvalue(), summary_buf.getvalue()


def run_experiment(cfg: ExperimentConfig) -> tuple[Path, Path]:
    """Run all replicates and write ``ledger.csv`` and ``summary.csv`` under ``cfg.out``."""
    results = run_replicates(cfg)
    ledger_text, summary_text = render_csvs(results)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ledger_path, summary_path = out / "ledger.csv", out / "summary.csv"
    ledger_path.write_text(ledger_text)
    summary_path.write_text(summary_text)
    return ledger_path, summary_path


# --------------------------------------------------------------------------
# CLI


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oracle-ftpl", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment and write CSVs")
    run.add_argument("--config", type=Path, help="key=value config file (flags override it)")
    run.add_argument("--task", choices=TASKS)
    run.add_argument("--T", type=int)
    run.add_argument("--epsilon", type=float)
    run.add_argument("--seed", dest="master_seed", type=int)
    run.add_argument("--out")
    for name in ("d", "K", "N", "m", "k", "L", "replicates", "layers", "width"):
        run.add_argument(f"--{name}", type=int)
    run.add_argument("--adversary", choices=("oblivious", "adaptive"))
    run.add_argument("--predictor", choices=("zero", "previous", "perfect"))
    verify = sub.add_parser("verify", help="run the invariant suite; nonzero exit on failure")
    verify.add_argument("--full", action="store_true", help="include the long regret runs")
    verify.add_argument("--seed", type=int, default=2016)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = parse_config_text(args.config.read_text()) if args.config else {}
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return ExperimentConfig(**values)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = config_from_args(args)
            ledger, summary = run_experiment(cfg)
            print(f"wrote {ledger} and {summary}")
            return 0
        from .checks import run_checks

        results = run_checks(full=args.full, seed=args.seed)
        for res in results:
            print(res.line())
        return 0 if all(r.passed for r in results) else 1
    except (ConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
