"""Fixed-budget best-arm strategies and the doubling wrapper.

All rankings are stable sorts on ``(loss, arm_id)``; non-finite losses rank
last.  Budgets are counted in pulls.

Successive Rejects uses the phase lengths of the original fixed-budget
algorithm::

    logbar(n) = 1/2 + sum_{i=2..n} 1/i
    n_k = ceil((B - n) / (logbar(n) * (n + 1 - k))),   k = 1..n-1

In phase ``k`` every surviving arm is brought to ``n_k`` cumulative pulls,
all survivors are evaluated and the worst one (ties: highest id) is dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Iterator, Sequence

from .core import (
    ArmProcess,
    CostLedger,
    Evaluate,
    Policy,
    Pull,
    Round,
    RoundRecord,
    RunTrace,
    run_protocol,
)

__all__ = [
    "InfeasibleBudget",
    "StrategyResult",
    "ceil_log2",
    "logbar",
    "halving_schedule",
    "rejects_schedule",
    "min_budget",
    "successive_halving",
    "uniform",
    "successive_rejects",
    "doubling",
    "STRATEGIES",
]


class InfeasibleBudget(ValueError):
    """Budget too small for the strategy; ``minimum`` is the least feasible one."""

    def __init__(self, strategy: str, budget: int, minimum: int, n: int):
        self.strategy = strategy
        self.budget = budget
        self.minimum = minimum
        self.n = n
        super().__init__(
            f"{strategy}: budget {budget} is infeasible for n={n} arms; "
            f"minimal feasible budget is {minimum}")


def ceil_log2(n: int) -> int:
    """Exact ``ceil(log2(n))`` for positive integers."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return (n - 1).bit_length()


def logbar(n: int) -> float:
    return 0.5 + sum(1.0 / i for i in range(2, n + 1))


def _rejects_lengths(n: int, budget: int) -> list[int]:
    lb = logbar(n)
    return [math.ceil((budget - n) / (lb * (n + 1 - k))) for k in range(1, n)]


def min_budget(strategy: str, n: int) -> int:
    """Least budget accepted by ``strategy`` with ``n`` arms."""
    if n < 2:
        raise ValueError(f"need at least 2 arms, got {n}")
    if strategy == "sh":
        # every round then pulls at least once: r_k >= r_0 >= 1
        return n * ceil_log2(n)
    if strategy == "uniform":
        return n
    if strategy == "sr":
        # n * logbar(n) keeps the schedule sensible; n + 1 guarantees n_1 >= 1
        # (at n = 2 the first bound alone would give n_1 = 0).
        return max(math.ceil(n * logbar(n) - 1e-9), n + 1)
    raise KeyError(f"unknown strategy {strategy!r}")


def _check(strategy: str, n: int, budget: int) -> None:
    if n < 2:
        raise ValueError(f"need at least 2 arms, got {n}")
    if not isinstance(budget, int) or isinstance(budget, bool):
        raise TypeError(f"budget must be an int, got {budget!r}")
    minimum = min_budget(strategy, n)
    if budget < minimum:
        raise InfeasibleBudget(strategy, budget, minimum, n)


def _order(ids: Sequence[int], losses: Sequence[float]) -> list[int]:
    return [i for _, i in sorted(zip(losses, ids))]


def halving_schedule(n: int, budget: int) -> list[tuple[int, int, int]]:
    """Planned ``(|S_k|, r_k, R_k)`` per round, independent of the losses."""
    rounds = ceil_log2(n)
    size, cumulative, plan = n, 0, []
    for _ in range(rounds):
        r = budget // (size * rounds)
        cumulative += r
        plan.append((size, r, cumulative))
        size = max(size // 2, 1)
    return plan


def rejects_schedule(n: int, budget: int) -> list[int]:
    """Cumulative per-arm pulls ``n_k`` for phases ``k = 1..n-1``."""
    return _rejects_lengths(n, budget)


# --- policies ----------------------------------------------------------------

def halving_policy(n: int, budget: int) -> Policy:
    rounds = ceil_log2(n)
    survivors = list(range(n))
    cumulative = 0
    for k in range(rounds):
        r = budget // (len(survivors) * rounds)
        cumulative += r
        yield Pull(tuple(survivors), r)
        losses = yield Evaluate(tuple(survivors))
        ranked = _order(survivors, losses)
        yield Round(k, tuple(survivors), r, cumulative)
        survivors = sorted(ranked[:max(len(survivors) // 2, 1)])
    return survivors[0]


def uniform_policy(n: int, budget: int) -> Policy:
    ids = tuple(range(n))
    per_arm = budget // n
    yield Pull(ids, per_arm)
    losses = yield Evaluate(ids)
    yield Round(0, ids, per_arm, per_arm)
    return _order(ids, losses)[0]


def rejects_policy(n: int, budget: int) -> Policy:
    survivors = list(range(n))
    done = 0
    for k, target in enumerate(_rejects_lengths(n, budget), start=1):
        extra = max(target - done, 0)
        done += extra
        yield Pull(tuple(survivors), extra)
        losses = yield Evaluate(tuple(survivors))
        yield Round(k, tuple(survivors), extra, done)
        # worst = max loss, highest id on ties
        worst = max(zip(losses, survivors))[1]
        survivors.remove(worst)
    return survivors[0]


POLICIES: dict[str, Callable[..., Policy]] = {
    "sh": halving_policy,
    "uniform": uniform_policy,
    "sr": rejects_policy,
}


@dataclass
class StrategyResult:
    winner: int
    ledger: CostLedger
    trace: RunTrace

    @property
    def schedule(self) -> list[RoundRecord]:
        return self.trace.rounds


def _run(name: str, arms: Sequence[ArmProcess], budget: int, **kwargs) -> StrategyResult:
    _check(name, len(arms), budget)
    trace = run_protocol(partial(POLICIES[name], budget=budget), arms, **kwargs)
    return StrategyResult(trace.output, trace.ledger, trace)


def successive_halving(arms: Sequence[ArmProcess], budget: int, **kwargs) -> StrategyResult:
    """Successive Halving with budget ``B``.

    Runs ``ceil(log2 n)`` rounds; in round ``k`` each survivor gets
    ``floor(B / (|S_k| ceil(log2 n)))`` more pulls, survivors are evaluated once
    and the better ``floor(|S_k|/2)`` are kept.  Rounds with a single survivor
    still pull and evaluate.  Requires ``B >= n ceil(log2 n)``.

    Extra keyword arguments go to :func:`run_protocol`.
    """
    return _run("sh", arms, budget, **kwargs)


def uniform(arms: Sequence[ArmProcess], budget: int, **kwargs) -> StrategyResult:
    """Pull every arm ``floor(B/n)`` times, evaluate each once, return the argmin."""
    return _run("uniform", arms, budget, **kwargs)


def successive_rejects(arms: Sequence[ArmProcess], budget: int, **kwargs) -> StrategyResult:
    """Successive Rejects; see the module docstring for the phase schedule."""
    return _run("sr", arms, budget, **kwargs)


STRATEGIES: dict[str, Callable[..., StrategyResult]] = {
    "sh": successive_halving,
    "uniform": uniform,
    "sr": successive_rejects,
}


@dataclass
class DoublingStep:
    budget: int
    budget_used: int
    recommendation: int
    result: StrategyResult


def doubling(
    inner: str | Callable[..., StrategyResult],
    arms: Sequence[ArmProcess],
    stop_signal: int | Callable[[DoublingStep], bool] | None = None,
    warm_start: bool = False,
    *,
    start_budget: int | None = None,
    ledger: CostLedger | None = None,
    **kwargs,
) -> Iterator[DoublingStep]:
    """Anytime wrapper: run ``inner`` with budgets ``B0, 2 B0, 4 B0, ...``.

    Yields one :class:`DoublingStep` per completed inner run.  ``stop_signal``
    is a number of doublings or a predicate on the last step; ``None`` runs
    until the caller stops iterating.

    Without ``warm_start`` every arm is reset to iteration 0 before each run.
    With it, progress is kept and an inner run only pays for pulls that take
    an arm past the iteration it already reached.  ``budget_used`` is the
    cumulative number of pulls charged so far.
    """
    if isinstance(inner, str):
        name = inner
        inner = STRATEGIES[inner]
    else:
        name = next((k for k, v in STRATEGIES.items() if v is inner), None)
    if start_budget is None:
        if name is None:
            raise ValueError("start_budget is required for a custom inner strategy")
        start_budget = min_budget(name, len(arms))
    total = CostLedger() if ledger is None else ledger
    budget = start_budget
    count = 0
    while True:
        if isinstance(stop_signal, int) and count >= stop_signal:
            return
        if not warm_start:
            for arm in arms:
                arm.reset()
        result = inner(arms, budget, reuse_progress=warm_start, **kwargs)
        total.merge(result.ledger)
        step = DoublingStep(budget, total.total_pulls, result.winner, result)
        count += 1
        yield step
        if callable(stop_signal) and stop_signal(step):
            return
        budget *= 2
