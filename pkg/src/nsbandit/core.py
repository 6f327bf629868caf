"""Arms, cost accounting and the generic best-arm protocol loop.

An arm is an iterative process.  ``pull`` advances it by one iteration and
``evaluate`` reads its current loss; the two are deliberately separate so that
a strategy may pull many times between (expensive) loss observations.

Pull counts start at zero: an arm that has never been pulled has no loss to
observe.  (The protocol figure this mirrors starts its counters at one, which
amounts to a free initial pull per arm.)

Strategies are written as generator functions.  They yield :class:`Pull`,
:class:`Evaluate` and :class:`Round` requests and receive the observed losses
back from :func:`run_protocol`, which owns the ledger and the trace.
"""

from __future__ import annotations

import abc
import csv
import io
import json
import math
import threading
import time
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Generator, NamedTuple, Sequence, Union

__all__ = [
    "ArmProcess",
    "SequenceArm",
    "RecordedArm",
    "CostLedger",
    "Event",
    "RoundRecord",
    "RunTrace",
    "Pull",
    "Evaluate",
    "Round",
    "NoObservationError",
    "StrategyFault",
    "pull",
    "evaluate",
    "rank_value",
    "recommend",
    "run_protocol",
]


class NoObservationError(ValueError):
    """Raised when a loss is requested from an arm that was never pulled."""


class StrategyFault(RuntimeError):
    """Raised when a strategy asks for an arm that does not exist."""


def rank_value(loss: float) -> float:
    """Value used for ranking: non-finite losses sort last."""
    if math.isnan(loss):
        return math.inf
    return loss


def _check_count(count: int) -> None:
    if count < 0:
        raise ValueError(f"pull count must be non-negative, got {count}")


class ArmProcess(abc.ABC):
    """An iterative process whose losses are a fixed function of its step count.

    Subclasses implement ``_step`` (one iteration) and ``_loss`` (loss at the
    current iteration).  ``_loss`` must not touch the state.
    """

    def __init__(self, arm_id: int):
        if arm_id < 0:
            raise ValueError(f"arm id must be non-negative, got {arm_id}")
        self.arm_id = int(arm_id)
        self.iteration = 0

    @abc.abstractmethod
    def _step(self) -> None: ...

    @abc.abstractmethod
    def _loss(self) -> float: ...

    def _reset(self) -> None:
        """Return the process state to its pre-training value."""

    def advance(self, count: int = 1) -> None:
        _check_count(count)
        for _ in range(count):
            self.iteration += 1
            self._step()

    def loss(self) -> float:
        if self.iteration < 1:
            raise NoObservationError(
                f"arm {self.arm_id} has not been pulled; no loss to observe")
        return float(self._loss())

    def reset(self) -> None:
        self.iteration = 0
        self._reset()

    # Modeled cost, in abstract operations, of one pull and one evaluation.
    def pull_cost(self) -> float:
        return 1.0

    def eval_cost(self) -> float:
        return 1.0

    def __repr__(self) -> str:
        return f"{type(self).__name__}(arm_id={self.arm_id}, iteration={self.iteration})"


class SequenceArm(ArmProcess):
    """Arm backed by a closed-form loss sequence ``fn(t)``, ``t >= 1``.

    Pulls are O(1) regardless of count, which keeps very large budgets cheap.
    """

    def __init__(self, arm_id: int, fn: Callable[[int], float], *, eval_cost: float = 1.0):
        super().__init__(arm_id)
        self.fn = fn
        self._eval_cost = eval_cost

    def _step(self) -> None:
        pass

    def advance(self, count: int = 1) -> None:
        _check_count(count)
        self.iteration += count

    def _loss(self) -> float:
        return self.fn(self.iteration)

    def eval_cost(self) -> float:
        return self._eval_cost


class RecordedArm(SequenceArm):
    """Arm replaying a prerecorded loss list.

    ``values[0]`` is the loss after the first pull.  Past the end of the
    recording the last value is repeated, i.e. the final value is taken as the
    limit.
    """

    def __init__(self, arm_id: int, values: Sequence[float], **kwargs):
        if len(values) == 0:
            raise ValueError("recorded arm needs at least one value")
        self.values = [float(v) for v in values]
        last = len(self.values) - 1
        super().__init__(arm_id, lambda t: self.values[min(t - 1, last)], **kwargs)


@dataclass
class CostLedger:
    """Pull and observation counts for one run (or a sequence of runs).

    ``cost`` is the modeled cost in abstract operations and is deterministic;
    ``elapsed`` is measured wall-clock seconds and is not.
    """

    pulls_per_arm: dict[int, int] = field(default_factory=dict)
    total_pulls: int = 0
    loss_observations: int = 0
    elapsed: float = 0.0
    cost: float = 0.0

    def record_pulls(self, arm_id: int, count: int, cost: float = 0.0) -> None:
        self.pulls_per_arm[arm_id] = self.pulls_per_arm.get(arm_id, 0) + count
        self.total_pulls += count
        self.cost += cost

    def record_observation(self, cost: float = 0.0) -> None:
        self.loss_observations += 1
        self.cost += cost

    def merge(self, other: "CostLedger") -> None:
        for arm_id, count in other.pulls_per_arm.items():
            self.pulls_per_arm[arm_id] = self.pulls_per_arm.get(arm_id, 0) + count
        self.total_pulls += other.total_pulls
        self.loss_observations += other.loss_observations
        self.elapsed += other.elapsed
        self.cost += other.cost

    def to_dict(self) -> dict:
        return {
            "pulls_per_arm": {str(k): v for k, v in sorted(self.pulls_per_arm.items())},
            "total_pulls": self.total_pulls,
            "loss_observations": self.loss_observations,
            "cost": self.cost,
        }


def pull(arm: ArmProcess, ledger: CostLedger, count: int = 1) -> None:
    """Advance ``arm`` by ``count`` iterations and charge the ledger."""
    cost = arm.pull_cost() * count
    arm.advance(count)
    ledger.record_pulls(arm.arm_id, count, cost)


def evaluate(arm: ArmProcess, ledger: CostLedger) -> float:
    """Observe the current loss of ``arm``; counts as one loss observation."""
    value = arm.loss()
    ledger.record_observation(arm.eval_cost())
    return value


def recommend(last_losses: dict[int, float]) -> int | None:
    """Argmin over the latest observed loss per arm, lowest id on ties."""
    best = None
    best_value = math.inf
    for arm_id in sorted(last_losses):
        value = rank_value(last_losses[arm_id])
        if best is None or value < best_value:
            best, best_value = arm_id, value
    return best


# --- strategy requests -------------------------------------------------------

@dataclass(frozen=True)
class Pull:
    """Pull every arm in ``arms`` ``count`` additional times."""

    arms: tuple[int, ...]
    count: int


@dataclass(frozen=True)
class Evaluate:
    """Observe the loss of every arm in ``arms``; the losses are sent back."""

    arms: tuple[int, ...]


@dataclass(frozen=True)
class Round:
    """Bookkeeping note from the strategy: round ``k`` just finished."""

    k: int
    survivors: tuple[int, ...]
    pulls: int
    cumulative: int


Request = Union[Pull, Evaluate, Round]
Policy = Generator[Request, "list[float] | None", "int | None"]


# --- trace -------------------------------------------------------------------

class Event(NamedTuple):
    step: int
    arm_id: int
    kind: str  # "pull" | "eval"
    iteration: int
    loss: float | None
    recommendation: int | None
    nonfinite: bool = False


class RoundRecord(NamedTuple):
    k: int
    survivors: tuple[int, ...]
    pulls: int
    cumulative: int


CSV_COLUMNS = ("step", "arm_id", "event", "iteration", "loss")


@dataclass
class RunTrace:
    """Time-ordered record of one protocol run."""

    events: list[Event] = field(default_factory=list)
    rounds: list[RoundRecord] = field(default_factory=list)
    output: int | None = None
    stopped: bool = False
    ledger: CostLedger = field(default_factory=CostLedger)
    pulls_recorded: bool = True

    @property
    def recommendation(self) -> int | None:
        """Final ``J_t``; ``None`` if no loss was ever observed."""
        for event in reversed(self.events):
            return event.recommendation
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for e in self.events:
            loss = "" if e.loss is None else repr(e.loss)
            writer.writerow([e.step, e.arm_id, e.kind, e.iteration, loss])
        return buf.getvalue()

    def to_dict(self) -> dict:
        events = []
        for e in self.events:
            loss = e.loss
            if loss is not None and not math.isfinite(loss):
                loss = None
            events.append({
                "step": e.step, "arm_id": e.arm_id, "event": e.kind,
                "iteration": e.iteration, "loss": loss,
                "recommendation": e.recommendation, "nonfinite": e.nonfinite,
            })
        return {
            "events": events,
            "rounds": [
                {"k": r.k, "survivors": list(r.survivors), "pulls": r.pulls,
                 "cumulative": r.cumulative}
                for r in self.rounds
            ],
            "output": self.output,
            "stopped": self.stopped,
            "pulls_recorded": self.pulls_recorded,
            "ledger": self.ledger.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


StopSignal = Union[None, int, Callable[[CostLedger], bool]]


def run_protocol(
    strategy: Callable[[int], Policy],
    arms: Sequence[ArmProcess],
    stop_signal: StopSignal = None,
    *,
    ledger: CostLedger | None = None,
    record_pulls: bool = True,
    reuse_progress: bool = False,
    executor: Executor | None = None,
) -> RunTrace:
    """Drive ``strategy`` over ``arms`` and return the complete trace.

    ``stop_signal`` is ``None`` (run until the strategy finishes), an int
    (stop after that many pulls) or a predicate on the ledger checked before
    every pull.  A stopped run has ``output = None``.

    With ``reuse_progress`` each pull request is read as a target iteration
    relative to the start of this run, and only pulls beyond an arm's current
    iteration are performed and charged.  Used by the warm-started doubling
    wrapper.

    When ``executor`` is given, the arms of one ``Pull``/``Evaluate`` batch are
    processed concurrently; trace and ledger are still written in arm order at
    the end of the batch, so the result does not depend on scheduling.
    """
    n = len(arms)
    if n < 2:
        raise ValueError(f"need at least 2 arms, got {n}")
    by_id = {}
    for arm in arms:
        if arm.arm_id in by_id:
            raise ValueError(f"duplicate arm id {arm.arm_id}")
        by_id[arm.arm_id] = arm
    if sorted(by_id) != list(range(n)):
        raise ValueError("arm ids must be exactly 0..n-1")

    ledger = CostLedger() if ledger is None else ledger
    trace = RunTrace(ledger=ledger, pulls_recorded=record_pulls)
    lock = threading.Lock()
    last_losses: dict[int, float] = {}
    logical = [0] * n
    state = {"step": 0, "J": None}
    started = time.perf_counter()

    if isinstance(stop_signal, int):
        limit = stop_signal
        should_stop = lambda led: led.total_pulls >= limit  # noqa: E731
    elif stop_signal is None:
        should_stop = None
    else:
        should_stop = stop_signal

    def check(ids) -> None:
        for i in ids:
            if not isinstance(i, int) or not 0 <= i < n:
                raise StrategyFault(f"strategy chose arm {i!r}; valid range is [0, {n})")

    def emit(arm_id, kind, iteration, loss=None, nonfinite=False):
        state["step"] += 1
        trace.events.append(Event(state["step"], arm_id, kind, iteration, loss,
                                  state["J"], nonfinite))

    def do_pulls(arm_id: int, count: int) -> int:
        arm = by_id[arm_id]
        if reuse_progress:
            logical[arm_id] += count
            count = max(0, logical[arm_id] - arm.iteration)
        start_iter = arm.iteration
        if count == 0:
            return start_iter
        cost = arm.pull_cost() * count
        arm.advance(count)
        with lock:
            ledger.record_pulls(arm_id, count, cost)
        return start_iter

    def record(arm_id: int, start: int) -> None:
        if record_pulls:
            for it in range(start + 1, by_id[arm_id].iteration + 1):
                emit(arm_id, "pull", it)

    def pull_batch(ids, count) -> bool:
        """Returns False if the stop signal fired part-way through."""
        if isinstance(stop_signal, int):
            # A pull-count limit can be applied arithmetically, keeping bulk pulls O(1).
            for arm_id in ids:
                room = stop_signal - ledger.total_pulls
                take = min(room, count)
                if take > 0:
                    record(arm_id, do_pulls(arm_id, take))
                if take < count:
                    return False
            return True
        if should_stop is not None:
            for arm_id in ids:
                for _ in range(count):
                    if should_stop(ledger):
                        return False
                    record(arm_id, do_pulls(arm_id, 1))
            return True
        if executor is not None and len(ids) > 1:
            starts = list(executor.map(lambda a: do_pulls(a, count), ids))
        else:
            starts = [do_pulls(a, count) for a in ids]
        for arm_id, start in zip(ids, starts):
            record(arm_id, start)
        return True

    def eval_batch(ids) -> list[float]:
        if executor is not None and len(ids) > 1:
            values = list(executor.map(lambda a: by_id[a].loss(), ids))
        else:
            values = [by_id[a].loss() for a in ids]
        out = []
        for arm_id, value in zip(ids, values):
            ledger.record_observation(by_id[arm_id].eval_cost())
            last_losses[arm_id] = value
            state["J"] = recommend(last_losses)
            nonfinite = not math.isfinite(value)
            emit(arm_id, "eval", by_id[arm_id].iteration, value, nonfinite)
            out.append(rank_value(value))
        return out

    policy = strategy(n)
    reply = None
    try:
        if should_stop is not None and should_stop(ledger):
            trace.stopped = True
            policy.close()
            return trace
        while True:
            request = policy.send(reply)
            reply = None
            if isinstance(request, Pull):
                ids = tuple(request.arms)
                check(ids)
                if request.count < 0:
                    raise StrategyFault(f"negative pull count {request.count}")
                if not pull_batch(ids, request.count):
                    trace.stopped = True
                    policy.close()
                    return trace
                if should_stop is not None and should_stop(ledger):
                    trace.stopped = True
                    policy.close()
                    return trace
            elif isinstance(request, Evaluate):
                ids = tuple(request.arms)
                check(ids)
                reply = eval_batch(ids)
            elif isinstance(request, Round):
                trace.rounds.append(RoundRecord(request.k, tuple(request.survivors),
                                                request.pulls, request.cumulative))
            else:
                raise StrategyFault(f"unknown request {request!r}")
    except StopIteration as done:
        output = done.value
        if output is not None:
            check((output,))
        trace.output = output
    finally:
        ledger.elapsed += time.perf_counter() - started
    return trace
