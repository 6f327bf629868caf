"""Convergence envelopes and the budget/sub-optimality calculators built on them.

An envelope ``gamma(t)`` (``t = 1, 2, ...``) is a non-increasing bound on
``|loss_t - limit|``.  Its inverse is ``min{t : gamma(t) <= alpha}``.  For
envelopes measured from a finite recording the inverse may not exist within
the horizon; that outcome is the :data:`BEYOND_HORIZON` sentinel, not an
exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .strategies import InfeasibleBudget, ceil_log2

__all__ = [
    "BEYOND_HORIZON",
    "BeyondHorizonError",
    "Envelope",
    "ClosedFormEnvelope",
    "EmpiricalEnvelope",
    "LimitProfile",
    "BudgetBound",
    "SHBudget",
    "LossSequence",
    "power_envelope",
    "exponential_envelope",
    "staircase_envelope",
    "zero_envelope",
    "scaled_envelope",
    "max_envelope",
    "sgd_envelope",
    "envelope_of",
    "envelope_inverse",
    "sh_sufficient_budget",
    "uniform_sufficient_budget",
    "adversarial_instance",
    "uniform_necessary_budget",
    "sh_suboptimality_bound",
    "uniform_suboptimality_bound",
]

MAX_T = 1 << 62


class _BeyondHorizon:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BEYOND_HORIZON"

    def __reduce__(self):
        return (_BeyondHorizon, ())


BEYOND_HORIZON = _BeyondHorizon()


class BeyondHorizonError(LookupError):
    """An empirical envelope was evaluated past its recorded horizon."""


class Envelope:
    """Base class; subclasses provide ``__call__`` and may override ``inverse``."""

    kind = "envelope"
    horizon: int | None = None

    def __call__(self, t: int) -> float:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}

    def inverse(self, alpha: float) -> int | _BeyondHorizon:
        """Smallest integer ``t >= 1`` with ``gamma(t) <= alpha``."""
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        if self(1) <= alpha:
            return 1
        lo, hi = 1, 2
        while self(hi) > alpha:
            lo, hi = hi, hi * 2
            if hi > MAX_T:
                return BEYOND_HORIZON
        # gamma(lo) > alpha >= gamma(hi)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self(mid) <= alpha:
                hi = mid
            else:
                lo = mid
        return hi


class ClosedFormEnvelope(Envelope):
    def __init__(self, kind: str, fn: Callable[[int], float], **params):
        self.kind = kind
        self.fn = fn
        self.params = params

    def __call__(self, t: int) -> float:
        if t < 1:
            raise ValueError(f"envelopes are defined for t >= 1, got {t}")
        return self.fn(t)

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.kind}({args})"


class EmpiricalEnvelope(Envelope):
    """Tabulated envelope over ``t = 1..horizon``."""

    kind = "empirical"

    def __init__(self, values: Sequence[float]):
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("empirical envelope needs a nonempty 1-d table")
        if np.any(arr < 0) or np.any(np.diff(arr) > 0):
            raise ValueError("envelope values must be non-negative and non-increasing")
        self.values = arr
        self.horizon = int(arr.size)

    def __call__(self, t: int) -> float:
        if t < 1:
            raise ValueError(f"envelopes are defined for t >= 1, got {t}")
        if t > self.horizon:
            raise BeyondHorizonError(f"t={t} is past the recorded horizon {self.horizon}")
        return float(self.values[t - 1])

    def inverse(self, alpha: float) -> int | _BeyondHorizon:
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        hits = np.flatnonzero(self.values <= alpha)
        if hits.size == 0:
            return BEYOND_HORIZON
        return int(hits[0]) + 1

    def describe(self) -> dict:
        return {"kind": self.kind, "values": self.values.tolist()}


def envelope_of(sequence: Sequence[float], nu: float) -> EmpiricalEnvelope:
    """Pointwise-smallest non-increasing dominator of ``|sequence - nu|``."""
    dev = np.abs(np.asarray(sequence, dtype=float) - nu)
    if dev.size == 0:
        raise ValueError("sequence must be nonempty")
    return EmpiricalEnvelope(np.maximum.accumulate(dev[::-1])[::-1])


def envelope_inverse(env: Envelope, alpha: float) -> int | _BeyondHorizon:
    return env.inverse(alpha)


# --- named families ------------------------------------------------------------

def power_envelope(c: float = 1.0, p: float = 1.0) -> ClosedFormEnvelope:
    """``c / t**p``."""
    if c < 0 or p <= 0:
        raise ValueError("power envelope needs c >= 0 and p > 0")
    return ClosedFormEnvelope("power", lambda t: c / float(t) ** p, c=c, p=p)


def exponential_envelope(c: float = 1.0, rho: float = 0.5) -> ClosedFormEnvelope:
    """``c * rho**t``; ``rho = 1/2`` gives ``2**-t``."""
    if c < 0 or not 0 < rho < 1:
        raise ValueError("exponential envelope needs c >= 0 and 0 < rho < 1")
    return ClosedFormEnvelope("exponential", lambda t: c * rho ** float(t), c=c, rho=rho)


def staircase_envelope(c: float = 1.0, h: float = 0.5, width: int = 1) -> ClosedFormEnvelope:
    """``c * h**floor((t-1)/width)``: constant on blocks of ``width`` iterations."""
    if c < 0 or not 0 < h < 1 or width < 1:
        raise ValueError("staircase envelope needs c >= 0, 0 < h < 1, width >= 1")
    return ClosedFormEnvelope("staircase", lambda t: c * h ** float((t - 1) // width),
                              c=c, h=h, width=width)


def zero_envelope() -> ClosedFormEnvelope:
    return ClosedFormEnvelope("zero", lambda t: 0.0)


def scaled_envelope(env: Envelope, scale: float) -> ClosedFormEnvelope:
    if scale < 0:
        raise ValueError("scale must be non-negative")
    return ClosedFormEnvelope("scaled", lambda t: scale * env(t),
                              scale=scale, base=env.describe())


def max_envelope(envs: Sequence[Envelope]) -> ClosedFormEnvelope:
    """Pointwise maximum; non-increasing whenever every member is."""
    envs = list(envs)
    return ClosedFormEnvelope("max", lambda t: max(e(t) for e in envs),
                              members=[e.describe() for e in envs])


def sgd_envelope(sigma_max: float, n: int, delta: float) -> ClosedFormEnvelope:
    """``sigma_max * log(n t / delta) / t``, made non-increasing.

    The raw expression rises for ``t < e*delta/n`` (only possible at t = 1).
    There it is replaced by its supremum over ``s >= t`` so that the result is
    still an upper bound.
    """
    if not sigma_max > 0:
        raise ValueError("sigma_max must be positive")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n < 1:
        raise ValueError("n must be positive")
    peak = math.e * delta / n

    def raw(t: float) -> float:
        return sigma_max * math.log(n * t / delta) / t

    def gamma(t: int) -> float:
        if t >= peak:
            return raw(t)
        last = max(t, math.ceil(peak))
        return max(raw(s) for s in range(t, last + 1))

    return ClosedFormEnvelope("sgd", gamma, sigma_max=sigma_max, n=n, delta=delta)


# --- limit profiles and budget calculators -------------------------------------

@dataclass(frozen=True)
class LimitProfile:
    """Sorted arm limits with a unique best arm."""

    nus: tuple[float, ...]

    def __post_init__(self):
        nus = tuple(float(v) for v in self.nus)
        object.__setattr__(self, "nus", nus)
        if len(nus) < 2:
            raise ValueError("a limit profile needs at least 2 arms")
        if any(b < a for a, b in zip(nus, nus[1:])):
            raise ValueError("limits must be sorted ascending")
        if not nus[1] > nus[0]:
            raise ValueError("the best arm must be unique: need nu_2 > nu_1")

    @classmethod
    def from_limits(cls, limits: Sequence[float]) -> "LimitProfile":
        return cls(tuple(sorted(limits)))

    @property
    def n(self) -> int:
        return len(self.nus)

    def half_gaps(self) -> list[float]:
        """``(nu_i - nu_1)/2`` for ``i = 2..n``."""
        return [(v - self.nus[0]) / 2 for v in self.nus[1:]]


@dataclass(frozen=True)
class BudgetBound:
    """A budget ``z``; ``z is None`` when an inverse fell beyond the horizon."""

    z: int | None
    form: str
    n: int
    inverses: tuple = field(default=(), repr=False)

    @property
    def computable(self) -> bool:
        return self.z is not None


@dataclass(frozen=True)
class SHBudget:
    """Sufficient budgets for Successive Halving.

    ``max_form`` is the guarantee.  ``sum_form`` is the looser representation
    ``2L(n + sum_{i>=2} g_i)`` exactly as usually written; ``sum_form_full``
    adds the ``i = 1`` term ``g_1 := g_2``, which is what the classical
    ``H2 <= H1`` comparison needs (see ``representation_holds``).
    """

    max_form: BudgetBound
    sum_form: BudgetBound
    sum_form_full: BudgetBound

    @property
    def z(self) -> int | None:
        return self.max_form.z


def _inverses(profile: LimitProfile, gbar: Envelope) -> list:
    return [gbar.inverse(a) for a in profile.half_gaps()]


def sh_sufficient_budget(profile: LimitProfile, gbar: Envelope) -> SHBudget:
    n = profile.n
    L = ceil_log2(n)
    inv = _inverses(profile, gbar)
    if any(g is BEYOND_HORIZON for g in inv):
        bounds = [BudgetBound(None, f, n, tuple(inv))
                  for f in ("sh-max", "sh-sum", "sh-sum-full")]
        return SHBudget(*bounds)
    inv = tuple(int(g) for g in inv)
    z_max = 2 * L * max(i * (1 + g) for i, g in enumerate(inv, start=2))
    z_sum = 2 * L * (n + sum(inv))
    z_full = 2 * L * (n + inv[0] + sum(inv))
    return SHBudget(BudgetBound(z_max, "sh-max", n, inv),
                    BudgetBound(z_sum, "sh-sum", n, inv),
                    BudgetBound(z_full, "sh-sum-full", n, inv))


def uniform_sufficient_budget(profile: LimitProfile, gbar: Envelope) -> BudgetBound:
    """``n * gbar^-1((nu_2 - nu_1)/2)``; the inverse is largest at ``i = 2``."""
    n = profile.n
    inv = _inverses(profile, gbar)
    if any(g is BEYOND_HORIZON for g in inv):
        return BudgetBound(None, "uniform", n, tuple(inv))
    inv = tuple(int(g) for g in inv)
    return BudgetBound(n * max(inv), "uniform", n, inv)


# necessity (adversarial construction) uses the same number
uniform_necessary_budget = uniform_sufficient_budget


def representation_holds(bounds: SHBudget, *, full: bool = False) -> bool:
    """``max_form <= sum_form <= log2(2n) * max_form``."""
    hi = bounds.sum_form_full if full else bounds.sum_form
    z = bounds.max_form.z
    n = bounds.max_form.n
    return z <= hi.z <= math.log2(2 * n) * z


# --- adversarial construction --------------------------------------------------

@dataclass(frozen=True)
class LossSequence:
    """Closed-form loss sequence ``limit + sign * beta(t)``."""

    limit: float
    sign: int
    beta: Envelope

    def __call__(self, t: int) -> float:
        return self.limit + self.sign * self.beta(t)

    def values(self, horizon: int) -> list[float]:
        return [self(t) for t in range(1, horizon + 1)]


def _check_decreasing(beta: Envelope, probe: int = 4096) -> None:
    prev = beta(1)
    if prev < 0:
        raise ValueError("beta must be non-negative")
    ts = list(range(2, probe + 1)) + [1 << k for k in range(13, 63, 3)]
    for t in ts:
        cur = beta(t)
        if cur > prev or cur < 0:
            raise ValueError(f"beta is not non-increasing (beta({t}) = {cur} > {prev})")
        prev = cur


def adversarial_instance(profile: LimitProfile, beta: Envelope) -> list[LossSequence]:
    """Best arm approaches its limit from above, all others from below.

    Every arm then has envelope exactly ``beta``, and uniform allocation with
    ``T = floor(B/n)`` pulls per arm picks arm 0 iff
    ``beta(T) < (nu_2 - nu_1)/2``.
    """
    _check_decreasing(beta)
    seqs = [LossSequence(profile.nus[0], +1, beta)]
    seqs += [LossSequence(v, -1, beta) for v in profile.nus[1:]]
    return seqs


# --- sub-optimality bounds -----------------------------------------------------

def sh_suboptimality_bound(budget: int, n: int, gbar: Envelope) -> float:
    """``ceil(log2 n) * 2 * gbar(floor(B / (n ceil(log2 n))))``."""
    L = ceil_log2(n)
    t = budget // (n * L)
    if n < 2 or t < 1:
        raise InfeasibleBudget("sh", budget, n * L, n)
    return L * 2 * gbar(t)


def uniform_suboptimality_bound(budget: int, n: int, gbar: Envelope) -> float:
    """``2 * gbar(floor(B/n))``."""
    if n < 2 or budget < n:
        raise InfeasibleBudget("uniform", budget, n, n)
    return 2 * gbar(budget // n)
