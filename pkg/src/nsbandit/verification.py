"""Randomized instances with known limits and envelopes, and the property suites
that check the budget guarantees against actual strategy runs.

Instance families (all frozen by seed):

* base envelope: power ``c/t^p``, exponential ``c rho^t``, staircase
  ``c h^floor((t-1)/w)`` or the SGD form ``sigma log(n t/delta)/t``;
* per-arm envelope ``gamma_i = s_i * base`` with ``s_i`` in ``[0.3, 1]``;
* losses ``nu_i + gamma_i(t) * u_i(t)`` with ``|u_i(t)| <= 1`` following one of
  the sign patterns in :data:`PATTERNS`;
* the best arm is placed at a random position.

Because ``|loss - nu_i| <= gamma_i(t)`` and ``gamma_i`` is non-increasing, the
family envelope dominates the tightest one, so budgets computed from it remain
valid (if conservative).
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import SequenceArm
from .strategies import ceil_log2, min_budget, successive_halving, successive_rejects, uniform
from .theory import (
    BEYOND_HORIZON,
    Envelope,
    LimitProfile,
    adversarial_instance,
    exponential_envelope,
    max_envelope,
    power_envelope,
    scaled_envelope,
    sgd_envelope,
    sh_suboptimality_bound,
    sh_sufficient_budget,
    staircase_envelope,
    uniform_suboptimality_bound,
    uniform_sufficient_budget,
)

PATTERNS = ("adversarial", "above", "below", "alternating", "noise", "damped")
FAMILIES = ("power", "exponential", "staircase", "sgd")
SELECTORS = ("t1", "t2", "t3", "t4", "separation", "all")


def _unit(seed: int, arm: int, t: int) -> float:
    """Deterministic pseudo-random value in [-1, 1] for (seed, arm, t)."""
    digest = hashlib.blake2b(struct.pack("<qqq", seed, arm, t), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2 ** 63 - 1.0


@dataclass
class ArmSpec:
    nu: float
    envelope: Envelope
    pattern: str
    seed: int
    is_best: bool

    def __call__(self, t: int) -> float:
        g = self.envelope(t)
        p = self.pattern
        if p == "adversarial":
            u = 1.0 if self.is_best else -1.0
        elif p == "above":
            u = 1.0
        elif p == "below":
            u = -1.0
        elif p == "alternating":
            u = 1.0 if t % 2 else -1.0
        elif p == "noise":
            u = _unit(self.seed, 0, t)
        else:  # damped: slowly rotating sign, |u| <= 1
            u = math.cos(t / 3.0 + self.seed % 7)
        return self.nu + g * u


@dataclass
class Instance:
    arms: list[ArmSpec]
    gbar: Envelope
    family: dict
    seed: int

    @property
    def n(self) -> int:
        return len(self.arms)

    @property
    def best(self) -> int:
        return next(i for i, a in enumerate(self.arms) if a.is_best)

    @property
    def nus(self) -> list[float]:
        return [a.nu for a in self.arms]

    @property
    def profile(self) -> LimitProfile:
        return LimitProfile.from_limits(self.nus)

    def to_arms(self) -> list[SequenceArm]:
        return [SequenceArm(i, spec) for i, spec in enumerate(self.arms)]

    def describe(self, horizon: int = 0) -> dict:
        out = {
            "seed": self.seed,
            "family": self.family,
            "nus": self.nus,
            "best": self.best,
            "patterns": [a.pattern for a in self.arms],
            "scales": [a.envelope.params.get("scale") for a in self.arms],
        }
        if horizon:
            out["sequences"] = [[spec(t) for t in range(1, horizon + 1)] for spec in self.arms]
        return out


def _base_envelope(rng: np.random.Generator, n: int) -> tuple[Envelope, dict]:
    family = FAMILIES[rng.integers(len(FAMILIES))]
    if family == "power":
        c, p = float(rng.uniform(0.05, 2.0)), float(rng.uniform(0.4, 2.0))
        return power_envelope(c, p), {"name": family, "c": c, "p": p}
    if family == "exponential":
        c, rho = float(rng.uniform(0.05, 2.0)), float(rng.uniform(0.3, 0.98))
        return exponential_envelope(c, rho), {"name": family, "c": c, "rho": rho}
    if family == "staircase":
        c, h = float(rng.uniform(0.05, 2.0)), float(rng.uniform(0.2, 0.8))
        w = int(rng.integers(1, 30))
        return staircase_envelope(c, h, w), {"name": family, "c": c, "h": h, "width": w}
    sigma, delta = float(rng.uniform(0.01, 1.0)), float(rng.uniform(0.01, 0.5))
    return sgd_envelope(sigma, n, delta), {"name": family, "sigma": sigma, "delta": delta}


def random_instance(seed: int, n: int | None = None, *, n_max: int = 64) -> Instance:
    rng = np.random.default_rng(seed)
    if n is None:
        n = int(rng.integers(2, n_max + 1))
    base, family = _base_envelope(rng, n)
    scales = rng.uniform(0.3, 1.0, size=n)
    nu1 = float(rng.uniform(-1.0, 1.0))
    min_gap = float(10 ** rng.uniform(-2, -0.3))
    gaps = np.sort(rng.uniform(min_gap, 1.0, size=n - 1))
    gaps[0] = min_gap
    limits = [nu1] + [nu1 + float(g) for g in gaps]
    pattern_mode = PATTERNS[rng.integers(len(PATTERNS))]
    positions = rng.permutation(n)
    arms: list[ArmSpec | None] = [None] * n
    for rank, pos in enumerate(positions):
        pattern = pattern_mode
        if pattern_mode == "noise" and rng.random() < 0.3:
            pattern = PATTERNS[rng.integers(len(PATTERNS))]
        arms[pos] = ArmSpec(limits[rank], scaled_envelope(base, float(scales[pos])),
                            pattern, int(seed * 1000 + pos), rank == 0)
    gbar = scaled_envelope(base, float(scales.max()))
    return Instance(arms, gbar, family | {"pattern": pattern_mode}, seed)


# --- suites --------------------------------------------------------------------

@dataclass
class SuiteReport:
    name: str
    checks: int = 0
    passed: int = 0
    skipped: int = 0
    counterexamples: list[dict] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def failed(self) -> int:
        return self.checks - self.passed

    def check(self, ok: bool, details: Callable[[], dict]) -> None:
        self.checks += 1
        if ok:
            self.passed += 1
        else:
            self.counterexamples.append(details())

    def to_dict(self) -> dict:
        return {"checks": self.checks, "passed": self.passed, "failed": self.failed,
                "skipped": self.skipped, "counterexamples": self.counterexamples,
                **({"notes": self.notes} if self.notes else {})}


def _seeds(seed: int, count: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(count)]


def _budgets_above(rng: np.random.Generator, z: int) -> list[int]:
    return sorted({z + 1, z + 1 + int(rng.integers(0, z + 1))})


def suite_t1(count: int, seed: int) -> SuiteReport:
    """Successive Halving returns the best arm whenever ``B > z``."""
    rep = SuiteReport("t1")
    for s in _seeds(seed, count):
        inst = random_instance(s)
        z = sh_sufficient_budget(inst.profile, inst.gbar).z
        if z is None:
            rep.skipped += 1
            continue
        for budget in _budgets_above(np.random.default_rng(s), z):
            res = successive_halving(inst.to_arms(), budget, record_pulls=False)
            rep.check(res.winner == inst.best, lambda: {
                "budget": budget, "z": z, "winner": res.winner,
                "instance": inst.describe(horizon=min(budget, 500))})
    return rep


def suite_t2(count: int, seed: int) -> SuiteReport:
    """Uniform allocation returns the best arm whenever ``B > n gbar^-1(gap/2)``."""
    rep = SuiteReport("t2")
    for s in _seeds(seed, count):
        inst = random_instance(s)
        z = uniform_sufficient_budget(inst.profile, inst.gbar).z
        if z is None:
            rep.skipped += 1
            continue
        for budget in _budgets_above(np.random.default_rng(s), z):
            res = uniform(inst.to_arms(), budget, record_pulls=False)
            rep.check(res.winner == inst.best, lambda: {
                "budget": budget, "z": z, "winner": res.winner,
                "instance": inst.describe(horizon=min(budget // inst.n, 500))})
    return rep


def _random_beta(rng: np.random.Generator) -> Envelope:
    kind = rng.integers(3)
    if kind == 0:
        return power_envelope(float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.5, 2.0)))
    if kind == 1:
        return exponential_envelope(float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.3, 0.95)))
    return staircase_envelope(float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.2, 0.8)),
                              int(rng.integers(1, 10)))


def sharpness_check(profile: LimitProfile, beta: Envelope, budget: int) -> dict:
    """Run uniform on the adversarial construction at one budget.

    Returns the outcome, the predicted outcome and whether the budget is an
    exact boundary tie (which the prediction does not cover).
    """
    n = profile.n
    boundary = uniform_sufficient_budget(profile, beta).z
    seqs = adversarial_instance(profile, beta)
    res = uniform([SequenceArm(i, f) for i, f in enumerate(seqs)], budget, record_pulls=False)
    t = budget // n
    alpha = (profile.nus[1] - profile.nus[0]) / 2
    best_loss = seqs[0](t)
    rival = min(f(t) for f in seqs[1:])
    tie = best_loss == rival or math.isclose(beta(t), alpha, rel_tol=1e-12, abs_tol=1e-15)
    return {"budget": budget, "boundary": boundary, "success": res.winner == 0,
            "predicted": budget >= boundary, "tie": tie}


def suite_t3(count: int, seed: int) -> SuiteReport:
    """Uniform succeeds on the adversarial construction iff ``B >= boundary``."""
    rep = SuiteReport("t3")
    anchor_profile = LimitProfile((0.0, 0.6))
    anchor_beta = power_envelope(1.0, 1.0)
    rep.notes["anchor"] = {
        "nus": list(anchor_profile.nus), "beta": "1/t",
        "boundary": uniform_sufficient_budget(anchor_profile, anchor_beta).z,
        "runs": [sharpness_check(anchor_profile, anchor_beta, b) for b in (6, 7, 8)],
    }
    for s in _seeds(seed, count):
        rng = np.random.default_rng(s)
        n = int(rng.integers(2, 17))
        nu1 = float(rng.uniform(-1, 1))
        gaps = np.sort(rng.uniform(0.02, 1.0, size=n - 1))
        profile = LimitProfile(tuple([nu1] + [nu1 + float(g) for g in gaps]))
        beta = _random_beta(rng)
        boundary = uniform_sufficient_budget(profile, beta).z
        if boundary is None:
            rep.skipped += 1
            continue
        candidates = {n, boundary - 1, boundary, boundary + 1, boundary + n - 1}
        candidates |= {int(b) for b in rng.integers(n, 3 * boundary + n, size=20)}
        for budget in sorted(b for b in candidates if b >= n):
            out = sharpness_check(profile, beta, budget)
            if out["tie"]:
                rep.skipped += 1
                continue
            rep.check(out["success"] == out["predicted"], lambda: {
                **out, "nus": list(profile.nus), "beta": beta.describe()})
    return rep


def suite_t4(count: int, seed: int) -> SuiteReport:
    """Realized gap of the winner never exceeds the sub-optimality bounds."""
    rep = SuiteReport("t4")
    for s in _seeds(seed, count):
        inst = random_instance(s)
        rng = np.random.default_rng(s + 1)
        n, L = inst.n, ceil_log2(inst.n)
        nu1 = min(inst.nus)
        for _ in range(2):
            budget = int(n * L * 10 ** rng.uniform(0, 3))
            sh = successive_halving(inst.to_arms(), budget, record_pulls=False)
            gap = inst.nus[sh.winner] - nu1
            bound = sh_suboptimality_bound(budget, n, inst.gbar)
            rep.check(gap <= bound, lambda: {"strategy": "sh", "budget": budget, "gap": gap,
                                             "bound": bound, "instance": inst.describe()})
            un = uniform(inst.to_arms(), budget, record_pulls=False)
            gap_u = inst.nus[un.winner] - nu1
            bound_u = uniform_suboptimality_bound(budget, n, inst.gbar)
            rep.check(gap_u <= bound_u, lambda: {"strategy": "uniform", "budget": budget,
                                                 "gap": gap_u, "bound": bound_u,
                                                 "instance": inst.describe()})
    return rep


def suite_separation(count: int, seed: int) -> SuiteReport:
    """Past both arms' inverse envelopes at half the gap, the order of losses is the order of limits."""
    rep = SuiteReport("separation")
    for s in _seeds(seed, count):
        inst = random_instance(s)
        rng = np.random.default_rng(s + 2)
        best = inst.arms[inst.best]
        nu1 = best.nu
        for i, arm in enumerate(inst.arms):
            if i == inst.best:
                continue
            alpha = (arm.nu - nu1) / 2
            gi, g1 = arm.envelope.inverse(alpha), best.envelope.inverse(alpha)
            if gi is BEYOND_HORIZON or g1 is BEYOND_HORIZON:
                rep.skipped += 1
                continue
            base = max(gi, g1)
            ti = base + 1 + int(rng.integers(0, 2 * base + 1))
            t1 = base + 1 + int(rng.integers(0, 2 * base + 1))
            li, l1 = arm(ti), best(t1)
            rep.check(li > l1, lambda: {"arm": i, "t_i": ti, "t_1": t1, "loss_i": li,
                                        "loss_1": l1, "instance": inst.describe()})
    return rep


def suite_budget_safety(count: int, seed: int) -> SuiteReport:
    """Successive Halving never pulls more than its budget."""
    rep = SuiteReport("budget_safety")
    for s in _seeds(seed, count):
        rng = np.random.default_rng(s)
        n = int(rng.integers(2, 65))
        budget = int(rng.integers(min_budget("sh", n), 200_000))
        arms = [SequenceArm(i, (lambda v: lambda t: v)(float(rng.random()))) for i in range(n)]
        res = successive_halving(arms, budget, record_pulls=False)
        rep.check(res.ledger.total_pulls <= budget,
                  lambda: {"n": n, "budget": budget, "pulls": res.ledger.total_pulls})
    return rep


def suite_observations(count: int, seed: int) -> SuiteReport:
    """Loss-observation counts: uniform = n, SH <= 2n+1, SR <= (n+1)n/2."""
    rep = SuiteReport("observations")
    for s in _seeds(seed, count):
        inst = random_instance(s, n_max=48)
        rng = np.random.default_rng(s + 3)
        n = inst.n
        for name, fn, limit, exact in (("uniform", uniform, n, True),
                                       ("sh", successive_halving, 2 * n + 1, False),
                                       ("sr", successive_rejects, (n + 1) * n // 2, False)):
            budget = int(min_budget(name, n) * 10 ** rng.uniform(0, 2))
            obs = fn(inst.to_arms(), budget, record_pulls=False).ledger.loss_observations
            ok = obs == limit if exact else obs <= limit
            rep.check(ok, lambda: {"strategy": name, "n": n, "budget": budget,
                                   "observations": obs, "limit": limit})
    return rep


def suite_representation(count: int, seed: int, *, full: bool = False) -> SuiteReport:
    """``max-form z <= sum-form z <= log2(2n) max-form z`` on random profiles."""
    from .theory import representation_holds

    rep = SuiteReport("representation_full" if full else "representation")
    for s in _seeds(seed, count):
        inst = random_instance(s)
        bounds = sh_sufficient_budget(inst.profile, inst.gbar)
        if bounds.z is None:
            rep.skipped += 1
            continue
        rep.check(representation_holds(bounds, full=full), lambda: {
            "n": inst.n, "max_form": bounds.max_form.z, "sum_form": bounds.sum_form.z,
            "sum_form_full": bounds.sum_form_full.z,
            "log2_2n_times_max": math.log2(2 * inst.n) * bounds.max_form.z,
            "nus": inst.nus, "family": inst.family})
    return rep


SUITES = {
    "t1": suite_t1,
    "t2": suite_t2,
    "t3": suite_t3,
    "t4": suite_t4,
    "separation": suite_separation,
}


def spread_limit_budgets(n: int, sigma_max: float = 1.0, delta: float = 0.1) -> dict:
    """Exact budgets for limits ``nu_a = a/n`` under the SGD envelope."""
    profile = LimitProfile(tuple(a / n for a in range(1, n + 1)))
    gbar = sgd_envelope(sigma_max, n, delta)
    L = ceil_log2(n)
    log_term = math.log(n * n * sigma_max / delta)
    return {
        "n": n,
        "z_sh": sh_sufficient_budget(profile, gbar).z,
        "z_uniform": uniform_sufficient_budget(profile, gbar).z,
        "closed_sh": 8 * n * L * sigma_max * log_term,
        "closed_uniform": 2 * n * n * sigma_max * log_term,
    }


def run_suites(selector: str, count: int, seed: int) -> dict:
    if selector not in SELECTORS:
        raise KeyError(f"unknown selector {selector!r}; choose from {', '.join(SELECTORS)}")
    names = list(SUITES) if selector == "all" else [selector]
    reports = {name: SUITES[name](count, seed).to_dict() for name in names}
    return {
        "selector": selector,
        "instances": count,
        "seed": seed,
        "suites": reports,
        "counterexamples": sum(r["failed"] for r in reports.values()),
    }
