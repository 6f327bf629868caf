import json

import pytest

from nsbandit.theory import LimitProfile, power_envelope
from nsbandit.verification import (
    SUITES,
    random_instance,
    run_suites,
    sharpness_check,
    suite_budget_safety,
    suite_observations,
    suite_representation,
)


@pytest.mark.parametrize("name", sorted(SUITES))
def test_suites_find_no_counterexamples(name):
    report = SUITES[name](40, 11)
    assert report.checks > 0
    assert report.failed == 0, report.counterexamples[:1]


def test_sharpness_anchor():
    profile, beta = LimitProfile((0.0, 0.6)), power_envelope(1, 1)
    outcomes = {b: sharpness_check(profile, beta, b) for b in (6, 7, 8)}
    assert all(o["boundary"] == 8 for o in outcomes.values())
    assert not outcomes[6]["success"] and not outcomes[7]["success"]
    assert outcomes[8]["success"]


def test_safety_and_observation_suites():
    assert suite_budget_safety(100, 2).failed == 0
    assert suite_observations(60, 2).failed == 0


def test_full_representation_suite():
    assert suite_representation(100, 5, full=True).failed == 0


def test_random_instance_is_seeded():
    a, b = random_instance(17), random_instance(17)
    assert a.describe(8) == b.describe(8)
    assert a.nus[a.best] == min(a.nus)
    assert random_instance(18).describe(8) != a.describe(8)


def test_report_is_json_and_counts_failures():
    report = run_suites("t3", 5, 0)
    json.dumps(report)
    assert report["counterexamples"] == 0
    assert report["suites"]["t3"]["notes"]["anchor"]["boundary"] == 8


def test_unknown_selector():
    with pytest.raises(KeyError):
        run_suites("t9", 1, 0)
