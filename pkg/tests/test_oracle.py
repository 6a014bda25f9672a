import math

import numpy as np
import pytest

from contpac.learner import LearnerParams, Threshold, ThresholdTable
from contpac.oracle import Oracle
from contpac.universe import BudgetExceeded, TableHypothesis, TaskDistribution, Universe


def two_task_setup(c=2):
    """Two 2-atom tasks with one hypothesis that misses one atom of task 1."""
    u = Universe(4)
    t1 = TaskDistribution(u, [0, 1], [1, 1], [0.5, 0.5], task_id=1)
    t2 = TaskDistribution(u, [2, 3], [1, 1], [0.25, 0.75], task_id=2)
    params = LearnerParams(2, 2, 2, c, 0.1, 0.01, n_slots=10)
    h = TableHypothesis(u, [0, 1, 1, 1])  # misses atom 0 of task 1
    return u, [t1, t2], params, h


def test_fraction_and_kept_mass_closed_form():
    u, tasks, params, h = two_task_setup()
    table = ThresholdTable()
    # pass 2 threshold for task 1: key (miss=1, point=0, tag=0.4)
    table.set(1, 2, [Threshold(1, 0, 0.4, params.eta)])
    table.set(2, 2, [Threshold(0, 3, 0.5, 0.0)])
    oracle = Oracle(tasks, params, table, [h])
    # task 1: atom 0 ties the threshold -> keeps 0.4 of its tags; atom 1 precedes
    assert oracle.fraction(1, 2, 2).tolist() == [0.4, 1.0]
    assert oracle.kept_mass(1, 2, 2) == pytest.approx(0.5 * 0.4 + 0.5)
    # tail mass of the level-1 cut: (1 - 0.7) / 1
    assert oracle.tail_mass(1, 2, 1) == pytest.approx(0.3)
    # task 2: atom 2 precedes (point 2 < 3), atom 3 ties with tag fraction 0.5
    assert oracle.fraction(2, 2, 2).tolist() == [1.0, 0.5]
    assert oracle.kept_mass(2, 2, 2) == pytest.approx(0.25 + 0.75 * 0.5)


def test_truncated_pmf_first_pass_is_raw_task():
    u, tasks, params, h = two_task_setup()
    oracle = Oracle(tasks, params, ThresholdTable(), [])
    w, pmf = oracle.truncated_weight_and_pmf(2, 1)
    assert w == pytest.approx(1.0)
    assert pmf.tolist() == [0.25, 0.75]


def test_truncated_pmf_reweights_and_caps():
    u, tasks, params, h = two_task_setup()
    table = ThresholdTable()
    table.set(1, 2, [Threshold(1, 0, 0.4, params.eta)])
    oracle = Oracle(tasks, params, table, [h])
    w, pmf = oracle.truncated_weight_and_pmf(1, 2)
    e = math.exp(params.eta)
    # atom 0: mass .5, fraction enters via the level-1 *filter* only for
    # levels below t-1; at t=2 there is no filter, weight min(e^eta, cap=e^eta)
    assert w == pytest.approx(0.5 * e + 0.5)
    assert pmf[0] == pytest.approx(0.5 * e / (0.5 * e + 0.5))


def test_potential_starts_at_one_and_tracks_misses():
    u, tasks, params, h = two_task_setup()
    table = ThresholdTable()
    table.set(1, 2, [Threshold(1, 0, 1.0, params.eta)])
    table.set(2, 2, [Threshold(0, 3, 1.0, 0.0)])
    oracle = Oracle(tasks, params, table, [h])
    assert oracle.potential(1) == 1.0
    # Phi_2 = mean over tasks of sum mu * e^(eta * miss), full tag fractions
    want = 0.5 * (0.5 * math.exp(params.eta) + 0.5) + 0.5 * 1.0
    assert oracle.potential(2) == pytest.approx(want)


def test_hierarchy_audit_flags_injected_violation():
    u, tasks, params, h = two_task_setup(c=2)
    table = ThresholdTable()
    # pass 2 cuts atoms hard; the audit pass 3 keeps everything at level 1,
    # so the level-2 kept set grows from pass 2 to pass 3: a violation
    table.set(1, 2, [Threshold(0, 0, 0.1, 0.0)])
    table.set(2, 2, [Threshold(0, 2, 0.1, 0.0)])
    table.set(1, 3, [Threshold(1, 3, 1.0, params.eta), Threshold(1, 3, 1.0, params.eta)])
    table.set(2, 3, [Threshold(1, 3, 1.0, params.eta), Threshold(1, 3, 1.0, params.eta)])
    oracle = Oracle(tasks, params, table, [h, h])
    rows = [r for r in oracle.audit_hierarchy() if r.tau == 2]
    assert any(not r.ok for r in rows)
    assert all(r.margin < 0 for r in rows if not r.ok)


def test_hierarchy_audit_clean_when_nested():
    u, tasks, params, h = two_task_setup(c=2)
    table = ThresholdTable()
    table.set(1, 2, [Threshold(1, 0, 0.8, params.eta)])
    table.set(2, 2, [Threshold(0, 3, 0.8, 0.0)])
    # audit pass keeps strictly less at the same level
    table.set(1, 3, [Threshold(1, 0, 0.5, params.eta), Threshold(1, 0, 0.5, params.eta)])
    table.set(2, 3, [Threshold(0, 3, 0.5, 0.0), Threshold(0, 3, 0.5, 0.0)])
    oracle = Oracle(tasks, params, table, [h, h])
    assert all(r.ok for r in oracle.audit_hierarchy())


def test_quantile_audit_band_edges():
    u, tasks, params, h = two_task_setup()
    table = ThresholdTable()
    table.set(1, 2, [Threshold(1, 0, 0.99, params.eta)])
    oracle = Oracle(tasks, params, table, [h])
    rows = oracle.audit_quantiles()
    assert len(rows) == 1
    row = rows[0]
    # tail mass = 1 - (0.5 * 0.99 + 0.5) = 0.005, band centered on eps_2
    assert row.value == pytest.approx(0.005)
    assert row.low == pytest.approx((1 - params.gamma) * params.eps_schedule[2])
    assert row.ok == (row.low <= 0.005 <= row.high)


def test_weight_audit_tolerance():
    u, tasks, params, h = two_task_setup()
    table = ThresholdTable()
    oracle = Oracle(tasks, params, table, [])
    rows = oracle.audit_weights({(1, 1): 1.0, (2, 1): 1.0 + params.alpha})
    assert rows[0].ok
    assert not rows[1].ok


def test_support_cap():
    u = Universe(600)
    tasks = [
        TaskDistribution(u, np.arange(300), np.ones(300), np.full(300, 1 / 300)),
        TaskDistribution(u, np.arange(300, 600), np.ones(300), np.full(300, 1 / 300)),
    ]
    params = LearnerParams(2, 2, 10, 2, 0.1, 0.01, n_slots=10)
    with pytest.raises(BudgetExceeded):
        Oracle(tasks, params, ThresholdTable(), [])
