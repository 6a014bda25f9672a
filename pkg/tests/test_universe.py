import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contpac.universe import (
    BudgetExceeded,
    ExplicitClass,
    MajorityVote,
    TableHypothesis,
    TaskDistribution,
    Universe,
    check_realizable,
    distribution_loss,
    empirical_loss,
    vc_dimension_bruteforce,
)


def table(universe, bits):
    return TableHypothesis(universe, np.asarray(bits, dtype=np.uint8))


def test_empirical_loss_constant_one():
    u = Universe(4)
    h = table(u, [1, 1, 1, 1])
    assert empirical_loss(h, [0, 1, 2, 3], [1, 0, 0, 1]) == 0.5


def test_empirical_loss_rejects_empty_sample():
    u = Universe(2)
    with pytest.raises(ValueError):
        empirical_loss(table(u, [0, 1]), [], [])


def test_distribution_loss_weighted():
    u = Universe(3)
    d = TaskDistribution(u, [0, 1, 2], [1, 1, 0], [0.5, 0.25, 0.25])
    h = table(u, [1, 0, 0])
    assert distribution_loss(h, d) == 0.25


def test_task_distribution_validation():
    u = Universe(3)
    with pytest.raises(ValueError):
        TaskDistribution(u, [0, 0], [1, 1], [0.5, 0.5])  # duplicate point
    with pytest.raises(ValueError):
        TaskDistribution(u, [0, 1], [1, 2], [0.5, 0.5])  # bad label
    with pytest.raises(ValueError):
        TaskDistribution(u, [0, 1], [1, 1], [0.5, 0.6])  # mass sum off
    with pytest.raises(ValueError):
        TaskDistribution(u, [0, 5], [1, 1], [0.5, 0.5])  # outside universe


def test_task_distribution_normalizes_tiny_drift():
    u = Universe(2)
    d = TaskDistribution(u, [0, 1], [1, 0], [0.5, 0.5 + 1e-13])
    assert d.masses.sum() == pytest.approx(1.0, abs=0)


def test_erm_prefers_first_minimizer():
    u = Universe(2)
    hyps = [table(u, [1, 1]), table(u, [1, 0]), table(u, [0, 1])]
    cls = ExplicitClass(u, hyps)
    # both h1 and h2 have one error; the earlier one must win
    got = cls.erm([0, 1], [0, 0])
    assert got is hyps[1]


def test_erm_budget():
    u = Universe(2)
    cls = ExplicitClass(u, [table(u, [0, 0])] * 5)
    with pytest.raises(BudgetExceeded):
        cls.erm([0], [0], budget=2)


def test_check_realizable_finds_witness():
    u = Universe(2)
    hyps = [table(u, [1, 1]), table(u, [1, 0])]
    cls = ExplicitClass(u, hyps)
    d = TaskDistribution(u, [0, 1], [1, 0], [0.5, 0.5])
    assert check_realizable(cls, [d]) is hyps[1]
    d_bad = TaskDistribution(u, [0, 1], [0, 1], [0.5, 0.5])
    assert check_realizable(cls, [d_bad]) is None


def test_majority_vote_ties_go_to_one():
    u = Universe(1)
    h = MajorityVote([table(u, [1]), table(u, [0])])
    assert h(0) == 1
    assert h.repr_bits == 2


def test_vc_bruteforce_known_classes():
    u = Universe(4)
    # threshold functions: VC 1
    thresholds = [table(u, [1] * i + [0] * (4 - i)) for i in range(5)]
    assert vc_dimension_bruteforce(ExplicitClass(u, thresholds)).dimension == 1
    # all boolean functions on 3 points: VC 3
    u3 = Universe(3)
    cube = [table(u3, [(m >> i) & 1 for i in range(3)]) for m in range(8)]
    res = vc_dimension_bruteforce(ExplicitClass(u3, cube))
    assert res.dimension == 3 and res.exact
    # constant class: VC 0
    assert vc_dimension_bruteforce(ExplicitClass(u, [table(u, [1] * 4)])).dimension == 0


def test_vc_bruteforce_cap_reports_lower_bound():
    u = Universe(3)
    cube = [table(u, [(m >> i) & 1 for i in range(3)]) for m in range(8)]
    res = vc_dimension_bruteforce(ExplicitClass(u, cube), cap=2)
    assert res.dimension == 2 and not res.exact


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_vc_at_most_log_of_class_size(data):
    size = data.draw(st.integers(3, 6))
    n_hyp = data.draw(st.integers(1, 12))
    u = Universe(size)
    tables = data.draw(
        st.lists(
            st.lists(st.integers(0, 1), min_size=size, max_size=size),
            min_size=n_hyp,
            max_size=n_hyp,
        )
    )
    cls = ExplicitClass(u, [table(u, t) for t in tables])
    distinct = len({tuple(t) for t in tables})
    res = vc_dimension_bruteforce(cls)
    assert res.dimension <= max(0, distinct - 1).bit_length()
