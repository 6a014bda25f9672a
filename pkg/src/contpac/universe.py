"""Core types shared by the learners, generators, and oracles.

Points live in a finite universe and are handled as plain integer indices.
A task is a finitely supported distribution over labeled points.  Hypotheses
are binary classifiers over the universe; classes bundle hypotheses with the
metadata the learners need (VC hints, enumeration, ERM).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class BudgetExceeded(Exception):
    """An exhaustive search was asked to do more work than its budget allows."""


class RealizabilityError(Exception):
    """No hypothesis in the class is consistent with the given tasks/sample."""


class Universe:
    """A finite point universe.  Points are indices in [0, size)."""

    def __init__(self, size):
        if size <= 0:
            raise ValueError("universe size must be positive")
        self.size = int(size)

    @property
    def bits_per_point(self):
        """Bits needed to write down one point."""
        return max(1, math.ceil(math.log2(self.size)))

    def describe(self):
        return {"kind": "generic", "size": self.size}


@dataclass(frozen=True)
class LabeledExample:
    point: int
    label: int
    tag: int = 0  # 64-bit tie-breaking tag, drawn fresh per sample


class TaskDistribution:
    """A finitely supported distribution over labeled points.

    Every support point carries exactly one label, so the task is trivially
    consistent with itself; realizability against a class is a separate check.
    """

    MASS_TOL = 1e-12

    def __init__(self, universe, points, labels, masses, task_id=None):
        self.universe = universe
        self.points = np.asarray(points, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.uint8)
        self.masses = np.asarray(masses, dtype=np.float64)
        self.task_id = task_id
        if not (len(self.points) == len(self.labels) == len(self.masses)):
            raise ValueError("points, labels, masses must have equal length")
        if len(self.points) == 0:
            raise ValueError("empty support")
        if len(np.unique(self.points)) != len(self.points):
            raise ValueError("duplicate support points")
        if self.points.min() < 0 or self.points.max() >= universe.size:
            raise ValueError("support point outside universe")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        if (self.masses <= 0).any():
            raise ValueError("masses must be positive")
        total = self.masses.sum()
        if abs(total - 1.0) > self.MASS_TOL:
            raise ValueError(f"masses sum to {total!r}, not 1")
        self.masses = self.masses / total

    @property
    def support_size(self):
        return len(self.points)

    def sample(self, rng, size):
        """Draw `size` iid support indices (not universe points)."""
        return rng.choice(self.support_size, size=size, p=self.masses)


def empirical_loss(hypothesis, points, labels):
    """Fraction of the sample the hypothesis gets wrong."""
    points = np.asarray(points, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.uint8)
    if len(points) == 0:
        raise ValueError("empty sample")
    return float(np.mean(hypothesis.evaluate(points) != labels))


def distribution_loss(hypothesis, task):
    """Mass of the task on which the hypothesis disagrees with the label."""
    wrong = hypothesis.evaluate(task.points) != task.labels
    return float(task.masses[wrong].sum())


class Hypothesis:
    """Binary classifier over a universe."""

    repr_bits = 0

    def evaluate(self, points):
        """Vectorized evaluation: int64 point array -> uint8 0/1 array."""
        raise NotImplementedError

    def __call__(self, point):
        return int(self.evaluate(np.asarray([point], dtype=np.int64))[0])

    def describe(self):
        raise NotImplementedError


class TableHypothesis(Hypothesis):
    """Explicit truth table; costs one bit per universe point to store."""

    def __init__(self, universe, table):
        self.universe = universe
        self.table = np.asarray(table, dtype=np.uint8)
        if len(self.table) != universe.size:
            raise ValueError("table length must equal universe size")
        self.repr_bits = universe.size

    def evaluate(self, points):
        return self.table[points]

    def describe(self):
        return {"kind": "table", "table": self.table.tolist()}


class MajorityVote(Hypothesis):
    """Majority over component hypotheses; ties go to label 1."""

    def __init__(self, members):
        if not members:
            raise ValueError("majority vote needs at least one member")
        self.members = list(members)
        self.repr_bits = sum(h.repr_bits for h in self.members)

    def evaluate(self, points):
        votes = np.zeros(len(points), dtype=np.int64)
        for h in self.members:
            votes += h.evaluate(points)
        return (2 * votes >= len(self.members)).astype(np.uint8)

    def describe(self):
        return {"kind": "majority", "members": [h.describe() for h in self.members]}


class HypothesisClass:
    """A hypothesis class over one universe.

    Subclasses either stay small enough to enumerate or override `erm`
    with something structured.
    """

    def __init__(self, universe, vc_upper_hint):
        self.universe = universe
        self.vc_upper_hint = int(vc_upper_hint)

    @property
    def cardinality(self):
        raise NotImplementedError

    def members(self):
        """Yield hypotheses in a fixed documented order (used for tie-breaks)."""
        raise NotImplementedError

    def erm(self, points, labels, budget=2_000_000):
        """First empirical-loss minimizer in enumeration order."""
        if self.cardinality > budget:
            raise BudgetExceeded(
                f"class has {self.cardinality} members, enumeration budget is {budget}"
            )
        points = np.asarray(points, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.uint8)
        best = None
        best_err = None
        for h in self.members():
            err = int(np.sum(h.evaluate(points) != labels))
            if best_err is None or err < best_err:
                best, best_err = h, err
                if err == 0:
                    break
        return best


class ExplicitClass(HypothesisClass):
    """A class given by an explicit hypothesis list (testing / tiny scale)."""

    def __init__(self, universe, hypotheses, vc_upper_hint=None):
        if vc_upper_hint is None:
            vc_upper_hint = max(1, math.ceil(math.log2(max(2, len(hypotheses)))))
        super().__init__(universe, vc_upper_hint)
        self._members = list(hypotheses)

    @property
    def cardinality(self):
        return len(self._members)

    def members(self):
        return iter(self._members)


def check_realizable(cls, tasks, budget=2_000_000):
    """Search the class for a member with zero loss on every task.

    Returns such a hypothesis, or None.  Exhaustive, so only usable on
    enumerable classes; raises BudgetExceeded otherwise.
    """
    if cls.cardinality > budget:
        raise BudgetExceeded(
            f"class has {cls.cardinality} members, realizability budget is {budget}"
        )
    for h in cls.members():
        if all(distribution_loss(h, task) == 0.0 for task in tasks):
            return h
    return None


@dataclass
class VCResult:
    dimension: int
    exact: bool  # False means the search hit the cap: true dimension >= cap
    shattered_witness: tuple = field(default_factory=tuple)


def vc_dimension_bruteforce(cls, cap=16, budget=50_000_000):
    """Exact VC dimension by levelwise shattering search.

    Builds the full (hypotheses x points) prediction matrix, deduplicates
    behaviors, then grows shattered sets one point at a time; a set can only
    be shattered if all its subsets are (so the frontier stays small).  The
    budget caps the number of (candidate set x hypothesis) pattern checks.
    """
    size = cls.universe.size
    if cls.cardinality * size > budget:
        raise BudgetExceeded("prediction matrix exceeds budget")
    matrix = np.stack([h.evaluate(np.arange(size)) for h in cls.members()])
    matrix = np.unique(matrix, axis=0)

    work = 0
    witness = ()
    # level 1: points on which the class is not constant
    frontier = []
    for x in range(size):
        col = matrix[:, x]
        if col.min() != col.max():
            frontier.append((x,))
    if not frontier:
        return VCResult(0, True)
    level = 1
    seen = set(frontier)
    while level < cap:
        witness = frontier[0]
        nxt = []
        for s in frontier:
            for x in range(s[-1] + 1, size):
                cand = s + (x,)
                # hereditary prune: every sub-level-set must already be shattered
                if any(cand[:i] + cand[i + 1:] not in seen for i in range(level)):
                    continue
                work += matrix.shape[0]
                if work > budget:
                    raise BudgetExceeded("shattering search exceeded budget")
                patterns = matrix[:, cand] @ (1 << np.arange(level + 1))
                if len(np.unique(patterns)) == 1 << (level + 1):
                    nxt.append(cand)
        if not nxt:
            return VCResult(level, True, witness)
        frontier = nxt
        seen.update(nxt)
        level += 1
    return VCResult(cap, False, frontier[0])
