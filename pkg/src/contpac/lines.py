"""Planar-line hypothesis class and the one-pass hard-instance generator.

A point is (block, cell, (r1, r2)) with r1, r2 in a prime field of order p.
A hypothesis picks one block and one line per cell; it labels everything
outside its block 1, and inside the block labels a point 1 exactly when it
lies on that cell's line a: a1*r1 + r2 == a2 (mod p).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .universe import (
    Hypothesis,
    HypothesisClass,
    RealizabilityError,
    TaskDistribution,
    Universe,
    distribution_loss,
)

_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n):
    """Deterministic Miller-Rabin, valid for all 64-bit integers."""
    if n < 2:
        return False
    for q in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def largest_prime_at_most(x):
    x = int(x)
    while x >= 2:
        if is_prime(x):
            return x
        x -= 1
    raise ValueError("no prime at or below given bound")


def smallest_prime_at_least(x):
    x = max(2, int(x))
    while True:
        if is_prime(x):
            return x
        x += 1


class LineUniverse(Universe):
    """Points (block, cell, r1, r2): n blocks, d cells, p*p grid per cell."""

    def __init__(self, n, d, p):
        self.n = int(n)
        self.d = int(d)
        self.p = int(p)
        if not is_prime(self.p):
            raise ValueError(f"p={p} is not prime")
        super().__init__(self.n * self.d * self.p * self.p)

    def encode(self, block, cell, r1, r2):
        return ((np.asarray(block) * self.d + cell) * self.p + r1) * self.p + r2

    def decode(self, points):
        points = np.asarray(points, dtype=np.int64)
        r2 = points % self.p
        rest = points // self.p
        r1 = rest % self.p
        rest //= self.p
        cell = rest % self.d
        block = rest // self.d
        return block, cell, r1, r2

    def describe(self):
        return {"kind": "line", "n": self.n, "d": self.d, "p": self.p}


class LineHypothesis(Hypothesis):
    """One block index plus one line (a1, a2) per cell."""

    def __init__(self, universe, block, lines):
        self.universe = universe
        self.block = int(block)
        self.lines = np.asarray(lines, dtype=np.int64).reshape(universe.d, 2)
        self.repr_bits = (
            max(1, math.ceil(math.log2(universe.n)))
            + 2 * universe.d * max(1, math.ceil(math.log2(universe.p)))
        )

    def evaluate(self, points):
        block, cell, r1, r2 = self.universe.decode(points)
        a1 = self.lines[cell, 0]
        a2 = self.lines[cell, 1]
        on_line = (a1 * r1 + r2) % self.universe.p == a2
        return np.where(block != self.block, 1, on_line).astype(np.uint8)

    def describe(self):
        return {"kind": "line", "block": self.block, "lines": self.lines.tolist()}


class LineClass(HypothesisClass):
    def __init__(self, universe):
        super().__init__(universe, vc_upper_hint=2 * universe.d)

    @property
    def cardinality(self):
        u = self.universe
        return u.n * (u.p * u.p) ** u.d

    def members(self):
        u = self.universe
        coords = range(u.p)
        for block in range(u.n):
            for flat in itertools.product(coords, repeat=2 * u.d):
                yield LineHypothesis(u, block, np.asarray(flat).reshape(u.d, 2))

    def erm(self, points, labels, budget=None):
        """Exact ERM without enumeration.

        For a fixed block choice, cells are independent and the only lines
        worth distinguishing are scored by how many sampled points they hit,
        which we tabulate over the full (a1, a2) grid in one vectorized pass.
        Ties break toward the first hypothesis in enumeration order, i.e.
        smallest block then lexicographically smallest line parameters.
        """
        u = self.universe
        points = np.asarray(points, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.uint8)
        rows = np.stack([points, labels.astype(np.int64)], axis=1)
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        block, cell, r1, r2 = u.decode(uniq[:, 0])
        lab = uniq[:, 1]
        zeros_total = int(counts[lab == 0].sum())

        best = None  # (err, block, lines)
        a1_col = np.arange(u.p)[:, None]
        for i in range(u.n):
            in_block = block == i
            zeros_outside = zeros_total - int(counts[in_block & (lab == 0)].sum())
            err = zeros_outside
            lines = np.zeros((u.d, 2), dtype=np.int64)
            for j in range(u.d):
                here = in_block & (cell == j)
                if not here.any():
                    continue  # any line works; keep (0, 0)
                ones_here = here & (lab == 1)
                base = int(counts[ones_here].sum())
                # err(a1, a2) = base - (ones on line) + (zeros on line)
                grid = np.full((u.p, u.p), base, dtype=np.int64)
                delta = np.where(lab[here] == 1, -counts[here], counts[here])
                a2_hits = (a1_col * r1[here][None, :] + r2[here][None, :]) % u.p
                np.add.at(grid, (np.broadcast_to(a1_col, a2_hits.shape), a2_hits), delta)
                flat_best = int(np.argmin(grid))
                lines[j] = divmod(flat_best, u.p)
                err += int(grid.flat[flat_best])
            if best is None or err < best[0]:
                best = (err, i, lines)
                if err == 0:
                    break  # later blocks can at best tie, and the first wins
        return LineHypothesis(u, best[1], best[2])


@dataclass
class Instance:
    """A generated continual-learning problem: tasks plus a planted witness."""

    universe: Universe
    hypothesis_class: HypothesisClass
    tasks: list
    witness: Hypothesis
    meta: dict


def generate_line_instance(k, d, eps, seed, b=None, n=None, p=None):
    """Build k label-1 line tasks plus one label-0 exclusion task.

    Full scale derives (n, p) from (k, eps, b); passing n and p
    explicitly selects desk scale, where eps no longer constrains n.
    """
    rng = np.random.default_rng(seed)
    if n is None or p is None:
        if b is None:
            raise ValueError("need b to derive (n, p)")
        alpha = math.floor(1.0 / (100.0 * eps))
        if alpha < 1:
            raise ValueError("eps too large for full scale; pass n and p explicitly")
        n = k * alpha
        p = largest_prime_at_most(math.floor(2 ** (b / 2) / math.sqrt(n * d)))
        scale = "full"
    else:
        if n % k != 0:
            raise ValueError("n must be a multiple of k")
        alpha = n // k
        scale = "desk"
    t = math.floor(0.2 * p)
    if t < 1:
        raise ValueError("p too small: decoy set would be empty")

    universe = LineUniverse(n, d, p)
    cls = LineClass(universe)
    lines = rng.integers(0, p, size=(n, d, 2))

    tasks = []
    cell_mass = 1.0 / (alpha * d * p)
    for i in range(k):
        pts = []
        for block in range(i * alpha, (i + 1) * alpha):
            for j in range(d):
                a1, a2 = lines[block, j]
                r1 = np.arange(p)
                r2 = (a2 - a1 * r1) % p
                pts.append(universe.encode(block, j, r1, r2))
        pts = np.concatenate(pts)
        tasks.append(
            TaskDistribution(
                universe,
                pts,
                np.ones(len(pts), dtype=np.uint8),
                np.full(len(pts), cell_mass),
                task_id=i + 1,
            )
        )

    i_star = int(rng.integers(0, n))
    decoys = np.empty((d, t), dtype=np.int64)
    excluded_pts = []
    for j in range(d):
        a1, a2 = lines[i_star, j]
        true_flat = int(a1 * p + a2)
        others = np.setdiff1d(np.arange(p * p), [true_flat])
        picked = rng.choice(others, size=t - 1, replace=False) if t > 1 else []
        decoys[j] = np.concatenate(([true_flat], np.sort(np.asarray(picked, dtype=np.int64))))
        on_any = np.zeros((p, p), dtype=bool)
        for flat in decoys[j]:
            da1, da2 = divmod(int(flat), p)
            r1 = np.arange(p)
            on_any[r1, (da2 - da1 * r1) % p] = True
        r1_off, r2_off = np.nonzero(~on_any)
        excluded_pts.append(universe.encode(i_star, j, r1_off, r2_off))
    off_pts = np.concatenate(excluded_pts)
    if len(off_pts) == 0:
        raise RealizabilityError("decoy lines cover the whole block")
    tasks.append(
        TaskDistribution(
            universe,
            off_pts,
            np.zeros(len(off_pts), dtype=np.uint8),
            np.full(len(off_pts), 1.0 / len(off_pts)),
            task_id=k + 1,
        )
    )

    witness = LineHypothesis(universe, i_star, lines[i_star])
    for task in tasks:
        if distribution_loss(witness, task) != 0.0:
            raise RealizabilityError(f"witness errs on task {task.task_id}")

    meta = {
        "family": "line",
        "scale": scale,
        "k": k,
        "d": d,
        "eps": eps,
        "seed": seed,
        "n": n,
        "p": p,
        "alpha": alpha,
        "t": t,
        "i_star": i_star,
        "off_support": int(len(off_pts)),
    }
    return Instance(universe, cls, tasks, witness, meta)
