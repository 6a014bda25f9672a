"""Pointer-chasing hypothesis class built on Reed-Solomon rows.

The communication game: Alice holds f_A, Bob holds f_B, both maps on
[n_ptr] = [k*d*b], and the target is the parity of the pointer reached after
2c+2 alternating hops starting from 1.  The hypothesis class encodes Alice's
hops into labeled blocks so that any hypothesis consistent with the task
distributions must reproduce the chase, and the final pointer's parity can
be read back off the hypothesis parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lines import smallest_prime_at_least
from .universe import (
    Hypothesis,
    HypothesisClass,
    RealizabilityError,
    TaskDistribution,
    Universe,
    distribution_loss,
)


def rs_encode(symbols, m, p):
    """Evaluate the polynomial with coefficients `symbols` at points 0..m-1 mod p.

    This is the [m, len(symbols)] Reed-Solomon row used for block labels;
    two distinct rows agree on fewer than len(symbols) positions.
    """
    symbols = np.asarray(symbols, dtype=np.int64)
    xs = np.arange(m, dtype=np.int64)
    out = np.zeros(m, dtype=np.int64)
    for coeff in symbols[::-1]:  # Horner, elementwise mod to stay in int64
        out = (out * xs + int(coeff)) % p
    return out


def chase_pointers(f_a, f_b, c):
    """Alternate f_a / f_b for 2c+2 steps from pointer 1 (1-based maps).

    Returns the full trace [w1, ..., w_{2c+2}]; the game's answer is
    w_{2c+2} mod 2.
    """
    trace = [1]
    for step in range(2, 2 * c + 3):
        f = f_a if step % 2 == 0 else f_b
        trace.append(int(f[trace[-1] - 1]))
    return trace


class PointerUniverse(Universe):
    """Two sections (Alice/Bob), k blocks each, 2d cells per block, p values."""

    def __init__(self, c, k, d, b):
        self.c, self.k, self.d, self.b = int(c), int(k), int(d), int(b)
        self.n_ptr = self.k * self.d * self.b
        self.n_sym = self.n_ptr**self.b  # symbol alphabet size, == |B|
        self.p = smallest_prime_at_least(self.n_sym)
        super().__init__(2 * self.k * 2 * self.d * self.p)

    def encode(self, section, block, cell, value):
        two_d = 2 * self.d
        return ((np.asarray(section) * self.k + block) * two_d + cell) * self.p + value

    def decode(self, points):
        points = np.asarray(points, dtype=np.int64)
        value = points % self.p
        rest = points // self.p
        cell = rest % (2 * self.d)
        rest //= 2 * self.d
        block = rest % self.k
        section = rest // self.k
        return section, block, cell, value

    # pointer <-> integer: rho((i, j, l)) with all coordinates 1-based
    def rho(self, i, j, l):
        return (i - 1) * self.d * self.b + (j - 1) * self.b + l

    def rho_inv(self, w):
        w0 = w - 1
        l = w0 % self.b
        rest = w0 // self.b
        j = rest % self.d
        i = rest // self.d
        return (i + 1, j + 1, l + 1)

    def pack_symbol(self, pointers):
        """b pointer values in [n_ptr], little-endian base n_ptr -> symbol in B."""
        val = 0
        for idx, w in enumerate(pointers):
            val += (w - 1) * self.n_ptr**idx
        return val

    def unpack_symbol(self, symbol, coord):
        """coord-th (1-based) pointer value packed inside a symbol."""
        return symbol // self.n_ptr ** (coord - 1) % self.n_ptr + 1

    def describe(self):
        return {
            "kind": "pointer",
            "c": self.c,
            "k": self.k,
            "d": self.d,
            "b": self.b,
            "p": self.p,
        }


def _run_procedure(universe, symbol_rows):
    """Replay the block-marking procedure for a symbol table A.

    symbol_rows is (2c+1, d) with entries in B.  Returns (alice_marks,
    bob_marks, trace): marks map block -> row index whose symbols label it,
    and trace is the induced pointer sequence w1..w_{2c+2}.
    """
    u = universe
    alice, bob = {}, {}
    trace = [1]
    for step in range(2, 2 * u.c + 3):
        marks = alice if step % 2 == 0 else bob
        i, j, l = u.rho_inv(trace[-1])
        if i not in marks:
            marks[i] = step - 1
        row = marks[i]
        trace.append(u.unpack_symbol(int(symbol_rows[row - 1, j - 1]), l))
    return alice, bob, trace


class PointerHypothesis(Hypothesis):
    """Defined by the symbol table A; marked blocks carry RS labels, rest are all-1."""

    def __init__(self, universe, symbol_rows):
        self.universe = universe
        self.symbol_rows = np.asarray(symbol_rows, dtype=np.int64).reshape(
            2 * universe.c + 1, universe.d
        )
        u = universe
        self.repr_bits = (2 * u.c + 1) * u.d * max(1, math.ceil(math.log2(u.n_sym)))
        self.alice_marks, self.bob_marks, self.trace = _run_procedure(
            universe, self.symbol_rows
        )
        # marked block (0-based, matching decode) -> its 2d RS label values
        self._rows = {}
        for section, marks in ((0, self.alice_marks), (1, self.bob_marks)):
            for block, row in marks.items():
                self._rows[(section, block - 1)] = rs_encode(
                    self.symbol_rows[row - 1], 2 * u.d, u.p
                )

    def evaluate(self, points):
        section, block, cell, value = self.universe.decode(points)
        out = np.ones(len(points), dtype=np.uint8)
        for (sec, blk), z in self._rows.items():
            here = (section == sec) & (block == blk)
            if here.any():
                out[here] = (value[here] == z[cell[here]]).astype(np.uint8)
        return out

    def describe(self):
        return {"kind": "pointer", "symbols": self.symbol_rows.tolist()}


def decode_pointer_parity(hypothesis):
    """Parity of the final chased pointer, read from the hypothesis alone."""
    return hypothesis.trace[-1] % 2


class PointerClass(HypothesisClass):
    def __init__(self, universe):
        u = universe
        super().__init__(u, vc_upper_hint=4 * u.c * u.d + 2 * u.c + 2 * u.d + 1)

    @property
    def cardinality(self):
        u = self.universe
        return u.n_sym ** ((2 * u.c + 1) * u.d)

    def members(self):
        u = self.universe
        rows = (2 * u.c + 1) * u.d
        for flat in np.ndindex(*([u.n_sym] * rows)):
            yield PointerHypothesis(u, np.asarray(flat).reshape(2 * u.c + 1, u.d))

    def erm(self, points, labels, budget=None):
        """Consistent member via replaying the marking procedure.

        All task points are label 1, so a consistent table only has to match
        the RS rows of the blocks its own chase visits; each freshly marked
        block's row is interpolated from the observed labels of that block.
        Falls back to enumeration only if the sample is label-0 polluted.
        """
        points = np.asarray(points, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.uint8)
        if (labels == 0).any():
            return super().erm(points, labels, budget=budget or 2_000_000)
        u = self.universe
        section, block, cell, value = u.decode(points)
        observed = {}
        for s, blk, cl, val in zip(section, block, cell, value):
            key = (int(s), int(blk) + 1)
            observed.setdefault(key, {})[int(cl)] = int(val)

        symbols = np.zeros((2 * u.c + 1, u.d), dtype=np.int64)
        marks = ({}, {})
        trace = [1]
        for step in range(2, 2 * u.c + 3):
            sec = 0 if step % 2 == 0 else 1
            i, j, l = u.rho_inv(trace[-1])
            if i not in marks[sec]:
                marks[sec][i] = step - 1
                cells = observed.get((sec, i), {})
                if len(cells) < u.d:
                    raise RealizabilityError(
                        f"block {(sec, i)} underdetermined: saw {len(cells)} of "
                        f"{2 * u.d} cells, need at least {u.d} to interpolate"
                    )
                symbols[step - 2] = _interpolate_row(u, cells)
            row = marks[sec][i]
            trace.append(u.unpack_symbol(int(symbols[row - 1, j - 1]), l))
        return PointerHypothesis(u, symbols)


def _interpolate_row(universe, cells):
    """Recover d RS coefficients from observed (cell, value) labels mod p."""
    u = universe
    xs = np.asarray(sorted(cells)[: u.d], dtype=np.int64)
    ys = np.asarray([cells[int(x)] for x in xs], dtype=np.int64)
    # Lagrange interpolation over F_p, then verify against every observed cell
    coeffs = [0] * u.d
    for idx in range(u.d):
        num = [1]  # ascending-degree coefficients of prod (x - xs[jdx])
        denom = 1
        for jdx in range(u.d):
            if jdx == idx:
                continue
            root = int(xs[jdx])
            num = [
                ((num[deg - 1] if deg > 0 else 0) - root * (num[deg] if deg < len(num) else 0))
                % u.p
                for deg in range(len(num) + 1)
            ]
            denom = denom * (int(xs[idx]) - root) % u.p
        scale = int(ys[idx]) * pow(denom % u.p, u.p - 2, u.p) % u.p
        for deg, cv in enumerate(num):
            coeffs[deg] = (coeffs[deg] + cv * scale) % u.p
    coeffs = np.asarray(coeffs, dtype=np.int64)
    full = rs_encode(coeffs, 2 * u.d, u.p)
    for cl, val in cells.items():
        if full[cl] != val:
            raise RealizabilityError("observed block labels are not an RS row")
    if not all(0 <= cf < u.n_sym for cf in coeffs):
        raise RealizabilityError("interpolated symbols fall outside the alphabet")
    return coeffs


@dataclass
class PointerInstance:
    universe: PointerUniverse
    hypothesis_class: PointerClass
    tasks: list
    witness: PointerHypothesis
    meta: dict


def generate_pointer_instance(c, k, d, b, eps, f_a, f_b, alpha=None):
    """Tasks exposing Alice's and Bob's RS-labeled blocks, plus the witness table.

    Full scale takes alpha = floor(1/(4 eps)) with k pointer blocks split
    into k/alpha tasks per side; desk scale passes alpha explicitly.
    """
    universe = PointerUniverse(c, k, d, b)
    u = universe
    if alpha is None:
        alpha = math.floor(1.0 / (4.0 * eps))
        scale = "full"
    else:
        scale = "desk"
    if alpha < 1 or k % alpha != 0:
        raise ValueError("alpha must be a positive divisor of k")
    f_a = np.asarray(f_a, dtype=np.int64)
    f_b = np.asarray(f_b, dtype=np.int64)
    for f in (f_a, f_b):
        if len(f) != u.n_ptr or f.min() < 1 or f.max() > u.n_ptr:
            raise ValueError("pointer maps must send [n_ptr] into [n_ptr]")

    # symbol y_{i, j} packs the b pointer images of block i, coordinate j
    def side_symbols(f):
        table = np.zeros((k, d), dtype=np.int64)
        for i in range(1, k + 1):
            for j in range(1, d + 1):
                table[i - 1, j - 1] = u.pack_symbol(
                    [int(f[u.rho(i, j, l) - 1]) for l in range(1, b + 1)]
                )
        return table

    y_a, y_b = side_symbols(f_a), side_symbols(f_b)

    tasks = []
    mass = 1.0 / (2 * alpha * d)
    for section, table in ((0, y_a), (1, y_b)):
        for i in range(k // alpha):
            pts = []
            for blk in range(i * alpha, (i + 1) * alpha):
                z = rs_encode(table[blk], 2 * d, u.p)
                pts.append(u.encode(section, blk, np.arange(2 * d), z))
            pts = np.concatenate(pts)
            tasks.append(
                TaskDistribution(
                    u,
                    pts,
                    np.ones(len(pts), dtype=np.uint8),
                    np.full(len(pts), mass),
                    task_id=len(tasks) + 1,
                )
            )

    trace = chase_pointers(f_a, f_b, c)
    symbols = np.zeros((2 * c + 1, d), dtype=np.int64)
    for row in range(1, 2 * c + 2):
        table = y_a if (row + 1) % 2 == 0 else y_b
        blk = u.rho_inv(trace[row - 1])[0]
        symbols[row - 1] = table[blk - 1]
    witness = PointerHypothesis(u, symbols)
    if witness.trace != trace:
        raise RealizabilityError("witness table does not reproduce the chase")
    for task in tasks:
        if distribution_loss(witness, task) != 0.0:
            raise RealizabilityError(f"witness errs on task {task.task_id}")

    meta = {
        "family": "pointer",
        "scale": scale,
        "c": c,
        "k": k,
        "d": d,
        "b": b,
        "eps": eps,
        "alpha": alpha,
        "p": u.p,
        "n_ptr": u.n_ptr,
        "parity": trace[-1] % 2,
    }
    return PointerInstance(u, PointerClass(u), tasks, witness, meta)
