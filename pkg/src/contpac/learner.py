"""Multi-pass boosted learner with quantile-truncated importance sampling.

Each pass re-streams the tasks in order.  Per task the learner estimates a
chain of weight-quantile thresholds, estimates the task's surviving weight,
and refreshes a shared reservoir of training slots with rejection samples
from the truncated reweighted task; the pass ends with an ERM fit on the
reservoir and the final output is the majority vote of the per-pass fits.

Samples carry a fresh 64-bit tie tag so that quantile thresholds can cut
through heavy atoms fractionally; all comparisons use the total order
(miss count, point, tag).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .universe import MajorityVote

TAG_SCALE = 2.0**-64  # tags compare as tag * 2^-64 in [0, 1)


class ParamError(Exception):
    """Requested learner parameters violate a schedule invariant."""


class AccessViolation(Exception):
    """A task was sampled outside its stage of the current pass."""


class QuantileSampleDepleted(Exception):
    """Fewer than half the quantile-estimation draws survived the filters."""


class RejectionBudgetExceeded(Exception):
    """Rejection sampling used more attempts than the configured budget."""


@dataclass
class Constants:
    """Multiplicative constants for the sample-size formulas (tunable)."""

    c_n: float = 4.0
    c_m1: float = 4.0
    c_m2: float = 4.0
    c_r: float = 64.0


class LearnerParams:
    """Derived schedule for k tasks, VC hint d, point size b bits, c passes."""

    def __init__(self, k, d, b, c, eps, delta, constants=None, n_slots=None):
        if not (0 < eps <= 0.1):
            raise ParamError("eps must be in (0, 1/10]")
        if not (0 < delta < 1):
            raise ParamError("delta must be in (0, 1)")
        if k < 1 or c < 1 or d < 1 or b < 1:
            raise ParamError("k, d, b, c must be positive")
        self.k, self.d, self.b, self.c = int(k), int(d), int(b), int(c)
        self.eps, self.delta = float(eps), float(delta)
        self.constants = constants or Constants()

        self.alpha = 0.25 * (2 * k / eps) ** (-2.0 / c)
        if not (0 < self.alpha <= 0.25):
            raise ParamError("alpha left (0, 1/4]")
        self.eta = math.log((1 - self.alpha) / self.alpha)
        self.gamma = 1.0 / (10.0 * c * c)
        # eps_t for t = 0 .. c+1; index c+1 backs the imagined audit pass
        self.eps_schedule = [
            (1 + 1 / c) ** t * eps / (20 * c) for t in range(c + 2)
        ]
        if self.eps_schedule[c] > eps / 10 + 1e-15:
            raise ParamError("truncation schedule exceeds eps/10 by pass c")
        for t in range(c):
            lo = (1 - self.gamma) * self.eps_schedule[t + 1]
            hi = (1 + self.gamma) * self.eps_schedule[t]
            growth = (
                (1 - (1 - self.gamma) * self.eps_schedule[t])
                / (1 - (1 + self.gamma) * self.eps_schedule[t + 1])
            ) ** c
            if lo / hi < growth:
                raise ParamError(f"quantile schedule too flat at t={t}")

        cst = self.constants
        eps0 = self.eps_schedule[0]
        self.n_slots = (
            int(n_slots)
            if n_slots is not None
            else math.ceil(cst.c_n * (d + math.log(c / delta)) / self.alpha)
        )
        self.m1 = math.ceil(cst.c_m1 * c**4 * math.log(k * c / delta) / eps0)
        self.m2 = math.ceil(
            cst.c_m2 * math.log(k * c / delta) / (eps0 * self.alpha**2)
        )
        self.attempt_budget = math.ceil(
            cst.c_r * c * math.log(k * d * c / (eps * delta)) / eps0
        )

    def describe(self):
        return {
            "k": self.k,
            "d": self.d,
            "b": self.b,
            "c": self.c,
            "eps": self.eps,
            "delta": self.delta,
            "alpha": self.alpha,
            "eta": self.eta,
            "gamma": self.gamma,
            "n_slots": self.n_slots,
            "m1": self.m1,
            "m2": self.m2,
            "constants": vars(self.constants),
        }


@dataclass(frozen=True)
class Threshold:
    """Quantile cut: the key (miss, point, tag) of the selected sample."""

    miss: int
    point: int
    tag: float  # stored as tag * 2^-64, i.e. already in [0, 1)
    log_weight: float  # eta * miss

    @property
    def weight(self):
        return math.exp(self.log_weight)


class ThresholdTable:
    """thresholds[(i, t)] -> list of Threshold for levels tau = 1 .. t-1."""

    def __init__(self):
        self._table = {}

    def set(self, i, t, thresholds):
        self._table[(i, t)] = list(thresholds)

    def get(self, i, t):
        return self._table.get((i, t), [])

    def items(self):
        return self._table.items()


class Ledger:
    """Bit-level memory accounting plus raw draw counters.

    Components are charged by name; `peak_bits` tracks the running maximum
    of the total.  Draw counters include every raw sample pulled from a task,
    rejected attempts included.
    """

    def __init__(self):
        self.components = {}
        self.peak_bits = 0
        self.samples_drawn = {}
        self.rejections = {}

    @property
    def current_bits(self):
        return sum(self.components.values())

    def charge(self, name, bits):
        self.components[name] = int(bits)
        self.peak_bits = max(self.peak_bits, self.current_bits)

    def count_draws(self, task_id, n, rejected=0):
        self.samples_drawn[task_id] = self.samples_drawn.get(task_id, 0) + int(n)
        if rejected:
            self.rejections[task_id] = self.rejections.get(task_id, 0) + int(rejected)

    def snapshot(self):
        return {
            "peak_bits": self.peak_bits,
            "current_bits": self.current_bits,
            "components": dict(self.components),
            "samples_drawn": dict(self.samples_drawn),
            "rejections": dict(self.rejections),
        }


class TaskState:
    """Per-task view the subroutines work against: pmf plus miss-count rows."""

    def __init__(self, task):
        self.task = task
        self.points = task.points
        self.labels = task.labels
        self.pmf = task.masses
        self._miss_rows = []  # one 0/1 row per fitted hypothesis

    def note_hypothesis(self, hypothesis):
        wrong = (hypothesis.evaluate(self.points) != self.labels).astype(np.int64)
        self._miss_rows.append(wrong)

    def cum_miss(self, level):
        """Miss counts against the first `level` hypotheses, per support atom."""
        if level == 0:
            return np.zeros(len(self.points), dtype=np.int64)
        return np.sum(self._miss_rows[:level], axis=0)

    @property
    def passes_seen(self):
        return len(self._miss_rows)


def keep_fraction(state, thresholds):
    """Per-atom surviving tag fraction under a chain of strict-precedence cuts.

    Level nu keeps a sample when its key (miss_nu, point, tag) strictly
    precedes the stored threshold key; for an atom that ties the threshold on
    (miss, point) this keeps exactly the tag fraction below the threshold tag.
    """
    frac = np.ones(len(state.points))
    for level, th in enumerate(thresholds, start=1):
        miss = state.cum_miss(level)
        below = (miss < th.miss) | ((miss == th.miss) & (state.points < th.point))
        at = (miss == th.miss) & (state.points == th.point)
        frac = np.minimum(frac, np.where(below, 1.0, np.where(at, th.tag, 0.0)))
    return frac


def _quantile_rank(eps_t, kept_total):
    return math.ceil(eps_t * kept_total)


def estimate_quantile(state, t, params, rng, ledger=None, eps_t=None):
    """Estimate the threshold chain for levels tau = 1 .. t-1.

    Each level draws m1 fresh samples, filters by the previously selected
    levels, and takes the ceil(eps_t * kept)-th largest key.  Draws are
    simulated in aggregate: per-atom multinomial counts, binomial filter
    thinning, and a Beta order statistic for the boundary tag reproduce the
    per-sample process exactly in distribution.
    """
    eps_t = params.eps_schedule[t] if eps_t is None else eps_t
    thresholds = []
    for tau in range(1, t):
        counts = rng.multinomial(params.m1, state.pmf)
        if ledger is not None:
            ledger.count_draws(state.task.task_id, params.m1)
        frac = keep_fraction(state, thresholds)
        kept = rng.binomial(counts, frac)
        total = int(kept.sum())
        if total < params.m1 / 2:
            raise QuantileSampleDepleted(
                f"task {state.task.task_id} pass {t} level {tau}: "
                f"{total} of {params.m1} draws survived"
            )
        miss = state.cum_miss(tau)
        order = np.lexsort((-state.points, -miss))  # descending (miss, point)
        rank = _quantile_rank(eps_t, total)
        cum = np.cumsum(kept[order])
        pos = int(np.searchsorted(cum, rank))
        atom = int(order[pos])
        within = rank - (int(cum[pos - 1]) if pos > 0 else 0)
        n_atom = int(kept[atom])
        # within-th largest of n_atom iid uniform tags below frac[atom]
        tag = float(frac[atom]) * float(rng.beta(n_atom - within + 1, within))
        thresholds.append(
            Threshold(
                miss=int(miss[atom]),
                point=int(state.points[atom]),
                tag=tag,
                log_weight=params.eta * int(miss[atom]),
            )
        )
    return thresholds


def estimate_quantile_literal(state, t, params, rng, eps_t=None):
    """Reference per-sample implementation of `estimate_quantile`."""
    eps_t = params.eps_schedule[t] if eps_t is None else eps_t
    thresholds = []
    for tau in range(1, t):
        atoms = rng.choice(len(state.points), size=params.m1, p=state.pmf)
        tags = rng.integers(0, 2**64, size=params.m1, dtype=np.uint64) * TAG_SCALE
        keep = np.ones(params.m1, dtype=bool)
        for level, th in enumerate(thresholds, start=1):
            miss = state.cum_miss(level)[atoms]
            pts = state.points[atoms]
            keep &= (miss < th.miss) | (
                (miss == th.miss) & ((pts < th.point) | ((pts == th.point) & (tags < th.tag)))
            )
        if int(keep.sum()) < params.m1 / 2:
            raise QuantileSampleDepleted("too few surviving draws")
        atoms, tags = atoms[keep], tags[keep]
        miss = state.cum_miss(tau)[atoms]
        pts = state.points[atoms]
        order = np.lexsort((-tags, -pts, -miss))
        pick = order[_quantile_rank(eps_t, len(atoms)) - 1]
        thresholds.append(
            Threshold(
                miss=int(miss[pick]),
                point=int(pts[pick]),
                tag=float(tags[pick]),
                log_weight=params.eta * int(miss[pick]),
            )
        )
    return thresholds


def truncation_pieces(state, t, params, thresholds):
    """Per-atom filter fraction, capped weight, and cap for pass t.

    The filter applies levels 1 .. t-2; the level t-1 threshold only caps the
    weight, min(exp(eta * miss), cap).
    """
    frac = keep_fraction(state, thresholds[: t - 2] if t >= 2 else [])
    miss = state.cum_miss(t - 1)
    weights = np.exp(params.eta * miss)
    if t >= 2:
        cap_weight = thresholds[t - 2].weight
        weights = np.minimum(weights, cap_weight)
    else:
        cap_weight = 1.0
    return frac, weights, cap_weight


def estimate_weight(state, t, params, thresholds, rng, ledger=None):
    """Estimate the surviving (truncated, capped) weight of the task.

    Mean over m2 fresh draws of 1[survives filter] * min(exp(eta*miss), cap),
    normalized by m2 (not by the surviving count).  Pass 1 has no history and
    returns exactly 1.
    """
    if ledger is not None:
        ledger.count_draws(state.task.task_id, params.m2)
    if t == 1:
        return 1.0
    counts = rng.multinomial(params.m2, state.pmf)
    frac, weights, _ = truncation_pieces(state, t, params, thresholds)
    kept = rng.binomial(counts, frac)
    return float(np.dot(kept, weights) / params.m2)


def estimate_weight_literal(state, t, params, thresholds, rng):
    """Reference per-sample implementation of `estimate_weight`."""
    if t == 1:
        return 1.0
    atoms = rng.choice(len(state.points), size=params.m2, p=state.pmf)
    tags = rng.integers(0, 2**64, size=params.m2, dtype=np.uint64) * TAG_SCALE
    frac, weights, _ = truncation_pieces(state, t, params, thresholds)
    kept = tags < frac[atoms]
    return float(weights[atoms][kept].sum() / params.m2)


def sample_truncated(state, t, params, thresholds, n, rng, ledger=None):
    """Draw n points from the truncated reweighted task by rejection.

    Attempts draw (atom, tag) from the raw task, reject unless the key
    strictly precedes every level <= t-2 threshold, then accept with
    probability min(exp(eta*miss), cap) / cap.  Returns (points, labels,
    tags) and counts every attempt against the ledger and budget.
    """
    frac, weights, cap_weight = truncation_pieces(state, t, params, thresholds)
    p_accept = weights / cap_weight
    out_atoms = np.empty(n, dtype=np.int64)
    out_tags = np.empty(n, dtype=np.float64)
    got = 0
    attempts = 0
    budget = n * params.attempt_budget
    batch = max(256, min(1 << 16, 4 * n))
    while got < n:
        if attempts >= budget:
            raise RejectionBudgetExceeded(
                f"task {state.task.task_id} pass {t}: {attempts} attempts for {got}/{n}"
            )
        atoms = rng.choice(len(state.points), size=batch, p=state.pmf)
        tags = rng.integers(0, 2**64, size=batch, dtype=np.uint64) * TAG_SCALE
        ok = (tags < frac[atoms]) & (rng.random(batch) < p_accept[atoms])
        idx = np.nonzero(ok)[0]
        take = min(len(idx), n - got)
        if take:
            out_atoms[got : got + take] = atoms[idx[:take]]
            out_tags[got : got + take] = tags[idx[:take]]
        if take == n - got and take < len(idx):
            used = int(idx[take - 1]) + 1  # attempts through the accepting draw
        else:
            used = batch
        if ledger is not None:
            ledger.count_draws(state.task.task_id, used, rejected=used - take)
        attempts += used
        got += take
    return state.points[out_atoms], state.labels[out_atoms], out_tags


@dataclass
class StageRecord:
    """What the observer sees after each (pass, stage)."""

    t: int
    i: int
    thresholds: list
    weight_estimate: float
    weight_total: float
    replaced: int


@dataclass
class RunResult:
    hypothesis: MajorityVote
    per_pass: list
    threshold_table: ThresholdTable
    weight_estimates: dict  # (i, t) -> w_hat
    ledger: Ledger


class _StageGuard:
    """Enforces one sequential sweep over tasks per pass."""

    def __init__(self, k):
        self.k = k
        self.stage = 0

    def begin_pass(self):
        self.stage = 1

    def advance(self, i):
        if i != self.stage:
            raise AccessViolation(f"task {i} touched during stage {self.stage}")

    def leave(self):
        self.stage += 1


def run_learner(
    tasks,
    hypothesis_class,
    params,
    rng,
    ledger=None,
    observer=None,
    audit_pass=False,
):
    """Run the full c-pass learner and return the majority-vote hypothesis.

    `audit_pass=True` appends one extra quantile-estimation sweep (pass c+1)
    whose thresholds are recorded for the oracle but never used for training.
    """
    if len(tasks) != params.k:
        raise ParamError(f"params expect k={params.k} tasks, got {len(tasks)}")
    ledger = ledger if ledger is not None else Ledger()
    states = [TaskState(task) for task in tasks]
    guard = _StageGuard(params.k)
    table = ThresholdTable()
    weight_estimates = {}
    hypotheses = []
    bits_per_slot = params.b + 1 + 64
    threshold_bits = params.b + 64 + max(1, math.ceil(math.log2(params.c + 1)))
    per_pass = []

    for t in range(1, params.c + 1):
        guard.begin_pass()
        guard.advance(1)
        slot_pts = np.empty(params.n_slots, dtype=np.int64)
        slot_labels = np.empty(params.n_slots, dtype=np.uint8)
        slot_tags = np.empty(params.n_slots, dtype=np.float64)
        init = states[0].task.sample(rng, params.n_slots)
        slot_pts[:] = states[0].points[init]
        slot_labels[:] = states[0].labels[init]
        slot_tags[:] = rng.integers(0, 2**64, size=params.n_slots, dtype=np.uint64) * TAG_SCALE
        ledger.count_draws(tasks[0].task_id, params.n_slots)
        ledger.charge("slots", params.n_slots * bits_per_slot)

        w_total = 0.0
        for i in range(1, params.k + 1):
            guard.advance(i)
            state = states[i - 1]
            thresholds = estimate_quantile(state, t, params, rng, ledger)
            table.set(i, t, thresholds)
            ledger.charge("thresholds", params.k * (t - 1) * threshold_bits)
            w_i = estimate_weight(state, t, params, thresholds, rng, ledger)
            weight_estimates[(i, t)] = w_i
            w_total += w_i
            ledger.charge("weights", params.k * 64)
            replace = np.nonzero(rng.random(params.n_slots) < w_i / w_total)[0]
            if len(replace):
                pts, labels, tags = sample_truncated(
                    state, t, params, thresholds, len(replace), rng, ledger
                )
                slot_pts[replace] = pts
                slot_labels[replace] = labels
                slot_tags[replace] = tags
            if observer is not None:
                observer(
                    StageRecord(t, i, thresholds, w_i, w_total, len(replace)),
                    (slot_pts, slot_labels, slot_tags),
                )
            guard.leave()

        h_t = hypothesis_class.erm(slot_pts, slot_labels)
        hypotheses.append(h_t)
        for state in states:
            state.note_hypothesis(h_t)
        ledger.charge("hypotheses", sum(h.repr_bits for h in hypotheses))
        per_pass.append(h_t)

    if audit_pass:
        t = params.c + 1
        guard.begin_pass()
        for i in range(1, params.k + 1):
            guard.advance(i)
            thresholds = estimate_quantile(states[i - 1], t, params, rng, ledger)
            table.set(i, t, thresholds)
            guard.leave()
        ledger.charge("thresholds", params.k * (t - 1) * threshold_bits)

    return RunResult(MajorityVote(hypotheses), per_pass, table, weight_estimates, ledger)
