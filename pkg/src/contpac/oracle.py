"""Exact audits of a captured learner run.

Everything here is computed in closed form over the task supports (extended
precision, no sampling): survival fractions under threshold chains, truncated
task weights and pmfs, the set-nesting structure across passes, and the
exponential-weight potential.  The auditors return per-claim rows with signed
margins so callers can apply their own tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .universe import BudgetExceeded


@dataclass
class AuditRow:
    claim: str
    task: int
    t: int
    tau: int
    value: float
    low: float
    high: float

    @property
    def ok(self):
        return self.low <= self.value <= self.high

    @property
    def margin(self):
        """Signed distance to the nearer band edge; negative means violated."""
        return min(self.value - self.low, self.high - self.value)


class Oracle:
    """Closed-form evaluator for one captured run.

    Needs the tasks, the learner parameters, the full threshold table
    (levels for passes 1..c, plus the audit pass c+1 if taken), and the
    per-pass hypotheses.
    """

    SUPPORT_CAP = 256

    def __init__(self, tasks, params, threshold_table, hypotheses, support_cap=None):
        cap = support_cap or self.SUPPORT_CAP
        if sum(task.support_size for task in tasks) > cap:
            raise BudgetExceeded(f"oracle support cap {cap} exceeded")
        self.tasks = tasks
        self.params = params
        self.table = threshold_table
        self.hypotheses = hypotheses
        self._miss = []  # per task: (passes, support) 0/1 rows
        for task in tasks:
            rows = [
                (h.evaluate(task.points) != task.labels).astype(np.int64)
                for h in hypotheses
            ]
            self._miss.append(
                np.asarray(rows, dtype=np.int64).reshape(len(rows), task.support_size)
            )

    def _cum_miss(self, i, level):
        task = self.tasks[i - 1]
        if level == 0:
            return np.zeros(task.support_size, dtype=np.int64)
        return self._miss[i - 1][:level].sum(axis=0)

    def fraction(self, i, t, tau):
        """Per-atom surviving tag fraction of the tau-th kept set of pass t."""
        task = self.tasks[i - 1]
        thresholds = self.table.get(i, t)
        if len(thresholds) < tau - 1:
            raise ValueError(f"no thresholds recorded for task {i} pass {t} level {tau - 1}")
        frac = np.ones(task.support_size, dtype=np.longdouble)
        for level, th in enumerate(thresholds[: tau - 1], start=1):
            miss = self._cum_miss(i, level)
            below = (miss < th.miss) | ((miss == th.miss) & (task.points < th.point))
            at = (miss == th.miss) & (task.points == th.point)
            frac = np.minimum(
                frac, np.where(below, 1.0, np.where(at, np.longdouble(th.tag), 0.0))
            )
        return frac

    def kept_mass(self, i, t, tau):
        task = self.tasks[i - 1]
        return float(
            np.dot(task.masses.astype(np.longdouble), self.fraction(i, t, tau))
        )

    def tail_mass(self, i, t, tau):
        """Conditional mass cut off by the tau-th threshold inside its kept set."""
        p_tau = self.kept_mass(i, t, tau)
        p_next = self.kept_mass(i, t, tau + 1)
        return (p_tau - p_next) / p_tau

    def truncated_weight_and_pmf(self, i, t):
        """Exact surviving weight and the truncated sampling pmf over atoms."""
        task = self.tasks[i - 1]
        frac = self.fraction(i, t, t - 1) if t >= 2 else self.fraction(i, t, 1)
        miss = self._cum_miss(i, t - 1)
        weights = np.exp(np.longdouble(self.params.eta) * miss)
        thresholds = self.table.get(i, t)
        if t >= 2:
            weights = np.minimum(weights, np.longdouble(thresholds[t - 2].weight))
        raw = task.masses.astype(np.longdouble) * frac * weights
        total = raw.sum()
        return float(total), (raw / total).astype(np.float64)

    def potential(self, t):
        """(1/k) sum_i of surviving exponential weight, uncapped."""
        acc = np.longdouble(0)
        for i in range(1, self.params.k + 1):
            task = self.tasks[i - 1]
            frac = self.fraction(i, t, t - 1) if t >= 2 else np.ones(
                task.support_size, dtype=np.longdouble
            )
            miss = self._cum_miss(i, t - 1)
            weights = np.exp(np.longdouble(self.params.eta) * miss)
            acc += np.dot(task.masses.astype(np.longdouble), frac * weights)
        return float(acc / self.params.k)

    # ---- audits -----------------------------------------------------------

    def audit_quantiles(self):
        """Tail mass of every recorded threshold against the (1 +- gamma) band."""
        rows = []
        gamma = self.params.gamma
        for (i, t), thresholds in sorted(self.table.items()):
            eps_t = self.params.eps_schedule[t]
            for tau in range(1, len(thresholds) + 1):
                rows.append(
                    AuditRow(
                        "quantile_tail",
                        i,
                        t,
                        tau,
                        self.tail_mass(i, t, tau),
                        (1 - gamma) * eps_t,
                        (1 + gamma) * eps_t,
                    )
                )
        return rows

    def audit_weights(self, weight_estimates):
        """Captured weight estimates against the true weights, within alpha/8."""
        rows = []
        tol = self.params.alpha / 8
        for (i, t), w_hat in sorted(weight_estimates.items()):
            w_true, _ = self.truncated_weight_and_pmf(i, t)
            rows.append(
                AuditRow("weight_estimate", i, t, 0, w_hat, w_true * (1 - tol), w_true * (1 + tol))
            )
        return rows

    def audit_hierarchy(self, tol=1e-15):
        """Cross-pass nesting: the tau-th kept set shrinks as t grows."""
        rows = []
        t_max = max(t for (_, t) in dict(self.table.items()))
        for i in range(1, self.params.k + 1):
            for tau in range(1, t_max + 1):
                worst = 0.0
                for t in range(tau, t_max):
                    gap = self.fraction(i, t + 1, tau) - self.fraction(i, t, tau)
                    worst = max(worst, float(gap.max()) if len(gap) else 0.0)
                rows.append(AuditRow("hierarchy", i, 0, tau, worst, -np.inf, tol))
        return rows

    def audit_potential(self):
        """Phi_1 == 1 and per-pass log drop at most log(2(1 - alpha))."""
        rows = []
        c = self.params.c
        bound = float(np.log(2 * (1 - self.params.alpha)))
        values = {t: self.potential(t) for t in range(1, c + 2)}
        rows.append(AuditRow("potential_start", 0, 1, 0, values[1], 1.0, 1.0))
        for t in range(1, c + 1):
            drop = float(np.log(values[t + 1]) - np.log(values[t]))
            rows.append(AuditRow("potential_step", 0, t, 0, drop, -np.inf, bound))
        return rows
