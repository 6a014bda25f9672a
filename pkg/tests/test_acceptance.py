"""End-to-end acceptance gate.

Each test pins one externally checkable claim about the package: the learner
learns, the truncated sampler is exact, the captured quantile/weight/nesting/
potential audits land inside their bands, the degenerate first pass behaves,
the hard-instance constructions have the promised combinatorial structure,
and the memory ledger shows the multi-pass advantage.  Tolerances are fixed
here and nowhere else.
"""

import itertools

import numpy as np

from contpac import cli
from contpac.learner import LearnerParams, run_learner
from contpac.lines import LineClass, LineUniverse
from contpac.oracle import Oracle
from contpac.rspc import (
    PointerClass,
    PointerUniverse,
    chase_pointers,
    decode_pointer_parity,
    generate_pointer_instance,
    rs_encode,
)
from contpac.universe import (
    ExplicitClass,
    TableHypothesis,
    TaskDistribution,
    Universe,
    distribution_loss,
    vc_dimension_bruteforce,
)

from conftest import AUDIT_CONSTANTS


def _all_params_under_test():
    """Every learner parameterization the criteria above construct."""
    preset = cli.make_instance(cli.PRESETS["line"], 1)
    tiny = cli.make_instance(cli.PRESETS["line-tiny"], 42)
    out = [
        cli.learner_params_for(preset, c, 0.1, 0.01) for c in (2, 4, 8)
    ]
    out.append(cli.learner_params_for(tiny, 3, 0.1, 0.01,
                                      constants=AUDIT_CONSTANTS))
    out.append(LearnerParams(2, 1, 5, 1, 0.1, 0.01, n_slots=100_000))
    return out


def _oracle(capture):
    return Oracle(
        capture["instance"].tasks,
        capture["params"],
        capture["table"],
        capture["hypotheses"],
    )


def test_01_end_to_end_learning_on_pinned_preset():
    instance = cli.make_instance(cli.PRESETS["line"], 1)
    params = cli.learner_params_for(instance, c=4, eps=0.1, delta=0.01)
    rows = cli.run_trials(instance, params, trials=20, seed=1)
    assert sum(r["success"] for r in rows) >= 18


def test_02_truncated_sampler_total_variation(capture_batch):
    capture = capture_batch[0]
    assert capture["instance"].universe.size <= 64
    rows = cli.sampler_tv_rows(
        capture, draws=100_000, rng=np.random.default_rng(2), tol=0.02
    )
    assert rows, "no sampler stages to check"
    assert all(r["ok"] for r in rows), [r for r in rows if not r["ok"]]


def test_03_quantile_tail_mass_bands(capture_batch):
    rows = [r for cap in capture_batch for r in _oracle(cap).audit_quantiles()]
    assert rows
    ok = sum(r.ok for r in rows)
    assert ok / len(rows) >= 0.95, f"{ok}/{len(rows)} quantile rows in band"


def test_04_weight_estimates_within_alpha_over_eight(capture_batch):
    rows = [
        r
        for cap in capture_batch
        for r in _oracle(cap).audit_weights(cap["weights"])
    ]
    assert rows
    ok = sum(r.ok for r in rows)
    assert ok / len(rows) >= 0.95, f"{ok}/{len(rows)} weight rows in band"


def test_05_hierarchy_nesting(capture_batch):
    clean = sum(
        all(r.ok for r in _oracle(cap).audit_hierarchy()) for cap in capture_batch
    )
    assert clean >= 19, f"only {clean}/20 runs free of nesting violations"


def test_06_potential_decrease(capture_batch):
    clean = 0
    for cap in capture_batch:
        rows = _oracle(cap).audit_potential()
        start = [r for r in rows if r.claim == "potential_start"]
        assert len(start) == 1 and start[0].value == 1.0
        clean += all(r.ok for r in rows if r.claim == "potential_step")
    assert clean >= 18, f"only {clean}/20 runs satisfy the per-pass drop bound"


def test_07_first_pass_degeneracy(capture_batch):
    for cap in capture_batch:
        for i in range(1, cap["params"].k + 1):
            assert cap["weights"][(i, 1)] == 1.0

    # A one-pass run with independent slots is 10^5 independent single-slot
    # runs; the final slot marginal must match the uniform task mixture.
    u = Universe(20)
    rng0 = np.random.default_rng(70)
    m1 = rng0.dirichlet(np.ones(10))
    m2 = rng0.dirichlet(np.ones(10))
    labels = rng0.integers(0, 2, size=20)
    tasks = [
        TaskDistribution(u, np.arange(10), labels[:10], m1, task_id=1),
        TaskDistribution(u, np.arange(10, 20), labels[10:], m2, task_id=2),
    ]
    cls = ExplicitClass(u, [TableHypothesis(u, labels)])
    params = LearnerParams(2, 1, u.bits_per_point, 1, 0.1, 0.01, n_slots=100_000)
    final_slots = {}

    def observer(record, slots):
        final_slots["pts"] = slots[0].copy()

    run_learner(tasks, cls, params, np.random.default_rng(71), observer=observer)
    counts = np.bincount(final_slots["pts"], minlength=20)
    mixture = np.concatenate([m1, m2]) / 2
    tv = 0.5 * np.abs(counts / params.n_slots - mixture).sum()
    assert tv <= 0.02, f"slot-marginal TV {tv}"


def test_08_vc_dimensions_by_exact_search():
    line = vc_dimension_bruteforce(LineClass(LineUniverse(2, 2, 3)))
    assert line.exact and line.dimension <= 2 * 2

    pc_cls = PointerClass(PointerUniverse(1, 1, 2, 1))
    bound = pc_cls.vc_upper_hint
    assert bound == 4 * 1 * 2 + 2 * 1 + 2 * 2 + 1
    pc = vc_dimension_bruteforce(pc_cls)
    assert pc.exact and pc.dimension <= bound


def test_09_reed_solomon_distance_exhaustive():
    p, n, m = 5, 2, 4
    words = [rs_encode(msg, m, p) for msg in itertools.product(range(p), repeat=n)]
    for a, b in itertools.combinations(words, 2):
        differ = sum(x != y for x, y in zip(a, b))
        assert differ >= (1 - n / m) * m


def test_10_pointer_chasing_round_trip():
    c, k, d, b = 1, 2, 2, 2
    n_ptr = k * d * b
    for seed in range(20):
        rng = np.random.default_rng(300 + seed)
        f_a = rng.integers(1, n_ptr + 1, size=n_ptr)
        f_b = rng.integers(1, n_ptr + 1, size=n_ptr)
        inst = generate_pointer_instance(c, k, d, b, 0.1, f_a, f_b, alpha=1)
        for task in inst.tasks:
            assert distribution_loss(inst.witness, task) == 0.0
        parity = chase_pointers(list(f_a), list(f_b), c)[-1] % 2
        assert decode_pointer_parity(inst.witness) == parity
        assert inst.meta["parity"] == parity

        h, _ = cli.baseline_store_everything(
            inst.tasks, inst.hypothesis_class, 0.1, 0.01,
            np.random.default_rng(600 + seed),
        )
        assert decode_pointer_parity(h) == parity


def test_11_memory_trend_and_baseline_scaling():
    spec = cli.PRESETS["line"]
    rows = cli.bench_memory_vs_passes(spec, [2, 4, 8], trials=1, seed=0,
                                      k_list=[2, 4, 8])
    learner = [r for r in rows if r["mode"] == "learner"]
    baseline = [r for r in rows if r["mode"] == "baseline"]
    peaks = [r["peak_bits"] for r in learner]
    assert peaks == sorted(peaks, reverse=True)

    # store-everything reference on the same k=6 instance
    instance = cli.make_instance(spec, 0)
    _, ledger = cli.baseline_store_everything(
        instance.tasks, instance.hypothesis_class, spec["eps"], spec["delta"],
        np.random.default_rng(1),
    )
    assert peaks[-1] <= 0.25 * ledger.peak_bits

    ks = np.array([r["param"] for r in baseline], dtype=float)
    bits = np.array([r["peak_bits"] for r in baseline], dtype=float)
    slope, intercept = np.polyfit(ks, bits, 1)
    fit = slope * ks + intercept
    ss_res = float(((bits - fit) ** 2).sum())
    ss_tot = float(((bits - bits.mean()) ** 2).sum())
    assert slope > 0
    assert 1 - ss_res / ss_tot >= 0.95


def test_12_schedule_inequality_for_all_params():
    for p in _all_params_under_test():
        for t in range(p.c):
            lo = (1 - p.gamma) * p.eps_schedule[t + 1]
            hi = (1 + p.gamma) * p.eps_schedule[t]
            growth = (
                (1 - (1 - p.gamma) * p.eps_schedule[t])
                / (1 - (1 + p.gamma) * p.eps_schedule[t + 1])
            ) ** p.c
            assert lo / hi >= growth, f"schedule fails at t={t} (c={p.c})"
        assert p.eps_schedule[p.c] <= p.eps / 10 + 1e-15
