"""Command-line harness: generate instances, run learners, audit captures, bench.

Subcommands:
  gen     write an instance file from a preset or explicit parameters
  run     run the multi-pass learner over trials, emit a per-trial CSV
  verify  replay a capture through the exact oracle, emit a per-claim CSV
  bench   sweep pass budgets (and baseline task counts), emit a CSV

Options may come from a JSON config file (--config); explicit flags win.
Failures print one `ERR <code>: message` line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import iofmt, lines, rspc
from .learner import Constants, Ledger, LearnerParams, run_learner, sample_truncated
from .learner import TaskState
from .oracle import Oracle
from .universe import distribution_loss

PRESETS = {
    "line": {"family": "line", "k": 6, "d": 2, "n": 12, "p": 101, "eps": 0.1,
             "delta": 0.01, "c": 4},
    "line-tiny": {"family": "line", "k": 2, "d": 1, "n": 2, "p": 5, "eps": 0.1,
                  "delta": 0.01, "c": 3},
    "pc-tiny": {"family": "pointer", "c": 1, "k": 2, "d": 2, "b": 2, "alpha": 1,
                "eps": 0.1, "delta": 0.01},
}


def make_instance(spec, seed):
    """Build an instance from a preset-style spec dict."""
    if spec["family"] == "line":
        return lines.generate_line_instance(
            spec["k"], spec["d"], spec["eps"], seed,
            b=spec.get("b"), n=spec.get("n"), p=spec.get("p"),
        )
    if spec["family"] == "pointer":
        rng = np.random.default_rng(seed)
        n_ptr = spec["k"] * spec["d"] * spec["b"]
        f_a = rng.integers(1, n_ptr + 1, size=n_ptr)
        f_b = rng.integers(1, n_ptr + 1, size=n_ptr)
        return rspc.generate_pointer_instance(
            spec["c"], spec["k"], spec["d"], spec["b"], spec["eps"],
            f_a, f_b, alpha=spec.get("alpha"),
        )
    raise ValueError(f"unknown family {spec['family']!r}")


def learner_params_for(instance, c, eps, delta, constants=None, n_slots=None):
    cls = instance.hypothesis_class
    return LearnerParams(
        k=len(instance.tasks),
        d=cls.vc_upper_hint,
        b=instance.universe.bits_per_point,
        c=c,
        eps=eps,
        delta=delta,
        constants=constants,
        n_slots=n_slots,
    )


def baseline_store_everything(tasks, cls, eps, delta, rng, ledger=None, constants=None):
    """Store-everything reference learner: draw per-task batches, one joint ERM.

    Keeps every stored sample in memory at once; the ledger charge is what
    the multi-pass learner's reservoir is measured against.
    """
    constants = constants or Constants()
    ledger = ledger if ledger is not None else Ledger()
    k = len(tasks)
    n_per = math.ceil(constants.c_n * (cls.vc_upper_hint + math.log(k / delta)) / eps)
    pts, labels = [], []
    for task in tasks:
        idx = task.sample(rng, n_per)
        pts.append(task.points[idx])
        labels.append(task.labels[idx])
        ledger.count_draws(task.task_id, n_per)
    pts = np.concatenate(pts)
    labels = np.concatenate(labels)
    bits_per_slot = tasks[0].universe.bits_per_point + 1 + 64
    ledger.charge("baseline_samples", len(pts) * bits_per_slot)
    h = cls.erm(pts, labels)
    ledger.charge("hypotheses", h.repr_bits)
    return h, ledger


def run_trials(instance, params, trials, seed, capture_path=None):
    """Run the learner `trials` times; returns per-trial report rows."""
    rows = []
    for trial in range(trials):
        trial_seed = seed + trial
        rng = np.random.default_rng(trial_seed)
        ledger = Ledger()
        want_capture = capture_path is not None and trial == 0
        result = run_learner(
            instance.tasks, instance.hypothesis_class, params, rng,
            ledger=ledger, audit_pass=want_capture,
        )
        losses = [distribution_loss(result.hypothesis, task) for task in instance.tasks]
        if want_capture:
            iofmt.write_capture(capture_path, instance, params, trial_seed, result)
        rows.append(
            {
                "trial": trial,
                "seed": trial_seed,
                "max_loss": max(losses),
                "success": int(max(losses) <= params.eps),
                "peak_bits": ledger.peak_bits,
                "samples_drawn": sum(ledger.samples_drawn.values()),
                "rejections": sum(ledger.rejections.values()),
            }
        )
    return rows


def sampler_tv_rows(capture, draws, rng, tol=0.02):
    """Empirical-vs-exact total variation of the truncated sampler per (i, t)."""
    instance, params = capture["instance"], capture["params"]
    table = capture["table"]
    oracle = Oracle(instance.tasks, params, table, capture["hypotheses"])
    rows = []
    for (i, t), _ in sorted(table.items()):
        if t > params.c:
            continue  # audit-pass thresholds don't feed the sampler
        state = TaskState(instance.tasks[i - 1])
        for h in capture["hypotheses"][: t - 1]:
            state.note_hypothesis(h)
        pts, _, _ = sample_truncated(state, t, params, table.get(i, t), draws, rng)
        _, pmf = oracle.truncated_weight_and_pmf(i, t)
        order = np.argsort(state.points)
        atom_idx = order[np.searchsorted(state.points[order], pts)]
        counts = np.bincount(atom_idx, minlength=state.task.support_size)
        tv = 0.5 * float(np.abs(counts / draws - pmf).sum())
        rows.append({"claim": "sampler_tv", "task": i, "t": t, "tau": 0,
                     "value": tv, "low": 0.0, "high": tol, "ok": int(tv <= tol),
                     "margin": tol - tv})
    return rows


def verify_capture(capture, draws=100_000, seed=0, tv_tol=0.02):
    """All oracle audits plus the sampler TV check, as report rows."""
    instance, params = capture["instance"], capture["params"]
    oracle = Oracle(instance.tasks, params, capture["table"], capture["hypotheses"])
    rows = []
    for audit in (
        oracle.audit_quantiles(),
        oracle.audit_weights(capture["weights"]),
        oracle.audit_hierarchy(),
        oracle.audit_potential(),
    ):
        for r in audit:
            rows.append({"claim": r.claim, "task": r.task, "t": r.t, "tau": r.tau,
                         "value": r.value, "low": r.low, "high": r.high,
                         "ok": int(r.ok), "margin": r.margin})
    rows.extend(sampler_tv_rows(capture, draws, np.random.default_rng(seed), tv_tol))
    return rows


def bench_memory_vs_passes(spec, c_list, trials, seed, k_list=()):
    """Learner peak memory across pass budgets, plus baseline scaling in k."""
    rows = []
    for c in c_list:
        instance = make_instance(spec, seed)
        params = learner_params_for(instance, c, spec["eps"], spec["delta"])
        trial_rows = run_trials(instance, params, trials, seed + 1)
        rows.append(
            {
                "mode": "learner",
                "param": c,
                "success_rate": sum(r["success"] for r in trial_rows) / len(trial_rows),
                "peak_bits": max(r["peak_bits"] for r in trial_rows),
                "samples_drawn": max(r["samples_drawn"] for r in trial_rows),
            }
        )
    for k in k_list:
        kspec = dict(spec)
        kspec["k"] = k
        if "n" in kspec and kspec.get("n") is not None:
            kspec["n"] = k * (spec["n"] // spec["k"])
        instance = make_instance(kspec, seed)
        _, ledger = baseline_store_everything(
            instance.tasks, instance.hypothesis_class, kspec["eps"], kspec["delta"],
            np.random.default_rng(seed + 1),
        )
        rows.append(
            {
                "mode": "baseline",
                "param": k,
                "success_rate": 1.0,
                "peak_bits": ledger.peak_bits,
                "samples_drawn": sum(ledger.samples_drawn.values()),
            }
        )
    return rows


def _write_csv(path, rows, fields):
    out = sys.stdout if path in (None, "-") else open(path, "w", newline="", encoding="utf-8")
    try:
        writer = csv.DictWriter(out, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()


def _load_config(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _spec_from(args, config):
    if args.preset:
        spec = dict(PRESETS[args.preset])
    elif "instance" in config:
        spec = dict(config["instance"])
    else:
        raise ValueError("need --preset or an 'instance' section in the config")
    for key in ("eps", "delta", "c"):
        if getattr(args, key, None) is not None:
            spec[key] = getattr(args, key)
    return spec


def build_parser():
    parser = argparse.ArgumentParser(prog="contpac")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output path ('-' for stdout)", default="-")

    g = sub.add_parser("gen", help="generate an instance file")
    common(g)
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--eps", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--c", type=int)

    r = sub.add_parser("run", help="run the multi-pass learner")
    common(r)
    r.add_argument("--preset", choices=sorted(PRESETS))
    r.add_argument("--instance", help="instance file to run on")
    r.add_argument("--trials", type=int, default=1)
    r.add_argument("--capture", help="write a capture of trial 0 here")
    r.add_argument("--eps", type=float)
    r.add_argument("--delta", type=float)
    r.add_argument("--c", type=int)

    v = sub.add_parser("verify", help="audit a capture with the exact oracle")
    common(v)
    v.add_argument("capture", help="capture file from `run --capture`")
    v.add_argument("--draws", type=int, default=100_000)

    b = sub.add_parser("bench", help="memory vs pass budget sweep")
    common(b)
    b.add_argument("--preset", choices=sorted(PRESETS), default="line")
    b.add_argument("--c-list", default="2,4,8")
    b.add_argument("--k-list", default="")
    b.add_argument("--trials", type=int, default=1)
    b.add_argument("--eps", type=float)
    b.add_argument("--delta", type=float)
    b.add_argument("--c", type=int)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        if args.command == "gen":
            spec = _spec_from(args, config)
            instance = make_instance(spec, args.seed)
            if args.out in (None, "-"):
                json.dump(iofmt.instance_to_dict(instance), sys.stdout)
                sys.stdout.write("\n")
            else:
                iofmt.write_instance(args.out, instance)
        elif args.command == "run":
            if args.instance:
                instance = iofmt.read_instance(args.instance)
                spec = dict(instance.meta)
            else:
                spec = _spec_from(args, config)
                instance = make_instance(spec, args.seed)
            lcfg = config.get("learner", {})
            constants = Constants(**lcfg.get("constants", {})) if lcfg.get("constants") else None
            params = learner_params_for(
                instance,
                args.c if args.c is not None else spec.get("c", lcfg.get("c", 2)),
                args.eps if args.eps is not None else spec.get("eps", 0.1),
                args.delta if args.delta is not None else spec.get("delta", 0.01),
                constants=constants,
                n_slots=lcfg.get("n_slots"),
            )
            rows = run_trials(instance, params, args.trials, args.seed + 1, args.capture)
            _write_csv(args.out, rows, ["trial", "seed", "max_loss", "success",
                                        "peak_bits", "samples_drawn", "rejections"])
        elif args.command == "verify":
            capture = iofmt.read_capture(args.capture)
            rows = verify_capture(capture, draws=args.draws, seed=args.seed)
            _write_csv(args.out, rows, ["claim", "task", "t", "tau", "value",
                                        "low", "high", "ok", "margin"])
        elif args.command == "bench":
            spec = _spec_from(args, config)
            c_list = [int(x) for x in args.c_list.split(",") if x]
            k_list = [int(x) for x in args.k_list.split(",") if x]
            rows = bench_memory_vs_passes(spec, c_list, args.trials, args.seed, k_list)
            _write_csv(args.out, rows, ["mode", "param", "success_rate",
                                        "peak_bits", "samples_drawn"])
        return 0
    except Exception as exc:  # noqa: BLE001 - single reporting point by design
        print(f"ERR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
