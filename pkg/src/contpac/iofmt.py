"""On-disk formats: instance files and run captures.

Both are UTF-8 JSON with a format tag.  An instance file has sections
`universe`, `meta`, `tasks`, and optionally `witness`; a capture embeds the
instance it was produced from plus everything the oracle needs to audit the
run (parameters, thresholds, weight estimates, hypotheses, ledger, seed).
"""

from __future__ import annotations

import json

import numpy as np

from . import lines, rspc
from .learner import Constants, LearnerParams, Threshold, ThresholdTable
from .universe import MajorityVote, TableHypothesis, TaskDistribution, Universe

INSTANCE_FORMAT = "contpac-instance-1"
CAPTURE_FORMAT = "contpac-capture-1"


class FormatError(Exception):
    pass


def universe_from_dict(spec):
    kind = spec.get("kind")
    if kind == "line":
        return lines.LineUniverse(spec["n"], spec["d"], spec["p"])
    if kind == "pointer":
        return rspc.PointerUniverse(spec["c"], spec["k"], spec["d"], spec["b"])
    if kind == "generic":
        return Universe(spec["size"])
    raise FormatError(f"unknown universe kind {kind!r}")


def class_for_universe(universe):
    if isinstance(universe, lines.LineUniverse):
        return lines.LineClass(universe)
    if isinstance(universe, rspc.PointerUniverse):
        return rspc.PointerClass(universe)
    return None


def hypothesis_from_dict(universe, spec):
    kind = spec.get("kind")
    if kind == "table":
        return TableHypothesis(universe, spec["table"])
    if kind == "line":
        return lines.LineHypothesis(universe, spec["block"], spec["lines"])
    if kind == "pointer":
        return rspc.PointerHypothesis(universe, spec["symbols"])
    if kind == "majority":
        return MajorityVote(
            [hypothesis_from_dict(universe, m) for m in spec["members"]]
        )
    raise FormatError(f"unknown hypothesis kind {kind!r}")


def instance_to_dict(instance):
    doc = {
        "format": INSTANCE_FORMAT,
        "universe": instance.universe.describe(),
        "meta": instance.meta,
        "tasks": [
            {
                "id": task.task_id,
                "points": task.points.tolist(),
                "labels": task.labels.tolist(),
                "masses": task.masses.tolist(),
            }
            for task in instance.tasks
        ],
    }
    if instance.witness is not None:
        doc["witness"] = instance.witness.describe()
    return doc


def instance_from_dict(doc):
    if doc.get("format") != INSTANCE_FORMAT:
        raise FormatError("not a contpac instance file")
    universe = universe_from_dict(doc["universe"])
    tasks = [
        TaskDistribution(
            universe, t["points"], t["labels"], t["masses"], task_id=t.get("id")
        )
        for t in doc["tasks"]
    ]
    witness = (
        hypothesis_from_dict(universe, doc["witness"]) if "witness" in doc else None
    )
    cls = class_for_universe(universe)
    meta = doc.get("meta", {})
    if meta.get("family") == "pointer":
        return rspc.PointerInstance(universe, cls, tasks, witness, meta)
    return lines.Instance(universe, cls, tasks, witness, meta)


def write_instance(path, instance):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh)
        fh.write("\n")


def read_instance(path):
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


def params_to_dict(params):
    doc = params.describe()
    doc["n_slots_override"] = params.n_slots
    return doc


def params_from_dict(doc):
    return LearnerParams(
        doc["k"],
        doc["d"],
        doc["b"],
        doc["c"],
        doc["eps"],
        doc["delta"],
        constants=Constants(**doc.get("constants", {})),
        n_slots=doc.get("n_slots_override"),
    )


def capture_to_dict(instance, params, seed, result):
    return {
        "format": CAPTURE_FORMAT,
        "instance": instance_to_dict(instance),
        "params": params_to_dict(params),
        "seed": seed,
        "thresholds": [
            {
                "task": i,
                "t": t,
                "levels": [
                    {
                        "miss": th.miss,
                        "point": th.point,
                        "tag": th.tag,
                        "log_weight": th.log_weight,
                    }
                    for th in levels
                ],
            }
            for (i, t), levels in sorted(result.threshold_table.items())
        ],
        "weight_estimates": [
            {"task": i, "t": t, "value": w}
            for (i, t), w in sorted(result.weight_estimates.items())
        ],
        "hypotheses": [h.describe() for h in result.per_pass],
        "ledger": result.ledger.snapshot(),
    }


def capture_from_dict(doc):
    if doc.get("format") != CAPTURE_FORMAT:
        raise FormatError("not a contpac capture file")
    instance = instance_from_dict(doc["instance"])
    params = params_from_dict(doc["params"])
    table = ThresholdTable()
    for entry in doc["thresholds"]:
        table.set(
            entry["task"],
            entry["t"],
            [
                Threshold(lv["miss"], lv["point"], lv["tag"], lv["log_weight"])
                for lv in entry["levels"]
            ],
        )
    weights = {
        (entry["task"], entry["t"]): entry["value"]
        for entry in doc["weight_estimates"]
    }
    hypotheses = [
        hypothesis_from_dict(instance.universe, spec) for spec in doc["hypotheses"]
    ]
    return {
        "instance": instance,
        "params": params,
        "table": table,
        "weights": weights,
        "hypotheses": hypotheses,
        "seed": doc.get("seed"),
        "ledger": doc.get("ledger", {}),
    }


def write_capture(path, instance, params, seed, result):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(capture_to_dict(instance, params, seed, result), fh)
        fh.write("\n")


def read_capture(path):
    with open(path, encoding="utf-8") as fh:
        return capture_from_dict(json.load(fh))
