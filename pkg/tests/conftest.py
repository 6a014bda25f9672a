"""Shared fixtures: a batch of fully captured small-instance learner runs.

The capture batch is expensive enough to build once per session.  Each entry
carries the instance, the learner parameters, and the captured run (threshold
table, per-pass hypotheses, weight estimates, ledger), which is everything the
exact audits need.
"""

import numpy as np
import pytest

from contpac import cli
from contpac.learner import Constants, Ledger, run_learner

CAPTURE_SEEDS = [1000 + i for i in range(20)]

# The default sampling constants keep the small demo fast, but at this desk
# scale their sampling noise is wider than the audit bands, so the captured
# runs used for band checks draw more per estimate.
AUDIT_CONSTANTS = Constants(c_m1=96, c_m2=96)


@pytest.fixture(scope="session")
def capture_batch():
    instance = cli.make_instance(cli.PRESETS["line-tiny"], 42)
    params = cli.learner_params_for(
        instance, c=3, eps=0.1, delta=0.01, constants=AUDIT_CONSTANTS
    )
    batch = []
    for seed in CAPTURE_SEEDS:
        ledger = Ledger()
        result = run_learner(
            instance.tasks,
            instance.hypothesis_class,
            params,
            np.random.default_rng(seed),
            ledger=ledger,
            audit_pass=True,
        )
        batch.append(
            {
                "seed": seed,
                "instance": instance,
                "params": params,
                "table": result.threshold_table,
                "hypotheses": result.per_pass,
                "weights": result.weight_estimates,
                "result": result,
                "ledger": ledger,
            }
        )
    return batch
