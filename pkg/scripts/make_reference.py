"""Regenerate the packaged sample trajectory and the pinned `fit` reference."""
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from circwalk.cli import main
from circwalk.io import export_trajectory
from circwalk.model import ModelSpec
from circwalk.simulate import ScenarioConfig, simulate_trajectory

DATA = Path(__file__).resolve().parents[1] / "src" / "circwalk" / "data"
SAMPLE_SEED = 2024
FIT_SEED = 7


def reference_from_report(report: dict) -> dict:
    params = report["inference"]["parameters"]
    return {
        "command": f"circwalk fit --data scenario1_sample.csv --seed {FIT_SEED}",
        "loglik": report["inference"]["loglik"],
        "params": report["params"],
        "estimates": {p["name"]: p["estimate"] for p in params},
        "se": {p["name"]: p["se"] for p in params},
    }


if __name__ == "__main__":
    sim = simulate_trajectory(ScenarioConfig(), ModelSpec(K=2, p=1), np.random.default_rng(SAMPLE_SEED))
    sample = DATA / "scenario1_sample.csv"
    export_trajectory(sample, sim.trajectory, sim.states, sim.positions[:-1])
    with tempfile.TemporaryDirectory() as out:
        main(["fit", "--data", str(sample), "--seed", str(FIT_SEED), "--out", out])
        with open(os.path.join(out, "fit_report.json")) as fh:
            ref = reference_from_report(json.load(fh))
    with open(DATA / "scenario1_reference.json", "w") as fh:
        json.dump(ref, fh, indent=2)
        fh.write("\n")
