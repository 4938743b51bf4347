#!/usr/bin/env python3
"""Write the example CLI configs under scripts/configs/."""

import json
import os

from weakdep import flip_chain, make_coboundary
from weakdep.processes import process_to_config

HERE = os.path.join(os.path.dirname(__file__), "configs")

FLIP = {"type": "finite_chain", "states": ["+", "-"],
        "transition": [[0.75, 0.25], [0.25, 0.75]],
        "observable": [1.0, -1.0], "step": 1.0}

CONFIGS = {
    "coeffs_flip.json": {"process": FLIP},
    "bound_flip.json": {"process": FLIP, "grid_n": [256, 512, 1024],
                        "points_per_n": 4, "replicates": 20000, "seed": 20260810,
                        "theta_horizon": 16},
    "couple_flip.json": {"process": FLIP, "n": 4096, "seed": 20260810,
                         "p": 4.0, "variant": "balanced"},
    "rates_flip.json": {"process": FLIP, "n_list": [2 ** k for k in range(10, 18)],
                        "replicates": 64, "seed": 20260810, "p": 4.0,
                        "tolerance": 0.08},
    "wasserstein_flip.json": {"process": FLIP,
                              "n_list": [2 ** k for k in range(10, 17)],
                              "replicates": 64, "seed": 20260814, "p": 4.0,
                              "tolerance": 0.10},
    "degenerate_flip.json": {
        "process": process_to_config(make_coboundary(flip_chain(0.25), [1.0, -1.0])),
        "n_list": [100, 1000, 10000], "replicates": 3000, "seed": 20260815,
        "alpha": 0.5, "series_epsilon": 1.0, "moment_q": 2.0},
    # center from lsv_reference_mean(0.375, 1e7 iterations, seed 0)
    "rates_lsv.json": {
        "process": {"type": "lsv", "gamma": 0.375, "burn_in": 10000,
                    "observable": {"kind": "identity", "center": 0.42823}},
        "surrogate": FLIP, "n_list": [2 ** k for k in range(11, 18)],
        "replicates": 32, "seed": 20260817, "tolerance": 0.1},
}


def main():
    os.makedirs(HERE, exist_ok=True)
    for name, doc in CONFIGS.items():
        with open(os.path.join(HERE, name), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print("wrote", os.path.join(HERE, name))


if __name__ == "__main__":
    main()
