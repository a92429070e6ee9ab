"""How often the stochastic envelopes leave [alpha, beta], as a function of dt.

For each problem and dt in {theta/64 .. theta/1024} (all driven by one
Brownian sample, coarsened), prints the share of entries breaking
alpha <= a~ <= b~ <= beta, split into its three parts. A dt-independent
share means the violation is not a discretisation artefact.

    python scripts/envelope_order.py [--paths 4096] > envelope_order.csv
"""
import argparse

import numpy as np

from periodica.boundary import build_envelopes, estimate_constants
from periodica.core import TimeGrid, make_noise
from periodica.problems import example51, example52, linear, ou

PROBLEMS = {"example51": example51, "example52": example52, "linear": linear, "ou": ou}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=4096)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print("problem,dt,alpha_above_a,a_above_b,b_above_beta,total")
    for name, make in PROBLEMS.items():
        p = make()
        hyp = estimate_constants(p.spec, p.pair, TimeGrid.over_period(1.0, 512), 20_000, args.seed)
        fine = make_noise(args.seed, args.paths, TimeGrid.over_period(1.0, 1024), p.spec.dim_noise)
        for n in (64, 128, 256, 512, 1024):
            noise = fine.coarsen(1024 // n)
            a, b = build_envelopes(p.spec, p.pair, noise, hyp.M, noise.grid)
            times = noise.grid.times
            al, be = p.pair.alpha.on(times)[None], p.pair.beta.on(times)[None]
            parts = [(a.values < al).mean(), (a.values > b.values).mean(), (b.values > be).mean()]
            total = ((a.values < al) | (a.values > b.values) | (b.values > be)).mean()
            print(f"{name},{1 / n!r}," + ",".join(f"{x:.6f}" for x in (*parts, total)))


if __name__ == "__main__":
    main()
