"""Per-step gap reduction of the monotone sweep for the scalar polynomial example.

The sweep contracts roughly like 1 - lambda / M per outer step, where lambda
is the local decay rate of the drift near the periodic law and M the global
bound over the whole bracket. Wider brackets raise M and slow the sweep.

    python scripts/sweep_rate.py [--steps 40] [--paths 1024]
"""
import argparse

from periodica.boundary import estimate_constants
from periodica.core import TimeGrid, make_noise
from periodica.iteration import AOperatorConfig, monotone_sweep
from periodica.problems import example51


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=40)
    ap.add_argument("--paths", type=int, default=1024)
    args = ap.parse_args()
    grid = TimeGrid.over_period(1.0, 512)
    noise = make_noise(0, args.paths, grid, 1)
    print("c,M,first_gap,last_gap,mean_step_factor")
    for c in (2.5, 3.0, 4.0):
        p = example51(c=c)
        hyp = estimate_constants(p.spec, p.pair, grid, 20_000)
        cfg = AOperatorConfig(M=hyp.M, poincare_tol=5e-3 * p.pair.diameter(), L=hyp.L)
        rep = monotone_sweep(p.spec, p.pair, cfg, noise, n_outer_max=args.steps, gap_tol=1e-9,
                             order_breakdown=None).report
        g = rep.gap_history
        factor = (g[-1] / g[0]) ** (1 / (len(g) - 1))
        print(f"{c},{hyp.M:.3f},{g[0]:.4f},{g[-1]:.4f},{factor:.4f}")


if __name__ == "__main__":
    main()
