"""dt ladder table (violation fraction, GBM strong error, contraction ratio) plus fitted slopes.

    python scripts/refinement_study.py [--problem example51] [--paths 4096]
"""
import argparse

from periodica.pipeline import RunConfig, log2_slope, refine_csv, run_refine


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--problem", default="example51")
    ap.add_argument("--paths", type=int, default=4096)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rows = run_refine(RunConfig(problem=args.problem, n_paths=args.paths, seed=args.seed))
    print(refine_csv(rows), end="")
    dts = [r["dt"] for r in rows]
    errs = [r["strong_error"] for r in rows]
    print(f"# GBM strong-error log2 slope: {log2_slope(dts, errs):.3f}")
    print("# error ratio per halving: " + ", ".join(f"{a / b:.3f}" for a, b in zip(errs, errs[1:])))


if __name__ == "__main__":
    main()
