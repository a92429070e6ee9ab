"""Run the three built-in reproductions and print a one-line summary for each.

    python scripts/run_examples.py [--out out] [--paths 4096]
"""
import argparse
import json
import time
from pathlib import Path

from periodica.cli import REPRODUCE
from periodica.pipeline import RunConfig, run_solve


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--paths", type=int, default=4096)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for name, preset in REPRODUCE.items():
        cfg = RunConfig.from_dict({**preset, "n_paths": args.paths, "seed": args.seed})
        t0 = time.perf_counter()
        code, payload, _ = run_solve(cfg, args.out / name)
        it = payload.get("iteration", {})
        print(json.dumps({
            "example": name, "exit": code, "seconds": round(time.perf_counter() - t0, 1),
            "outer_steps": it.get("n_outer"), "final_gap": it.get("final_gap"),
            "bracket_closed": it.get("bracket_closed"),
            "periodicity_max": payload.get("periodicity", {}).get("max"),
            "worst_order_violation": max(it.get("monotone_violation_fraction") or [0.0]),
        }))


if __name__ == "__main__":
    main()
