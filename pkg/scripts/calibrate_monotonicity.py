"""Regenerate ``src/pstokes/data/monotonicity_constants.json``.

Usage: python3 scripts/calibrate_monotonicity.py [--samples N] [--seed S]
"""

import argparse
import json
from pathlib import Path

from pstokes.nonlinearity import calibrate_monotonicity

P_VALUES = (1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 1.95)
TARGET = Path(__file__).resolve().parents[1] / "src" / "pstokes" / "data" / "monotonicity_constants.json"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=TARGET)
    args = ap.parse_args()
    constants = {}
    for p in P_VALUES:
        c = calibrate_monotonicity(p, mu_list=(0.0, 1.0), n_samples=args.samples, seed=args.seed)
        constants[repr(p)] = float(f"{c:.17g}")
        print(f"p={p}: C*={c:.12f}")
    doc = {"dim": 3, "mu_list": [0.0, 1.0], "samples": args.samples, "seed": args.seed,
           "constants": constants}
    args.out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
