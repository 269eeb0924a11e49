"""Run the three convergence presets plus the CCA preset and print their summaries.

    python scripts/fig1.py --out results
    python scripts/fig1.py --horizon 1000000   # full-length curves (slow)
"""

import argparse
import sys

from genoja.harness.cli import main
from genoja.harness.presets import PRESETS


def parse_args():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="results")
    p.add_argument("--horizon", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--only", choices=sorted(PRESETS), action="append")
    return p.parse_args()


if __name__ == "__main__":
    args = parse_args()
    status = 0
    for name in args.only or PRESETS:
        print(f"== {name}")
        argv = ["preset", name, "--out", f"{args.out}/{name}"]
        if args.horizon:
            argv += ["--horizon", str(args.horizon)]
        if args.trials:
            argv += ["--trials", str(args.trials)]
        status = max(status, main(argv))
    sys.exit(status)
