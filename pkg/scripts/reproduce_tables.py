"""Print the 2x2-switch LP bounds for both coefficient modes as CSV.

    python3 scripts/reproduce_tables.py [--eps 0.01 0.05 0.1]
"""

import argparse
import csv
import sys

from gswitch import lp

OBJECTIVES = {"q2+q3": (0, 1, 1), "q1": (1, 0, 0)}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--eps", type=float, nargs="+", default=[0.01, 0.05, 0.1])
    args = parser.parse_args(argv)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["mode", "objective", "epsilon", "f_lower", "f_upper", "status"])
    for mode in lp.MODES:
        for name, alpha in OBJECTIVES.items():
            for eps in args.eps:
                try:
                    lo, hi = lp.bounds(lp.build_system_2x2(eps=eps, mode=mode), alpha)
                    status = "optimal"
                except lp.ModelInconsistencyError:
                    lo = hi = float("nan")
                    status = "infeasible"
                writer.writerow([mode, name, eps, repr(lo), repr(hi), status])
    return 0


if __name__ == "__main__":
    sys.exit(main())
