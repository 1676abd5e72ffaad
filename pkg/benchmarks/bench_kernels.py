"""Compare the compiled and pure-Python intersection kernels.

    python benchmarks/bench_kernels.py --pairs 500 --repeat 7 [--json out.json]
"""

import argparse
import json

from ghdjoin.bench import bench_kernels


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="write the full report here")
    args = ap.parse_args()
    rep = bench_kernels(args.pairs, args.repeat, args.seed)
    print(rep.table())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rep.as_dict(), fh, indent=2)


if __name__ == "__main__":
    main()
