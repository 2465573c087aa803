"""Regenerate the bundled toy interaction file (50 items, 200 users)."""

import argparse
import csv
from pathlib import Path

from laebound.data import synthetic_interactions

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "laebound" / "resources" / "toy.csv"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output", type=Path, default=DEFAULT_OUT)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()
    H = synthetic_interactions(n=50, m=200, seed=args.seed)
    items, users = H.coords()
    # user-major order reads like a typical interaction log
    rows = sorted(zip(users.tolist(), items.tolist()))
    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "item_id"])
        writer.writerows((f"u{u}", f"i{i}") for u, i in rows)
    print(f"wrote {len(rows)} interactions to {args.output}")


if __name__ == "__main__":
    main()
