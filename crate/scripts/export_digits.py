"""Export scikit-learn's 8x8 digits to the CSV layout read by `ieff`.

Usage: python scripts/export_digits.py [OUTPUT]   (default: data/digits.csv)

Header `label,f0,...,f63`; one image per row, integer pixels in 0..=16.
"""

import csv
import sys
from pathlib import Path

from sklearn.datasets import load_digits


def main() -> None:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "data/digits.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["label"] + [f"f{j}" for j in range(digits.data.shape[1])])
        for label, row in zip(digits.target, digits.data):
            w.writerow([int(label)] + [int(v) for v in row])
    print(f"wrote {out} ({len(digits.target)} rows)")


if __name__ == "__main__":
    main()
