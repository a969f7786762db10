#!/usr/bin/env python3
"""Fetch the diabetes regression dataset (Efron et al.) as a header CSV.

Writes data/diabetes.csv with the ten raw covariates and the response
column `y`. Prefers the copy bundled with scikit-learn; falls back to the
public tab-separated source. Run from the repository root:

    python3 data/fetch_diabetes.py
"""
import csv
import os
import sys

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "diabetes.csv")
NAMES = ["age", "sex", "bmi", "bp", "s1", "s2", "s3", "s4", "s5", "s6"]


def from_sklearn():
    from sklearn.datasets import load_diabetes
    d = load_diabetes(scaled=False)
    return d.data, d.target


def from_url():
    import io
    import urllib.request
    url = "https://www4.stat.ncsu.edu/~boos/var.select/diabetes.tab.txt"
    raw = urllib.request.urlopen(url, timeout=30).read().decode()
    rows = [line.split() for line in raw.strip().splitlines()]
    body = [[float(v) for v in r] for r in rows[1:]]
    data = [r[:10] for r in body]
    target = [r[10] for r in body]
    return data, target


def validate(data, target):
    n = len(target)
    if n < 100:
        raise SystemExit(f"unexpected row count {n}")
    for row in data:
        if len(row) != 10:
            raise SystemExit("expected 10 covariates per row")
    if n not in (442, 484):
        print(f"note: n={n} differs from both the canonical 442 and the reported 484",
              file=sys.stderr)
    return n


def main():
    try:
        data, target = from_sklearn()
        source = "scikit-learn bundled copy"
    except Exception:
        data, target = from_url()
        source = "ncsu.edu mirror"
    n = validate(data, target)
    with open(OUT, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(NAMES + ["y"])
        for x, y in zip(data, target):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])
    print(f"wrote {OUT}: n={n}, p=10 ({source})")


if __name__ == "__main__":
    main()
