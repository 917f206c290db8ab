#!/usr/bin/env python3
"""Build data/adult.csv from the UCI Adult files (adult.data + adult.test).

Usage: prepare_adult.py <dir containing adult.data and adult.test | wheel> <out.csv>

The UCI files have no header, use ", " separators and the test file carries
labels with a trailing period. Both splits are concatenated (48,842 rows).
"""
import csv
import io
import sys
import zipfile

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "gender",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income_bracket",
]


def read_sources(src):
    if src.endswith(".whl"):
        z = zipfile.ZipFile(src)
        base = "responsibly/dataset/adult/"
        return [z.read(base + "adult.data").decode(), z.read(base + "adult.test").decode()]
    out = []
    for name in ("adult.data", "adult.test"):
        with open(f"{src}/{name}") as fh:
            out.append(fh.read())
    return out


def rows(text):
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("|"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(COLUMNS):
            continue
        cells[-1] = cells[-1].rstrip(".")
        yield cells


def main():
    src, dst = sys.argv[1], sys.argv[2]
    n = 0
    with open(dst, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for text in read_sources(src):
            for r in rows(text):
                w.writerow(r)
                n += 1
    print(f"wrote {n} rows to {dst}")


if __name__ == "__main__":
    main()
