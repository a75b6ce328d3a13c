#!/usr/bin/env python3
"""Convert a MULAN train/test ARFF pair into the CSV layout read by grwscmf.

    scripts/arff_to_csv.py emotions-train.arff emotions-test.arff --labels 6 --out data/emotions

writes train.csv, test.csv and manifest.txt. Labels must be the last
`--labels` attributes. Nominal attributes become the index of their value in
the declared list; dense and sparse data sections are both accepted.
"""

import argparse
import csv
import shlex
from pathlib import Path


def parse_attribute(line):
    rest = line.split(None, 1)[1].strip()
    if rest.startswith(("'", '"')):
        quote = rest[0]
        end = rest.index(quote, 1)
        name, kind = rest[1:end], rest[end + 1 :].strip()
    else:
        name, kind = rest.split(None, 1)
    if kind.startswith("{"):
        values = [v.strip().strip("'\"") for v in kind.strip("{}").split(",")]
        return name, {v: i for i, v in enumerate(values)}
    return name, None


def convert(value, nominal):
    value = value.strip().strip("'\"")
    if value == "?":
        raise ValueError("missing values are not supported")
    if nominal is None:
        return value
    return str(nominal[value])


def read_arff(path):
    attributes = []
    rows = []
    in_data = False
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        lower = line.lower()
        if not in_data:
            if lower.startswith("@attribute"):
                attributes.append(parse_attribute(line))
            elif lower.startswith("@data"):
                in_data = True
            continue
        if line.startswith("{"):
            # omitted sparse entries are 0, or the first declared nominal value
            row = ["0"] * len(attributes)
            for item in line.strip("{}").split(","):
                if item.strip():
                    idx, value = item.strip().split(None, 1)
                    row[int(idx)] = convert(value, attributes[int(idx)][1])
        else:
            values = next(csv.reader([line], skipinitialspace=True))
            if len(values) != len(attributes):
                raise ValueError(f"{path}: row has {len(values)} values, header declares {len(attributes)}")
            row = [convert(v, nom) for v, (_, nom) in zip(values, attributes)]
        rows.append(row)
    return attributes, rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("train")
    parser.add_argument("test")
    parser.add_argument("--labels", type=int, required=True, help="number of trailing label attributes")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for src, name in [(args.train, "train.csv"), (args.test, "test.csv")]:
        attributes, rows = read_arff(src)
        if args.labels >= len(attributes):
            raise SystemExit(f"{src}: {args.labels} labels but only {len(attributes)} attributes")
        with open(out / name, "w", newline="") as f:
            f.write(f"# converted from {shlex.quote(str(src))}\n")
            csv.writer(f, lineterminator="\n").writerows(rows)
        print(f"{src}: {len(rows)} rows, {len(attributes) - args.labels} features -> {out / name}")
    (out / "manifest.txt").write_text(f"label_count={args.labels}\n")


if __name__ == "__main__":
    main()
