#!/usr/bin/env python3
"""Writes data/communities.data and data/communities.schema.

The UCI communities-and-crime file is not always reachable. The `ethicml`
wheel on PyPI ships a cleaned copy of it (crime.csv): the columns with missing
values are already removed, the state is one-hot encoded, rows are shuffled,
and the first UCI record is lost because the raw file was read with a header.
This script undoes the encoding and writes the remaining 1993 rows in the UCI
layout (no header, comma-separated) with a schema that lists the columns
actually present.

If you have the original file, skip this script and pass
`--data communities.data --schema data/uci_communities.schema` instead.
"""

import argparse
import csv
import io
import pathlib
import subprocess
import sys
import tempfile
import zipfile

WHEEL = "ethicml==1.2.1"
MEMBER = "ethicml/data/csvs/crime.csv"
TARGET = "ViolentCrimesPerPop"
IDENTIFIERS = ["state", "communityname", "fold"]


def download_table() -> str:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "--timeout", "60",
             "--dest", tmp, WHEEL],
            check=True,
        )
        wheel = next(pathlib.Path(tmp).glob("ethicml-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            return z.read(MEMBER).decode()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=pathlib.Path(__file__).resolve().parent.parent / "data",
                        type=pathlib.Path)
    args = parser.parse_args()

    rows = list(csv.reader(io.StringIO(download_table())))
    header, body = rows[0], rows[1:]
    first = header.index("population")
    last = header.index(TARGET)
    covariates = header[first:last + 1]
    state_cols = [(i, name.removeprefix("state_")) for i, name in enumerate(header)
                  if name.startswith("state_")]
    name_col, fold_col = header.index("communityname"), header.index("fold")

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "communities.data", "w", newline="") as f:
        for row in body:
            states = [code for i, code in state_cols if row[i] == "1"]
            if len(states) != 1:
                raise SystemExit(f"row without a unique state: {row[name_col]}")
            f.write(",".join([states[0], row[name_col], row[fold_col]] + row[first:last + 1]) + "\n")

    columns = IDENTIFIERS + covariates
    lines, current = [], ""
    for name in columns:
        if len(current) + len(name) + 2 > 76:
            lines.append(current.rstrip())
            current = ""
        current += name + ", "
    lines.append(current.rstrip().rstrip(","))
    schema = (
        "# Cleaned communities-and-crime table written by scripts/fetch_crime_data.py.\n"
        f"columns = {chr(10).join(('    ' if k else '') + l for k, l in enumerate(lines))}\n"
        f"identifiers = {', '.join(IDENTIFIERS)}\n"
        f"target = {TARGET}\n"
        "missing = ?\n"
        "header = false\n"
    )
    (args.out / "communities.schema").write_text(schema)
    print(f"{len(body)} rows, {len(covariates) - 1} covariates -> {args.out}")


if __name__ == "__main__":
    main()
