#!/usr/bin/env python3
"""Place MovieLens 100K ratings at data/ml-100k/u.data.

Tries the GroupLens archive first. When that host is unreachable, falls back
to the copy bundled in the recbole wheel on PyPI (same 100000 ratings, with
a header line that is stripped here).
"""

import argparse
import io
import pathlib
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

GROUPLENS = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WHEEL_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"
EXPECTED_LINES = 100000


def from_grouplens():
    with urllib.request.urlopen(GROUPLENS, timeout=30) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data")


def from_wheel():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp,
             "recbole==1.2.1"],
            check=True)
        wheel = next(pathlib.Path(tmp).glob("recbole-*.whl"))
        text = zipfile.ZipFile(wheel).read(WHEEL_MEMBER).decode()
    lines = text.splitlines()[1:]  # drop the typed header
    return ("\n".join(line for line in lines if line.strip()) + "\n").encode()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/ml-100k/u.data")
    args = parser.parse_args()

    out = pathlib.Path(args.out)
    if out.exists():
        print(f"{out} already present")
        return 0
    try:
        data = from_grouplens()
    except OSError as err:
        print(f"GroupLens download failed ({err}); using the recbole wheel", file=sys.stderr)
        data = from_wheel()

    lines = data.count(b"\n")
    if lines != EXPECTED_LINES:
        print(f"error: got {lines} ratings, expected {EXPECTED_LINES}", file=sys.stderr)
        return 1
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    print(f"wrote {out} ({lines} ratings)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
