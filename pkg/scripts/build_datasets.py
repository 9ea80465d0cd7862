"""Rebuild the bundled UCI CSV files under data/.

Sources (all copies of the UCI originals, no network access beyond a
package index is needed):

    iris, wine  -- scikit-learn's bundled data files
    diabetes    -- Pima Indians Diabetes (768 x 8) from the ``keel-ds`` wheel
    zoo         -- Zoo (101 x 16, 7 classes) from the ``orange3`` wheel; the
                   animal-name column is dropped

Usage::

    python scripts/build_datasets.py [--out data] [--wheel-dir /tmp/wheels]
"""
import argparse
import csv
import glob
import io
import subprocess
import sys
import zipfile
from pathlib import Path


def _wheel(name, wheel_dir):
    hits = glob.glob(str(Path(wheel_dir) / f"{name.replace('-', '_')}-*.whl"))
    if not hits:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", name, "-d", str(wheel_dir)],
            check=True,
        )
        hits = glob.glob(str(Path(wheel_dir) / f"{name.replace('-', '_')}-*.whl"))
    return zipfile.ZipFile(sorted(hits)[-1])


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"{path}: {len(rows)} rows, {len(header) - 1} features")


def build_sklearn(out):
    from sklearn.datasets import load_iris, load_wine

    for name, loader, label in (("iris", load_iris, "species"), ("wine", load_wine, "cultivar")):
        bunch = loader()
        header = [c.replace(" (cm)", "").replace(" ", "_") for c in bunch.feature_names] + [label]
        rows = [
            [repr(float(v)) for v in x] + [bunch.target_names[t]]
            for x, t in zip(bunch.data, bunch.target)
        ]
        _write(out / f"{name}.csv", header, rows)


def build_diabetes(out, wheel_dir):
    z = _wheel("keel-ds", wheel_dir)
    text = z.read("keel_ds/data/balanced/raw/pima.dat").decode()
    rows = [line.split(",") for line in text.splitlines() if line and not line.startswith("@")]
    header = ["pregnant", "glucose", "pressure", "triceps", "insulin", "mass", "pedigree", "age", "class"]
    _write(out / "diabetes.csv", header, [[c.strip() for c in r] for r in rows])


def build_zoo(out, wheel_dir):
    z = _wheel("orange3", wheel_dir)
    lines = z.read("Orange/datasets/zoo.tab").decode().splitlines()
    reader = csv.reader(io.StringIO("\n".join(lines)), delimiter="\t")
    table = list(reader)
    header, body = table[0], [r for r in table[3:] if r]
    _write(out / "zoo.csv", header[1:], [r[1:] for r in body])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    ap.add_argument("--wheel-dir", default="/tmp/contingency-wheels")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    Path(args.wheel_dir).mkdir(parents=True, exist_ok=True)
    build_sklearn(out)
    build_diabetes(out, args.wheel_dir)
    build_zoo(out, args.wheel_dir)


if __name__ == "__main__":
    main()
