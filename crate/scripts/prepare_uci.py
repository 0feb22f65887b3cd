#!/usr/bin/env python3
"""Convert the bundled UCI copies (Orange3 / keel-ds wheels) into LIBSVM text.

Usage:
    pip download --no-deps -d /tmp/wheels orange3 keel-ds
    python3 scripts/prepare_uci.py /tmp/wheels data/uci

Heart Disease (Cleveland, 303 rows) comes from the Orange3 wheel, Australian
Credit (690 rows) and Splice Junctions (3190 rows) from keel-ds. Categorical
columns are integer-coded in the order their domain is declared; missing values
become 0 (the LIBSVM "absent" value).
"""
import glob
import os
import sys
import zipfile


def fmt(v):
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def write_libsvm(path, rows, labels):
    n = max(len(r) for r in rows)
    with open(path, "w") as f:
        for i, (r, y) in enumerate(zip(rows, labels)):
            toks = [str(y)]
            for j, v in enumerate(r):
                if v != 0 or (i == 0 and j == n - 1):
                    toks.append(f"{j + 1}:{fmt(v)}")
            f.write(" ".join(toks) + "\n")
    print(f"{path}: {len(rows)} rows, {n} features, {len(set(labels))} classes")


def heart(wheel, out):
    z = zipfile.ZipFile(wheel)
    lines = z.read("Orange/datasets/heart_disease.tab").decode().splitlines()
    names = lines[0].split("\t")
    kinds = lines[1].split("\t")
    rows, labels = [], []
    target = names.index("diameter narrowing")
    domains = []
    for k in kinds:
        if k in ("c", "d", "continuous", "discrete"):
            domains.append(None)
        else:
            domains.append([t.replace("\\ ", " ") for t in k.replace("\\ ", "\x00").split(" ")])
            domains[-1] = [t.replace("\x00", " ") for t in domains[-1]]
    for line in lines[3:]:
        if not line.strip():
            continue
        cells = line.split("\t")
        row = []
        for j, c in enumerate(cells):
            if j == target:
                continue
            if c in ("?", ""):
                row.append(0.0)
            elif domains[j] is not None:
                row.append(float(domains[j].index(c) + 1))
            else:
                try:
                    row.append(float(c))
                except ValueError:
                    # discrete column without declared domain (e.g. gender)
                    seen = domains_fallback.setdefault(j, [])
                    if c not in seen:
                        seen.append(c)
                    row.append(float(seen.index(c) + 1))
        rows.append(row)
        labels.append(int(cells[target]))
    write_libsvm(os.path.join(out, "heart.libsvm"), rows, labels)


domains_fallback = {}


def keel(wheel, name, out):
    z = zipfile.ZipFile(wheel)
    lines = z.read(f"keel_ds/data/balanced/raw/{name}.dat").decode().splitlines()
    rows, labels = [], []
    code = {"A": 1.0, "C": 2.0, "G": 3.0, "T": 4.0}
    classes = []
    for line in lines:
        if not line.strip() or line.startswith("@"):
            continue
        cells = [c.strip() for c in line.split(",")]
        *feats, y = cells
        if name == "splice":
            rows.append([code.get(c, 0.0) for c in feats])
        else:
            rows.append([float(c) for c in feats])
        if y not in classes:
            classes.append(y)
        labels.append(y)
    if name == "splice":
        order = sorted(classes)
        labels = [order.index(y) + 1 for y in labels]
    else:
        labels = [int(y) for y in labels]
    write_libsvm(os.path.join(out, f"{name}.libsvm"), rows, labels)


def main():
    wheels, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    heart(glob.glob(os.path.join(wheels, "orange3-*.whl"))[0], out)
    kw = glob.glob(os.path.join(wheels, "keel_ds-*.whl"))[0]
    keel(kw, "australian", out)
    keel(kw, "splice", out)


if __name__ == "__main__":
    main()
