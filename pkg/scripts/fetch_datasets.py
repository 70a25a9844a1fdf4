"""Download the two real sensor benchmarks and convert them for ``gpisomap run --input-csv``.

Neither dataset is bundled. Checksums are not known in advance: the first
download records the SHA-256 of each archive in ``checksums.json`` next to the
data, and later runs verify against it (``--update`` re-records).

    python3 scripts/fetch_datasets.py --dest data/ [gas] [wle]
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import urllib.request
import zipfile

SOURCES = {
    # UCI Gas Sensor Array Drift (10 batches, 128 features, 6 gases)
    "gas": "https://archive.ics.uci.edu/ml/machine-learning-databases/00224/Dataset.zip",
    # Weight Lifting Exercises (classes A-E in column "classe")
    "wle": "http://groupware.les.inf.puc-rio.br/static/WLE/WearableComputing_weight_lifting_exercises_biceps_curl_variations.csv",
}

N_GAS_FEATURES = 128


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def download(url: str) -> bytes:
    with urllib.request.urlopen(url, timeout=120) as resp:
        return resp.read()


def check(name: str, data: bytes, dest: str, update: bool) -> None:
    path = os.path.join(dest, "checksums.json")
    known = {}
    if os.path.exists(path):
        with open(path) as fh:
            known = json.load(fh)
    digest = sha256(data)
    if name in known and not update and known[name] != digest:
        raise SystemExit(f"{name}: checksum mismatch (recorded {known[name]}, got {digest}); "
                         "rerun with --update if the upstream file changed deliberately")
    known[name] = digest
    with open(path, "w") as fh:
        json.dump(known, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{name}: sha256 {digest}")


def gas_rows(text: str):
    """Parse ``gas;concentration idx:value ...`` lines into ``features + [gas]`` rows.

    Missing feature indices become empty fields, which the loader drops as invalid.
    The concentration is discarded; rows keep the file (batch) order.
    """
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        head, *pairs = line.split()
        gas = head.split(";")[0]
        feats = [""] * N_GAS_FEATURES
        for pair in pairs:
            idx, val = pair.split(":")
            feats[int(idx) - 1] = val
        yield feats + [gas]


def convert_gas(archive: bytes, out_path: str) -> int:
    n = 0
    with zipfile.ZipFile(io.BytesIO(archive)) as zf, open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i + 1}" for i in range(N_GAS_FEATURES)] + ["gas"])
        names = sorted((m for m in zf.namelist() if m.endswith(".dat")),
                       key=lambda m: int("".join(ch for ch in os.path.basename(m) if ch.isdigit()) or 0))
        for m in names:
            for row in gas_rows(zf.read(m).decode("ascii")):
                w.writerow(row)
                n += 1
    return n


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("datasets", nargs="*", choices=sorted(SOURCES), default=sorted(SOURCES))
    p.add_argument("--dest", default="data")
    p.add_argument("--update", action="store_true", help="re-record checksums")
    args = p.parse_args(argv)
    os.makedirs(args.dest, exist_ok=True)
    for name in args.datasets:
        try:
            data = download(SOURCES[name])
        except OSError as exc:
            print(f"{name}: download failed ({exc}); fetch {SOURCES[name]} manually into {args.dest}",
                  file=sys.stderr)
            return 3
        check(name, data, args.dest, args.update)
        if name == "gas":
            n = convert_gas(data, os.path.join(args.dest, "gas_drift.csv"))
            print(f"gas: {n} rows -> {os.path.join(args.dest, 'gas_drift.csv')}")
        else:
            path = os.path.join(args.dest, "wle.csv")
            with open(path, "wb") as fh:
                fh.write(data)
            print(f"wle: {len(data)} bytes -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
