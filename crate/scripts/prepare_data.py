#!/usr/bin/env python3
"""Materialise the benchmark knowledge bases under data/.

Nations, Kinship and UMLS are taken from the TSV files bundled in the
pykeen wheel (train/valid/test concatenated into one facts.tsv; the engine
re-splits them itself). Countries is rebuilt from the per-country JSON
records bundled in the countryinfo wheel, and split into the S1/S2/S3
tasks.

Usage:
    pip download pykeen countryinfo --no-deps -d /tmp/wheels
    python3 scripts/prepare_data.py /tmp/wheels
"""

import glob
import json
import os
import random
import sys
import zipfile

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def write_tsv(path, facts):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        for h, r, t in facts:
            fh.write(f"{h}\t{r}\t{t}\n")


def pykeen_sets(wheel_dir):
    whl = glob.glob(os.path.join(wheel_dir, "pykeen-*.whl"))[0]
    z = zipfile.ZipFile(whl)
    for src, dst in [("nations", "nations"), ("kinships", "kinship"), ("umls", "umls")]:
        facts = []
        for part in ["train", "valid", "test"]:
            text = z.read(f"pykeen/datasets/{src}/{part}.txt").decode()
            facts += [tuple(line.split("\t")) for line in text.splitlines() if line.strip()]
        write_tsv(os.path.join(ROOT, dst, "facts.tsv"), facts)
        print(dst, len(facts))


def slug(name):
    return name.strip().lower().replace(" ", "_").replace(",", "").replace("'", "")


def countries(wheel_dir, seed=1234, n_test=24, n_valid=24):
    whl = glob.glob(os.path.join(wheel_dir, "countryinfo-*.whl"))[0]
    z = zipfile.ZipFile(whl)
    records = {}
    for name in z.namelist():
        if not name.endswith(".json"):
            continue
        d = json.loads(z.read(name))
        iso = (d.get("ISO") or {}).get("alpha3")
        region, sub = d.get("region"), d.get("subregion")
        if not iso or not region or not sub:
            continue
        records[iso] = (slug(d["name"]), slug(sub), slug(region), d.get("borders") or [])
    neighbors = {}
    for iso, (name, _, _, borders) in records.items():
        for b in borders:
            if b in records and b != iso:
                neighbors.setdefault(name, set()).add(records[b][0])
                neighbors.setdefault(records[b][0], set()).add(name)
    located, sub_region = {}, {}
    for name, sub, region, _ in records.values():
        located[name] = (sub, region)
        sub_region[sub] = region

    rng = random.Random(seed)
    candidates = sorted(c for c in located if neighbors.get(c))
    rng.shuffle(candidates)
    test, valid = [], []
    for c in candidates:
        # held-out countries must keep all their neighbours in training
        if any(n in test or n in valid for n in neighbors[c]):
            continue
        if len(test) < n_test:
            test.append(c)
        elif len(valid) < n_valid:
            valid.append(c)
        else:
            break
    held = set(test) | set(valid)

    base = []
    for c in sorted(neighbors):
        for n in sorted(neighbors[c]):
            base.append((c, "neighborOf", n))
    for s in sorted(sub_region):
        base.append((s, "locatedIn", sub_region[s]))

    for task in ["S1", "S2", "S3"]:
        train = list(base)
        held_neighbors = set(n for c in held for n in neighbors[c])
        for c in sorted(located):
            sub, region = located[c]
            if c in held:
                if task == "S1":
                    train.append((c, "locatedIn", sub))
                continue
            train.append((c, "locatedIn", sub))
            if task == "S3" and c in held_neighbors:
                continue
            train.append((c, "locatedIn", region))
        out = os.path.join(ROOT, f"countries_{task}")
        write_tsv(os.path.join(out, "train.tsv"), train)
        write_tsv(os.path.join(out, "valid.tsv"), [(c, "locatedIn", located[c][1]) for c in valid])
        write_tsv(os.path.join(out, "test.tsv"), [(c, "locatedIn", located[c][1]) for c in test])
        print(task, len(train), len(valid), len(test))
    print("countries", len(located), "subregions", len(sub_region), "regions", len(set(sub_region.values())))


if __name__ == "__main__":
    wheel_dir = sys.argv[1] if len(sys.argv) > 1 else "/tmp/wheels"
    pykeen_sets(wheel_dir)
    countries(wheel_dir)
