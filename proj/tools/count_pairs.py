#!/usr/bin/env python3
"""Brute-force count of same-scene pairs in an ISTD-style train_A directory.

Independent of the C++ code: lists <scene>-<k>.png stems, groups by scene and
enumerates every unordered pair. Compare with `deshadow count-pairs`.
"""

import argparse
import collections
import itertools
import json
import pathlib


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-root", required=True)
    ap.add_argument("--split", default="train")
    args = ap.parse_args()

    scenes = collections.defaultdict(list)
    for p in sorted(pathlib.Path(args.data_root, args.split + "_A").glob("*.png")):
        scene, _, _ = p.stem.partition("-")
        scenes[scene].append(p.name)
    pairs = sum(1 for images in scenes.values() for _ in itertools.combinations(images, 2))
    records = sum(len(v) for v in scenes.values())
    print(json.dumps({"records": records, "scenes": len(scenes), "pairs": pairs}))


if __name__ == "__main__":
    main()
