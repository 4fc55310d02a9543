#!/usr/bin/env python3
"""Convert official bias-benchmark distributions into the JSON-lines schema
this toolkit consumes.

stereoset mode
    Reads an official StereoSet JSON file (dev.json / test.json) and flattens
    both partitions into one record per instance:
        {"id", "bias_type", "context", "stereotype", "anti_stereotype", "unrelated"}
    Intersentence instances keep their context sentence; intrasentence
    instances have the blank filled in, so the candidate is the full sentence
    and the context is left empty.

    --dev-per-type N carves a probe split of N instances per bias type
    (deterministic, seeded) and writes it next to the main output as
    dev.jsonl, with the remainder in the main output file.

crowspairs mode
    Reads the official crows_pairs_anonymized.csv and emits
        {"id", "bias_type", "sent_more", "sent_less"}
    where sent_more is always the more stereotypical sentence (pairs marked
    antistereo are flipped accordingly).

Usage:
    convert_datasets.py stereoset  --input test.json --output train.jsonl
    convert_datasets.py stereoset  --input dev.json  --output test.jsonl --dev-per-type 50
    convert_datasets.py crowspairs --input crows_pairs_anonymized.csv --output crows.jsonl
"""

import argparse
import csv
import json
import random
import sys
from collections import defaultdict
from pathlib import Path


def convert_stereoset(args):
    data = json.loads(Path(args.input).read_text(encoding="utf-8"))["data"]
    records = []
    skipped = 0
    for partition in ("intersentence", "intrasentence"):
        for inst in data.get(partition, []):
            by_label = {}
            for sent in inst["sentences"]:
                by_label[sent["gold_label"]] = sent["sentence"]
            rec = {
                "id": inst["id"],
                "bias_type": inst["bias_type"],
                "context": inst["context"] if partition == "intersentence" else "",
                "stereotype": by_label.get("stereotype", ""),
                "anti_stereotype": by_label.get("anti-stereotype", ""),
                "unrelated": by_label.get("unrelated", ""),
            }
            if not all((rec["stereotype"], rec["anti_stereotype"], rec["unrelated"])):
                skipped += 1
                continue
            if rec["stereotype"] == rec["anti_stereotype"]:
                skipped += 1
                continue
            records.append(rec)

    dev_records = []
    if args.dev_per_type:
        rng = random.Random(args.seed)
        by_type = defaultdict(list)
        for rec in records:
            by_type[rec["bias_type"]].append(rec)
        picked = set()
        for bias_type, items in sorted(by_type.items()):
            if len(items) <= args.dev_per_type:
                sys.exit(f"not enough '{bias_type}' instances for --dev-per-type")
            for rec in rng.sample(items, args.dev_per_type):
                picked.add(rec["id"])
                dev_records.append(rec)
        records = [rec for rec in records if rec["id"] not in picked]

    write_jsonl(Path(args.output), records)
    if dev_records:
        dev_path = Path(args.output).parent / "dev.jsonl"
        write_jsonl(dev_path, dev_records)
        print(f"wrote {len(dev_records)} dev instances to {dev_path}")
    counts = defaultdict(int)
    for rec in records:
        counts[rec["bias_type"]] += 1
    print(f"wrote {len(records)} instances to {args.output} "
          f"({', '.join(f'{k}: {v}' for k, v in sorted(counts.items()))}; skipped {skipped})")


def convert_crowspairs(args):
    records = []
    with open(args.input, newline="", encoding="utf-8") as f:
        for i, row in enumerate(csv.DictReader(f)):
            more, less = row["sent_more"], row["sent_less"]
            if row.get("stereo_antistereo", "stereo") == "antistereo":
                more, less = less, more
            if not more or not less or more == less:
                continue
            records.append({
                "id": row.get("", str(i)) or str(i),
                "bias_type": row["bias_type"],
                "sent_more": more,
                "sent_less": less,
            })
    write_jsonl(Path(args.output), records)
    print(f"wrote {len(records)} pairs to {args.output}")


def write_jsonl(path, records):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="mode", required=True)

    ss = sub.add_parser("stereoset")
    ss.add_argument("--input", required=True)
    ss.add_argument("--output", required=True)
    ss.add_argument("--dev-per-type", type=int, default=0)
    ss.add_argument("--seed", type=int, default=0)
    ss.set_defaults(fn=convert_stereoset)

    cp = sub.add_parser("crowspairs")
    cp.add_argument("--input", required=True)
    cp.add_argument("--output", required=True)
    cp.set_defaults(fn=convert_crowspairs)

    args = parser.parse_args()
    args.fn(args)


if __name__ == "__main__":
    main()
