#!/usr/bin/env python3
"""ケーススタディのインスタンスをファイルに書き出す。

Usage:
  python tools/write_case_study.py --out data/case_study.yaml
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from hwlrp.instance import case_study_instance, dump_instance, has_fatal, validate_instance  # noqa: E402


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="data/case_study.yaml", help="output instance path")
    args = parser.parse_args()

    inst = case_study_instance()
    findings = validate_instance(inst)
    for f in findings:
        print(f"{f.severity}: {f.entity}: {f.message}")
    if has_fatal(findings):
        print("Case study failed validation; nothing written.")
        sys.exit(2)

    path = dump_instance(inst, args.out)
    print(f"Wrote {path}")
    print(f"  nodes: {len(inst.nodes)} / vehicles: {len(inst.vehicles)} / arcs: {len(inst.arcs)}")
    print(f"  total collected demand: {inst.total_demand:.4f} t")


if __name__ == "__main__":
    main()
