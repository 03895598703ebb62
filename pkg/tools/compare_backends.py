#!/usr/bin/env python3
"""同じモデルを embedded / highs の両バックエンドで解き、最適値を比較する。

Usage:
  python tools/compare_backends.py path/to/instance.yaml --objective f1
  python tools/compare_backends.py --synth 7 --objective f2
"""
import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from hwlrp.formulation import OBJECTIVE_NAMES, build_model  # noqa: E402
from hwlrp.instance import load_instance, synth_instance  # noqa: E402
from hwlrp.solver import SolveParams, solve_milp  # noqa: E402


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("instance", nargs="?", help="instance file")
    parser.add_argument("--synth", type=int, help="use synth_instance(seed) instead of a file")
    parser.add_argument("--objective", choices=OBJECTIVE_NAMES, default="f1")
    parser.add_argument("--rel-tol", type=float, default=1e-6)
    args = parser.parse_args()

    if args.synth is not None:
        inst = synth_instance(args.synth)
    elif args.instance:
        inst = load_instance(args.instance)
    else:
        parser.error("give an instance file or --synth SEED")

    model, _ = build_model(inst, args.objective)
    print(f"==== {inst.name} / {args.objective}: {model.n_vars} columns, {len(model.constraints)} rows ====")
    values = {}
    for backend in ("embedded", "highs"):
        t0 = time.perf_counter()
        result = solve_milp(model, SolveParams(backend=backend))
        elapsed = time.perf_counter() - t0
        values[backend] = result.objective
        print(f"{backend:>9}: {result.status:<14} objective={result.objective} nodes={result.nodes} ({elapsed:.2f}s)")

    a, b = values["embedded"], values["highs"]
    if a is None or b is None:
        print("At least one backend returned no optimum.")
        sys.exit(1)
    gap = abs(a - b) / max(1.0, abs(a), abs(b))
    print(f"relative difference: {gap:.3g}")
    sys.exit(0 if gap <= args.rel_tol else 1)


if __name__ == "__main__":
    main()
