"""Shared plumbing for the experiment scripts: argument parsing and a loopback run."""

import argparse
import logging
from pathlib import Path

from mwsbench import bench
from mwsbench.bench import BenchPlan
from mwsbench.topology import LocalTopology, TopologyConfig


def parser(description: str, out: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--sizes", default="1,2,5,10", help="comma-separated KB sizes")
    p.add_argument("--reps", type=int, default=bench.MIN_REPS)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--seed", type=int, default=0, help="RNG seed for keys, IVs and ids")
    p.add_argument("--out", default=out, help="directory for records.csv, sizes.txt and latency.txt")
    return p


def sizes(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip())


def run_on_loopback(plan: BenchPlan, seed: int) -> bench.BenchRun:
    """Fresh IdP + host on loopback, one sequential client, records exported to ``plan.out_dir``."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    with LocalTopology(TopologyConfig(seed=seed)) as topo:
        records = bench.run(plan, topo.endpoint, topo.client())
    if plan.out_dir is not None:
        for kind, path in bench.export(records, Path(plan.out_dir)).items():
            print(f"{kind}: {path}")
    if records.failed_cells:
        print(f"warning: {len(records.failed_cells)} cells failed")
    return records
