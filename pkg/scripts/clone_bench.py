#!/usr/bin/env python3
"""Measure per-clone cost of copy-on-write working volumes.

Builds a repo whose backend volume carries the bundled library plus binary
ballast, then snapshots it n times, adding and verifying one small article
per clone.  Per-clone data bytes and wall time should stay flat as n grows
and as the ballast grows.
"""

import argparse
import random

from formalwiki import corpus
from formalwiki.cowstore import CowStore
from formalwiki.minilib import ArticlePath
from formalwiki.orchestrator import Orchestrator, store_library
from formalwiki.vcstore import DEFAULT_BRANCH, VcStore

BENCH_SOURCE = "def bench_val := 41;\nthm bench_ok : bench_val = 41 proof eval;"


def build_repo(ballast_mib: int, seed: int) -> Orchestrator:
    store = CowStore()
    vc = VcStore()
    orch = Orchestrator(store, vc, workers=2)
    vol = store.create_volume("backend/main")
    store_library(store, vol, corpus.reference_library())
    rng = random.Random(seed)
    for i in range(ballast_mib):
        store.write_file(vol, f"ballast/{i:04d}.bin", rng.randbytes(1 << 20))
    vc.add_repo("main", "root")
    head = vc.commit_tree("main", None, store, vol, "root", "seed")
    vc.repo("main").refs[DEFAULT_BRANCH] = head
    orch.attach_repo("main", vol, verify=True)
    return orch


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ballast-mib", type=int, default=50)
    parser.add_argument("--seed", type=int, default=55)
    parser.add_argument("--counts", type=int, nargs="+", default=[10, 50, 200])
    args = parser.parse_args()

    orch = build_repo(args.ballast_mib, args.seed)
    article = ArticlePath(("bench",))
    orch.run_clone_bench("main", 3, article, BENCH_SOURCE)  # warm caches

    print(f"base ballast: {args.ballast_mib} MiB")
    print(f"{'n':>5} {'ms/clone':>9} {'data B/clone':>13} {'meta B/clone':>13}")
    for n in args.counts:
        report = orch.run_clone_bench("main", n, article, BENCH_SOURCE)
        print(
            f"{report.n:>5} {1000 * report.avg_seconds:>9.2f} "
            f"{report.data_bytes:>13} {report.metadata_bytes:>13}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
