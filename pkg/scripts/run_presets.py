"""Run every bundled preset, replay it, and print one status line per preset."""
import argparse
import sys
import time
from pathlib import Path

from subgeo.cli import main, preset_table


def run(out_root: Path, threads: int) -> int:
    worst = 0
    for row in preset_table():
        out = out_root / row["name"]
        t0 = time.perf_counter()
        rc = main(["run", row["name"], "--output-dir", str(out), "--threads", str(threads)])
        rr = main(["replay", str(out / "manifest.json"), "--threads", str(threads)])
        print(f"{row['name']:<22} run={rc} replay={rr} {time.perf_counter() - t0:6.1f}s")
        worst = max(worst, rc, rr)
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="preset_runs")
    ap.add_argument("--threads", type=int, default=1)
    a = ap.parse_args()
    sys.exit(run(Path(a.out), a.threads))
