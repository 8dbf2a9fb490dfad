"""Run every shipped config and collect the summaries.

    python demos/run_all.py [out_dir] [threads]
"""

import sys
from pathlib import Path

from abclab.harness.config import load_config
from abclab.harness.run import run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs")
    threads = int(sys.argv[2]) if len(sys.argv) > 2 else 2
    for path in sorted(CONFIGS.glob("*.ini")):
        cfg = load_config(path)
        outcome = run(cfg, out / path.stem, threads)
        print(f"{'PASS' if outcome.passed else 'FAIL'}  {path.stem} ({cfg.kind}, {cfg.hash})")
    report = run("[experiment]\nkind = report\n", out, threads)
    print((out / "summary.txt").read_text(), end="")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
