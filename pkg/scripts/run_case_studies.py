"""Run both bundled toy pipelines and print the headline numbers.

    python3 scripts/run_case_studies.py --out runs
"""

import argparse
import json
from pathlib import Path

from simgen.cli import run

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = {"rupture": ROOT / "configs" / "rupture_toy.yaml",
           "material": ROOT / "configs" / "material_toy.yaml"}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs", help="parent directory for the workspaces")
    ap.add_argument("--only", choices=sorted(CONFIGS))
    args = ap.parse_args()
    for name, cfg in CONFIGS.items():
        if args.only and name != args.only:
            continue
        ws = Path(args.out) / name
        if run(["pipeline", "--config", str(cfg), "--workspace", str(ws)]) != 0:
            raise SystemExit(f"{name} pipeline failed")
        report = json.loads((ws / "report" / "report.json").read_text())
        metrics = {k: v for k, v in report["metrics"].items() if k not in ("split", "task")}
        gen = report["generation"]
        print(f"== {name} ({ws})")
        print(f"  surrogate  {json.dumps(metrics)}")
        print(f"  agent      first/last mean reward {report['agent']['first_mean_reward']:.4f}"
              f" / {report['agent']['last_mean_reward']:.4f}")
        print(f"  generation {gen['retained']}/{gen['n']} retained, histogram "
              f"{gen.get('histogram', {}).get('counts')}")
        print(f"  study best {report['study_best']['value']}")


if __name__ == "__main__":
    main()
