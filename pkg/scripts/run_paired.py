"""Label-only vs. reasoning-distilled students over several seeds on the main synthetic corpus."""

import argparse
from pathlib import Path

from _data import main_corpus
from symdistill.config import TrainConfig
from symdistill.trainer import run_paired_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus-seed", type=int, default=42)
    ap.add_argument("--seeds", default="1,2,3,4,5")
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ap.add_argument("--run-dir", default="runs/paired")
    args = ap.parse_args()

    dataset = main_corpus(seed=args.corpus_seed)
    seeds = [int(s) for s in args.seeds.split(",")]
    report = run_paired_experiment(dataset, TrainConfig(lambda_reason=args.lam), seeds, Path(args.run_dir))
    print(report.to_text(), end="")
    wins = sum(b["macro_f1"] > a["macro_f1"] for a, b in zip(report.rows[::2], report.rows[1::2]))
    print(f"distilled wins on macro F1 in {wins}/{len(seeds)} seeds")


if __name__ == "__main__":
    main()
