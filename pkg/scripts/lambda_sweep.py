"""Reasoning-loss weight sweep: paired runs at each lambda, one summary row per lambda."""

import argparse

from _data import main_corpus
from symdistill.config import TrainConfig
from symdistill.trainer import run_paired_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambdas", default="0.25,0.5,1.0,2.0")
    ap.add_argument("--seeds", default="1,2,3,4,5")
    ap.add_argument("--corpus-seed", type=int, default=42)
    args = ap.parse_args()

    dataset = main_corpus(seed=args.corpus_seed)
    seeds = [int(s) for s in args.seeds.split(",")]
    print(f"{'lambda':>6}  {'acc LO':>7} {'acc RD':>7} {'F1 LO':>7} {'F1 RD':>7} {'dF1':>7} wins")
    for lam in (float(x) for x in args.lambdas.split(",")):
        r = run_paired_experiment(dataset, TrainConfig(lambda_reason=lam), seeds)
        lo, rd = r.means["label_only"], r.means["reasoning_distilled"]
        wins = sum(b["macro_f1"] > a["macro_f1"] for a, b in zip(r.rows[::2], r.rows[1::2]))
        print(f"{lam:>6.2f}  {lo['accuracy']:>7.3f} {rd['accuracy']:>7.3f} {lo['macro_f1']:>7.3f} "
              f"{rd['macro_f1']:>7.3f} {r.difference['macro_f1']:>+7.3f} {wins}/{len(seeds)}", flush=True)


if __name__ == "__main__":
    main()
