"""Structured JSON distillation in the low-data regime, next to the classification student."""

import argparse
import json
from pathlib import Path

from _data import main_corpus
from symdistill.config import TrainConfig
from symdistill.structured import DecoderConfig, run_structured_study


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train-size", type=int, default=74)
    ap.add_argument("--epochs", type=int, default=120)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="runs/json_distill.json")
    args = ap.parse_args()

    config = DecoderConfig(train_size=args.train_size, epochs=args.epochs, seed=args.seed)
    study = run_structured_study(main_corpus(), config, TrainConfig(seed=args.seed))
    print(study.to_text(), end="")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(study.to_json(), indent=2) + "\n")


if __name__ == "__main__":
    main()
