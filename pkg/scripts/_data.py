"""Shared corpus construction for the experiment scripts."""

from symdistill.corpus import generate_corpus, load_templates, stratified_split
from symdistill.teacher import supervise_dataset


def main_corpus(per_class: int = 32, seed: int = 42, ratio: float = 0.8, split_seed: int = 1):
    """Generated corpus, oracle-supervised, with the stratified train/validation split."""
    dataset = generate_corpus(load_templates(), per_class, seed)
    supervised, report = supervise_dataset(dataset)
    if report.retained != len(dataset):
        raise SystemExit(f"oracle rejected {len(dataset) - report.retained} examples")
    return stratified_split(supervised, ratio, split_seed)
