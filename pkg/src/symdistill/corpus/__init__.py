"""IntroClass-style corpus: templates, single-bug injection, stratified splits, JSONL persistence."""

from symdistill.corpus.dataset import (
    ClassTooSmall,
    FormatError,
    load_dataset,
    save_dataset,
    stratified_split,
    three_way_split,
)
from symdistill.corpus.inject import CoverageGap, EquivalentMutant, NoEditSite, generate_corpus, inject_bug
from symdistill.corpus.templates import EditSite, ProgramTemplate, find_edit_sites, load_templates
from symdistill.records import Behavior, Dataset, Example, InjectedEdit, Provenance

__all__ = [
    "Behavior", "ClassTooSmall", "CoverageGap", "Dataset", "EditSite", "EquivalentMutant", "Example",
    "FormatError", "InjectedEdit", "NoEditSite", "ProgramTemplate", "Provenance", "find_edit_sites",
    "generate_corpus", "inject_bug", "load_dataset", "load_templates", "save_dataset", "stratified_split",
    "three_way_split",
]
