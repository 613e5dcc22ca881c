"""Single-bug injection into program templates and balanced corpus generation."""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources

from symdistill.corpus import csubset as C
from symdistill.corpus.templates import EditSite, ProgramTemplate, find_edit_sites, rename
from symdistill.records import Behavior, Dataset, Example, InjectedEdit, Provenance
from symdistill.taxonomy import FIX_TYPES, SITE_KIND_FOR_FIX, FixType
from symdistill.tinylearn import SplitMix64

MAX_BEHAVIORS = 8

# Used only when a template cannot be interpreted or ships no test inputs.
STATIC_BEHAVIOR = {
    FixType.WRONG_CONDITION: "wrong branch taken",
    FixType.LOOP_BOUND: "loop runs wrong number of times",
    FixType.WRONG_OPERATOR: "wrong arithmetic result",
    FixType.INIT_ERROR: "garbage value in output",
    FixType.MISSING_CASE: "case not handled",
    FixType.OFF_BY_ONE_INDEX: "wrong element accessed",
    FixType.WRONG_RETURN: "wrong value returned",
    FixType.IO_FORMAT: "output format differs",
    FixType.WRONG_CONSTANT: "wrong constant in result",
}


class NoEditSite(ValueError):
    """The template cannot host the requested fix type."""


class EquivalentMutant(NoEditSite):
    """Every candidate edit for the fix type leaves the template's test outputs unchanged."""


class CoverageGap(ValueError):
    pass


@lru_cache(maxsize=None)
def mutation_table() -> dict:
    text = resources.files("symdistill.data").joinpath("mutations.json").read_text(encoding="utf-8")
    return json.loads(text)


def _fill(pattern: str, site: EditSite) -> str | None:
    fields = {"text": site.text}
    m = re.match(r"^([A-Za-z_]\w*)(?:\s*([+-])\s*(\d+))?$", site.text)
    if m:
        fields["ident"] = m.group(1)
    if site.text.isdigit():
        k = int(site.text)
        fields["k_plus_1"] = str(k + 1)
        fields["k_minus_1"] = str(k - 1)
    try:
        return pattern.format(**fields)
    except KeyError:
        return None


def mutation_choices(site: EditSite) -> list[str]:
    """Replacement texts for ``site`` per the shipped mutation table, in table order."""
    table = mutation_table()[site.kind]
    if site.kind == "io-format":
        out = []
        for pat, repl in table:
            new, n = re.subn(pat, repl, site.text, count=1)
            if n and new != site.text:
                out.append(new)
        return out
    if site.kind in ("initialization", "switch-case"):
        return list(table["*"])
    if site.kind == "return-expr":
        shape = site.shape
        if shape == "NUM":
            shape = "ZERO" if site.text == "0" else "NUM"
        elif shape not in table:
            shape = "EXPR"
        patterns = table.get(shape, table["EXPR"])
    elif site.kind == "array-index":
        patterns = table.get(site.shape, [])
    elif site.kind == "constant":
        patterns = table.get(site.text, table["*"])
    else:
        patterns = table.get(site.text, [])
    out = []
    for p in patterns:
        new = _fill(p, site)
        if new is not None and new != site.text and new not in out:
            out.append(new)
    return out


def apply_edit(source: str, site: EditSite, after: str) -> str:
    return source[: site.start] + after + source[site.end:]


def _pick_renaming(template: ProgramTemplate, rng: SplitMix64) -> dict[str, str]:
    names = sorted(template.aliases)
    taken = {t for t in _idents(template.source)}
    mapping: dict[str, str] = {}
    for name in names:
        options = template.aliases[name]
        choice = options[rng.randbelow(len(options))]
        if choice != name:
            mapping[name] = choice
    # renaming must stay injective and must not capture an existing identifier
    targets = list(mapping.values())
    if len(set(targets)) != len(targets) or any(t in taken and t not in mapping for t in targets):
        return {}
    return mapping


def _idents(source: str) -> set[str]:
    from symdistill.encode import scan

    return {t.text for t in scan(source) if t.kind == "ident"}


def _run_tests(program, tests):
    return [C.run(program, t) for t in tests]


def failing_behaviors(reference: str, buggy: str, tests: list[str], ref_results=None) -> list[Behavior]:
    """Inputs on which the buggy program observably differs from the reference."""
    ref_results = ref_results or _run_tests(C.parse(reference), tests)
    try:
        bug_prog = C.parse(buggy)
    except C.ParseError:
        return [Behavior("", "", "compile error")]
    out = []
    for stdin, ref in zip(tests, ref_results):
        got = C.run(bug_prog, stdin)
        if got != ref:
            out.append(Behavior(stdin, ref.output, got.describe()))
    return out


def inject_bug(template: ProgramTemplate, fix_type: FixType, rng_seed: int, example_id: str | None = None) -> Example:
    """Inject exactly one bug of ``fix_type`` into ``template``.

    Candidate (site, replacement) pairs are tried in a seeded order; the first one
    that changes observable behaviour on the template's tests is kept.
    """
    fix_type = FixType(fix_type)
    kind = SITE_KIND_FOR_FIX[fix_type]
    rng = SplitMix64(rng_seed)
    reference = rename(template.source, _pick_renaming(template, rng))
    sites = [s for s in find_edit_sites(reference) if s.kind == kind]
    candidates = [(s, a) for s in sites for a in mutation_choices(s)]
    if not candidates:
        raise NoEditSite(f"template {template.id!r} has no {kind} site for {fix_type.value}")

    interpretable = bool(template.tests)
    ref_results = None
    if interpretable:
        try:
            ref_results = _run_tests(C.parse(reference), template.tests)
        except C.ParseError:
            interpretable = False

    for i in rng.permutation(len(candidates)):
        site, after = candidates[i]
        buggy = apply_edit(reference, site, after)
        if interpretable:
            behaviors = failing_behaviors(reference, buggy, template.tests, ref_results)
            if not behaviors:
                continue
        else:
            behaviors = [Behavior("", "", STATIC_BEHAVIOR[fix_type])]
        edit = InjectedEdit(site.site_id, site.kind, site.context, site.start, site.text, after, fix_type, site.flags)
        return Example(
            id=example_id or f"{template.id}-{fix_type.value.lower()}-{rng_seed}",
            buggy_source=buggy,
            reference_source=reference,
            failing_behavior=tuple(behaviors[:MAX_BEHAVIORS]),
            gold_fix_type=fix_type,
            provenance=Provenance(template.id, edit),
        )
    raise EquivalentMutant(f"every {fix_type.value} edit of template {template.id!r} is equivalent on its tests")


def compatible_templates(templates: list[ProgramTemplate], fix_type: FixType) -> list[ProgramTemplate]:
    kind = SITE_KIND_FOR_FIX[FixType(fix_type)]
    return [t for t in templates if any(mutation_choices(s) for s in t.edit_sites if s.kind == kind)]


def generate_corpus(templates: list[ProgramTemplate], count_per_class: int, seed: int) -> Dataset:
    """``count_per_class`` distinct single-bug examples for each of the 9 fix types."""
    if count_per_class < 1:
        raise ValueError("count_per_class must be >= 1")
    pools = {f: compatible_templates(templates, f) for f in FIX_TYPES}
    missing = [f.value for f, pool in pools.items() if not pool]
    if missing:
        raise CoverageGap(f"no template can host: {', '.join(missing)}")

    examples: list[Example] = []
    seen: set[str] = set()
    index = 0
    for f in FIX_TYPES:
        pool = pools[f]
        for k in range(count_per_class):
            example = None
            for attempt in range(64):
                # per-example seed: corpus seed XOR example index, perturbed per retry
                ex_seed = (seed ^ index) + (attempt << 32)
                rng = SplitMix64(ex_seed)
                start = rng.randbelow(len(pool))
                for j in range(len(pool)):
                    template = pool[(start + j) % len(pool)]
                    try:
                        cand = inject_bug(template, f, ex_seed, example_id=f"ex{index:04d}")
                    except NoEditSite:
                        continue
                    if cand.buggy_source not in seen:
                        example = cand
                    break
                if example is not None:
                    break
            if example is None:
                raise CoverageGap(f"could not produce {count_per_class} distinct {f.value} examples")
            seen.add(example.buggy_source)
            examples.append(example)
            index += 1
    return Dataset(examples, seed=seed)
