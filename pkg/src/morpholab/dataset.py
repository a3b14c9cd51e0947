"""Inflection datasets: TSV ingestion, splits, tagging, synthesis.

The on-disk format is UTF-8 TSV with columns lemma_ipa, form_ipa, tag,
regularity and an optional frequency column; '#' lines are comments.
Frequencies are parsed but never weight training: every (lemma, tag)
item counts once per epoch.  Splits operate on lemma types so all of a
verb's mappings travel to the same side of the held-out boundary.

A deterministic generator produces desk-scale corpora with the same
profile as the real data: phonotactically plausible stems, suffixed
regulars, vowel-change islands, and a suppletive residue.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError, UnknownSymbol
from .phonology import (
    FeatureTable,
    PhonemeInventory,
    PhonemeString,
    default_feature_table,
    default_inventory,
    has_value,
    tokenize,
)
from .seeding import rng_for

TAGS = ("PST", "GER", "PTCP", "3SG")

_SIBILANTS = frozenset({"s", "z", "ʃ", "ʒ", "tʃ", "dʒ"})


@dataclass(frozen=True)
class InflectionPair:
    """One training item: a lemma, one inflected form, and its tag."""

    lemma: PhonemeString
    form: PhonemeString
    tag: str
    regular: bool
    freq: float | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")


@dataclass(frozen=True)
class SplitCorpus:
    train: tuple[InflectionPair, ...]
    dev: tuple[InflectionPair, ...]
    test: tuple[InflectionPair, ...]
    seed: int

    def __post_init__(self):
        sides = [self.train, self.dev, self.test]
        lemma_sets = [{p.lemma.indices for p in side} for side in sides]
        for i in range(3):
            for j in range(i + 1, 3):
                if lemma_sets[i] & lemma_sets[j]:
                    raise ValueError("lemma types leak across splits")


def load_tsv(path, inventory: PhonemeInventory | None = None) -> list[InflectionPair]:
    """Parse a dataset file; errors carry the 1-based line number."""
    inventory = inventory or default_inventory()
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cells = line.split("\t")
            if len(cells) not in (4, 5):
                raise ParseError(row, f"expected 4 or 5 columns, got {len(cells)}")
            lemma_txt, form_txt, tag, regularity = cells[:4]
            if tag not in TAGS:
                raise ParseError(row, f"unknown tag {tag!r}")
            if regularity not in ("regular", "irregular"):
                raise ParseError(row, f"bad regularity flag {regularity!r}")
            freq = None
            if len(cells) == 5:
                try:
                    freq = float(cells[4])
                except ValueError:
                    raise ParseError(row, f"bad frequency {cells[4]!r}") from None
            try:
                lemma = tokenize(lemma_txt, inventory)
                form = tokenize(form_txt, inventory)
            except UnknownSymbol as exc:
                raise UnknownSymbol(
                    exc.substring, exc.offset, context=f"row {row}"
                ) from None
            pairs.append(
                InflectionPair(lemma, form, tag, regularity == "regular", freq)
            )
    return pairs


def save_tsv(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            cells = [
                str(p.lemma),
                str(p.form),
                p.tag,
                "regular" if p.regular else "irregular",
            ]
            if p.freq is not None:
                cells.append(repr(p.freq))
            fh.write("\t".join(cells) + "\n")


def split(pairs, seed: int = 0, ratios=(0.8, 0.1, 0.1)) -> SplitCorpus:
    """Split by lemma type into train/dev/test at the given proportions."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    lemmas = []
    seen = set()
    for p in pairs:
        if p.lemma.indices not in seen:
            seen.add(p.lemma.indices)
            lemmas.append(p.lemma.indices)
    rng = rng_for(seed, "split")
    order = rng.permutation(len(lemmas))
    n = len(lemmas)
    n_dev = int(round(ratios[1] * n))
    n_test = int(round(ratios[2] * n))
    n_train = n - n_dev - n_test
    shuffled = [lemmas[i] for i in order]
    side_of = {}
    for k, lemma in enumerate(shuffled):
        if k < n_train:
            side_of[lemma] = 0
        elif k < n_train + n_dev:
            side_of[lemma] = 1
        else:
            side_of[lemma] = 2
    sides = ([], [], [])
    for p in pairs:
        sides[side_of[p.lemma.indices]].append(p)
    return SplitCorpus(tuple(sides[0]), tuple(sides[1]), tuple(sides[2]), seed)


def tag_token(tag: str) -> str:
    return f"<{tag}>"


def augment_multitask(pair: InflectionPair) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Input tagged with the transduction, output left bare."""
    return pair.lemma.symbols + (tag_token(pair.tag),), pair.form.symbols


def to_examples(pairs, multitask: bool = False):
    """(inputs, outputs, regular flags) ready for the sequence model."""
    X, y, flags = [], [], []
    for p in pairs:
        if multitask:
            xi, yi = augment_multitask(p)
        else:
            xi, yi = p.lemma.symbols, p.form.symbols
        X.append(xi)
        y.append(yi)
        flags.append(p.regular)
    return X, y, flags


# ---------------------------------------------------------------------------
# regular inflection helpers shared with the generator


def regular_gerund(stem: PhonemeString) -> PhonemeString:
    inv = stem.inventory
    return PhonemeString(inv, stem.indices + (inv.index("ɪ"), inv.index("ŋ")))


def regular_third_singular(
    stem: PhonemeString, table: FeatureTable | None = None
) -> PhonemeString:
    """[-ɪz] after sibilants, [-z] after voiced segments, else [-s]."""
    inv = stem.inventory
    table = table or default_feature_table(inv)
    last = inv.symbols[stem.indices[-1]]
    if last in _SIBILANTS:
        suffix = (inv.index("ɪ"), inv.index("z"))
    elif has_value(table, last, "+voiced"):
        suffix = (inv.index("z"),)
    else:
        suffix = (inv.index("s"),)
    return PhonemeString(inv, stem.indices + suffix)


# ---------------------------------------------------------------------------
# synthetic corpora

_ONSETS = (
    "p b t d k g f v θ s z ʃ h m n l r w j tʃ dʒ".split()
    + "pl pr bl br tr dr kl kr gl gr fl fr sl sm sn sp st sk sw tw θr".split()
)
_NUCLEI = "i ɪ e ɛ æ a ʌ ɑ ɔ o ʊ u aɪ aʊ ɔɪ eɪ oʊ".split()
_CODAS = (
    "p b t d k g tʃ dʒ f v θ ð s z ʃ m n ŋ l r".split()
    + "st sk sp nd nt ŋk mp lt ld lk lp rm rn rd rt rk ft pt kt ks".split()
)


def _sample_stem(rng, inv, force_final_ih=False):
    """One phonotactically plausible stem that re-tokenizes to itself.

    Shapes: open CV, closed CVC (weighted twice), onsetless VC, and
    disyllabic CVCVC.  Resamples on the rare collisions where greedy
    re-tokenization would merge adjacent symbols.
    """
    for _ in range(100):
        shape = int(rng.integers(5))
        syllables = 2 if shape == 4 else 1
        symbols: list[str] = []
        for s in range(syllables):
            if s > 0 or shape != 3:
                symbols.extend(_split_cluster(str(rng.choice(_ONSETS))))
            symbols.append(str(rng.choice(_NUCLEI)))
        if force_final_ih:
            symbols[-1] = "ɪ"
        if shape != 0 or force_final_ih:
            symbols.extend(_split_cluster(str(rng.choice(_CODAS))))
        try:
            stem = PhonemeString.from_symbols(symbols, inv)
        except UnknownSymbol:
            continue
        if tokenize(str(stem), inv).indices == stem.indices:
            return stem
    raise RuntimeError("stem sampling failed to converge")


def _split_cluster(cluster: str) -> list[str]:
    # clusters are written as concatenated single- or double-char symbols
    out = []
    i = 0
    while i < len(cluster):
        if cluster[i : i + 2] in ("tʃ", "dʒ"):
            out.append(cluster[i : i + 2])
            i += 2
        else:
            out.append(cluster[i])
            i += 1
    return out


def _replace_last_vowel(stem: PhonemeString, new_symbol: str, table) -> PhonemeString:
    inv = stem.inventory
    for i in range(len(stem.indices) - 1, -1, -1):
        if has_value(table, inv.symbols[stem.indices[i]], "+vowel"):
            indices = stem.indices[:i] + (inv.index(new_symbol),) + stem.indices[i + 1 :]
            return PhonemeString(inv, indices)
    raise ValueError(f"no vowel in {stem}")


def synth_corpus(
    n_types: int,
    n_irregular: int = 0,
    seed: int = 0,
    inventory: PhonemeInventory | None = None,
    feature_table: FeatureTable | None = None,
) -> list[InflectionPair]:
    """Generate a full four-mapping corpus of ``n_types`` verb types.

    ``n_irregular`` of the types form their past (and participle) by a
    vowel change to [æ] or [ʌ], or suppletively; everything else, and
    the gerund/third-singular of every verb, follows the regular
    suffix rules.
    """
    from .experiments import regular_past

    if n_types < 1:
        raise ValueError("need at least one verb type")
    if not 0 <= n_irregular <= n_types:
        raise ValueError("irregular count out of range")
    inv = inventory or default_inventory()
    table = feature_table or default_feature_table(inv)
    rng = rng_for(seed, "synth")

    n_ablaut_a = int(round(0.4 * n_irregular))
    n_ablaut_b = int(round(0.4 * n_irregular))
    n_supp = n_irregular - n_ablaut_a - n_ablaut_b

    stems: list[PhonemeString] = []
    kinds: list[str] = []
    seen = set()

    def add_stem(kind, **kw):
        while True:
            stem = _sample_stem(rng, inv, **kw)
            if stem.indices not in seen:
                seen.add(stem.indices)
                stems.append(stem)
                kinds.append(kind)
                return

    for _ in range(n_ablaut_a):
        add_stem("ablaut_a", force_final_ih=True)
    for _ in range(n_ablaut_b):
        add_stem("ablaut_b", force_final_ih=True)
    for _ in range(n_supp):
        add_stem("suppletive")
    for _ in range(n_types - n_irregular):
        add_stem("regular")

    pairs = []
    for stem, kind in zip(stems, kinds):
        regular = kind == "regular"
        if kind == "ablaut_a":
            past = _replace_last_vowel(stem, "æ", table)
            participle = _replace_last_vowel(stem, "ʌ", table)
        elif kind == "ablaut_b":
            past = _replace_last_vowel(stem, "ʌ", table)
            participle = past
        elif kind == "suppletive":
            while True:
                past = _sample_stem(rng, inv)
                if past.indices != stem.indices:
                    break
            participle = past
        else:
            past = regular_past(stem, table)
            participle = past
        pairs.append(InflectionPair(stem, past, "PST", regular))
        pairs.append(InflectionPair(stem, regular_gerund(stem), "GER", regular))
        pairs.append(InflectionPair(stem, participle, "PTCP", regular))
        pairs.append(
            InflectionPair(stem, regular_third_singular(stem, table), "3SG", regular)
        )
    return pairs
