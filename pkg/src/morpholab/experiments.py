"""Evaluation suite: accuracy strata, error taxonomy, developmental
oscillation detection, rank correlation, and contingency tests.

The deterministic suffix rule doubles as a data-generation oracle and as
the reference against which overregularization is judged.  The error
taxonomy distinguishes the error classes that matter for comparing
learners with human behaviour: overregularization (regular suffix on an
exception), overirregularization (exception pattern on a regular verb),
and blends (exception stem change plus regular suffix).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dataset import InflectionPair, tag_token
from .errors import DegenerateTable, EmptyDataset, LengthMismatch
from .phonology import (
    FeatureTable,
    PhonemeString,
    _as_phoneme_string,
    default_feature_table,
    has_value,
)

# ---------------------------------------------------------------------------
# deterministic regular rule


def regular_past(stem: PhonemeString, table: FeatureTable | None = None) -> PhonemeString:
    """Suffix selection by the final segment: [-ɪd] after t/d, [-d]
    after a voiced segment, [-t] after a voiceless consonant."""
    inv = stem.inventory
    table = table or default_feature_table(inv)
    last = inv.symbols[stem.indices[-1]]
    if last in ("t", "d"):
        suffix = (inv.index("ɪ"), inv.index("d"))
    elif has_value(table, last, "+voiced"):
        suffix = (inv.index("d"),)
    else:
        suffix = (inv.index("t"),)
    return PhonemeString(inv, stem.indices + suffix)


# ---------------------------------------------------------------------------
# error taxonomy


@dataclass(frozen=True)
class IrregularLexicon:
    """Attested exception patterns compiled from training data."""

    vowel_changes: frozenset[tuple[str, str]]
    suppletive: tuple[tuple[tuple[int, ...], PhonemeString], ...]

    def suppletive_form(self, stem: PhonemeString) -> PhonemeString | None:
        for indices, form in self.suppletive:
            if indices == stem.indices:
                return form
        return None


EMPTY_LEXICON = IrregularLexicon(frozenset(), ())


def _last_vowel_position(x: PhonemeString, table) -> int | None:
    inv = x.inventory
    for i in range(len(x.indices) - 1, -1, -1):
        if has_value(table, inv.symbols[x.indices[i]], "+vowel"):
            return i
    return None


def _apply_vowel_change(x: PhonemeString, change, table) -> PhonemeString | None:
    src, dst = change
    inv = x.inventory
    pos = _last_vowel_position(x, table)
    if pos is None or inv.symbols[x.indices[pos]] != src:
        return None
    return PhonemeString(inv, x.indices[:pos] + (inv.index(dst),) + x.indices[pos + 1 :])


def compile_irregular_lexicon(
    pairs, table: FeatureTable | None = None
) -> IrregularLexicon:
    """Extract attested vowel changes and suppletive forms from the
    irregular past-tense items of a corpus."""
    changes = set()
    suppletive = []
    for p in pairs:
        if p.regular or p.tag != "PST":
            continue
        table = table or default_feature_table(p.lemma.inventory)
        inv = p.lemma.inventory
        pos = _last_vowel_position(p.lemma, table)
        changed = None
        if pos is not None and len(p.form.indices) == len(p.lemma.indices):
            diffs = [
                i
                for i, (a, b) in enumerate(zip(p.lemma.indices, p.form.indices))
                if a != b
            ]
            if diffs == [pos]:
                changed = (inv.symbols[p.lemma.indices[pos]], inv.symbols[p.form.indices[pos]])
        if changed is not None:
            changes.add(changed)
        else:
            suppletive.append((p.lemma.indices, p.form))
    return IrregularLexicon(frozenset(changes), tuple(suppletive))


ERROR_LABELS = ("correct", "blend", "overregularization", "overirregularization", "other")


def classify_error(
    stem,
    gold,
    predicted,
    irregular_lexicon: IrregularLexicon | None = None,
    table: FeatureTable | None = None,
) -> str:
    """Label one prediction; classes are checked in priority order
    correct > blend > overregularization > overirregularization."""
    lex = irregular_lexicon or EMPTY_LEXICON
    inv = stem.inventory if isinstance(stem, PhonemeString) else None
    stem = _as_phoneme_string(stem, inv)
    gold = _as_phoneme_string(gold, stem.inventory)
    predicted = _as_phoneme_string(predicted, stem.inventory)
    table = table or default_feature_table(stem.inventory)
    if predicted.indices == gold.indices:
        return "correct"
    regularized = regular_past(stem, table)
    irregular_bases = []
    if gold.indices != regularized.indices:
        irregular_bases.append(gold)
    for change in lex.vowel_changes:
        base = _apply_vowel_change(stem, change, table)
        if base is not None:
            irregular_bases.append(base)
    supp = lex.suppletive_form(stem)
    if supp is not None:
        irregular_bases.append(supp)
    for base in irregular_bases:
        if base.indices != stem.indices and predicted.indices == regular_past(base, table).indices:
            return "blend"
    if predicted.indices == regularized.indices:
        return "overregularization"
    if gold.indices == regularized.indices:
        for change in lex.vowel_changes:
            alt = _apply_vowel_change(stem, change, table)
            if alt is not None and predicted.indices == alt.indices:
                return "overirregularization"
    return "other"


# ---------------------------------------------------------------------------
# accuracy report


@dataclass(frozen=True)
class ErrorRecord:
    stem: str
    gold: str
    predicted: str
    regular: bool
    label: str


@dataclass(frozen=True)
class EvalReport:
    total: int
    n_regular: int
    n_irregular: int
    acc_overall: float
    acc_regular: float | None
    acc_irregular: float | None
    errors: tuple[ErrorRecord, ...]

    def __post_init__(self):
        if self.n_regular + self.n_irregular != self.total:
            raise ValueError("strata do not partition the items")


def accuracy(
    model,
    pairs,
    multitask: bool = False,
    irregular_lexicon: IrregularLexicon | None = None,
    table: FeatureTable | None = None,
) -> EvalReport:
    """Exact-match accuracy of top-ranked decodes, split by regularity."""
    pairs = list(pairs)
    from .dataset import to_examples

    X, y, flags = to_examples(pairs, multitask=multitask)
    predictions = model.predict(X)
    hits, errors = [], []
    for pair, pred, gold in zip(pairs, predictions, y):
        pred_syms = pred.symbols if isinstance(pred, PhonemeString) else tuple(pred)
        ok = pred_syms == tuple(gold)
        hits.append(ok)
        if not ok:
            try:
                pred_ps = _as_phoneme_string(pred_syms, pair.lemma.inventory)
                label = classify_error(
                    pair.lemma, pair.form, pred_ps, irregular_lexicon, table
                )
            except Exception:
                label = "other"
            errors.append(
                ErrorRecord(
                    str(pair.lemma),
                    str(pair.form),
                    "".join(pred_syms),
                    pair.regular,
                    label,
                )
            )
    hits = np.array(hits, dtype=bool)
    flags = np.array(flags, dtype=bool)

    def _acc(mask):
        return float(hits[mask].mean()) if mask.any() else None

    return EvalReport(
        total=len(pairs),
        n_regular=int(flags.sum()),
        n_irregular=int((~flags).sum()),
        acc_overall=float(hits.mean()) if len(pairs) else 0.0,
        acc_regular=_acc(flags),
        acc_irregular=_acc(~flags),
        errors=tuple(errors),
    )


# ---------------------------------------------------------------------------
# developmental trajectories


@dataclass(frozen=True)
class UShapeRecord:
    epochs: tuple[int, ...]
    correct: tuple[bool, ...]
    change_points: tuple[int, ...]
    oscillating: bool


def detect_micro_ushape(correct, epochs=None) -> UShapeRecord:
    """Change points of a per-epoch correctness trace.

    The trace oscillates (micro U-shape) when a correct production
    lapses and later recovers: some correct-to-incorrect change point is
    followed by an incorrect-to-correct one.
    """
    correct = tuple(bool(c) for c in correct)
    if len(correct) < 2:
        raise ValueError("need at least two recorded epochs")
    epochs = tuple(epochs) if epochs is not None else tuple(range(len(correct)))
    if len(epochs) != len(correct):
        raise LengthMismatch(f"{len(epochs)} epochs vs {len(correct)} statuses")
    change_points = tuple(
        epochs[i] for i in range(1, len(correct)) if correct[i] != correct[i - 1]
    )
    oscillating = False
    seen_lapse = False
    for i in range(1, len(correct)):
        if correct[i - 1] and not correct[i]:
            seen_lapse = True
        elif seen_lapse and correct[i] and not correct[i - 1]:
            oscillating = True
            break
    return UShapeRecord(epochs, correct, change_points, oscillating)


def correctness_trace(outputs, gold) -> tuple[bool, ...]:
    gold = tuple(gold)
    return tuple(tuple(o) == gold for o in outputs)


# ---------------------------------------------------------------------------
# statistics


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rho(xs, ys) -> float:
    """Rank correlation with average ranks on ties.

    Returns NaN when either argument has constant ranks.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise LengthMismatch(f"{xs.shape} vs {ys.shape}")
    if len(xs) < 3:
        raise LengthMismatch("need at least 3 paired observations")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        return float("nan")
    return float(rx @ ry) / denom


def _lower_gamma_series(a: float, x: float) -> float:
    # regularized lower incomplete gamma by series expansion
    term = 1.0 / a
    total = term
    n = a
    for _ in range(10_000):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a: float, x: float) -> float:
    # regularized upper incomplete gamma by Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gamma_survival(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if x < 0 or a <= 0:
        raise ValueError("gamma survival needs x >= 0, a > 0")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _lower_gamma_series(a, x)
    return _upper_gamma_cf(a, x)


def chi2_survival(x: float, df: int = 1) -> float:
    return gamma_survival(df / 2.0, x / 2.0)


def chi_squared_2x2(correct_a, total_a, correct_b, total_b) -> tuple[float, float]:
    """Pearson chi-squared (1 df, no continuity correction) on the
    correct/incorrect contingency table of two systems."""
    if total_a <= 0 or total_b <= 0:
        raise DegenerateTable("both systems need at least one trial")
    observed = np.array(
        [
            [correct_a, total_a - correct_a],
            [correct_b, total_b - correct_b],
        ],
        dtype=np.float64,
    )
    if (observed < 0).any():
        raise ValueError("correct counts exceed totals")
    col_sums = observed.sum(axis=0)
    row_sums = observed.sum(axis=1)
    if (col_sums == 0).any() or (row_sums == 0).any():
        raise DegenerateTable("zero marginal in contingency table")
    expected = np.outer(row_sums, col_sums) / observed.sum()
    stat = float(((observed - expected) ** 2 / expected).sum())
    return stat, chi2_survival(stat, df=1)


# ---------------------------------------------------------------------------
# nonce-word (wug) evaluation


@dataclass(frozen=True)
class WugItem:
    stem: PhonemeString
    regular_form: PhonemeString
    irregular_form: PhonemeString
    human_p_regular: float
    human_p_irregular: float

    def __post_init__(self):
        for p in (self.human_p_regular, self.human_p_irregular):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"production probability {p} out of [0, 1]")


@dataclass(frozen=True)
class WugReport:
    rho_regular: float
    rho_irregular: float
    degenerate_regular: bool
    degenerate_irregular: bool
    n: int
    rows: tuple[dict, ...]


def load_wug_tsv(path, inventory=None) -> list[WugItem]:
    from .errors import ParseError
    from .phonology import default_inventory, tokenize

    inventory = inventory or default_inventory()
    items = []
    with open(path, encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cells = line.split("\t")
            if len(cells) != 5:
                raise ParseError(row, f"expected 5 columns, got {len(cells)}")
            items.append(
                WugItem(
                    tokenize(cells[0], inventory),
                    tokenize(cells[1], inventory),
                    tokenize(cells[2], inventory),
                    float(cells[3]),
                    float(cells[4]),
                )
            )
    return items


def wug_eval(model, items, tag: str | None = None, normalize_pairs: bool = False) -> WugReport:
    """Correlate model form probabilities with human production rates.

    The model score of a form is the exponentiated sequence log
    probability; with ``normalize_pairs`` the regular/irregular scores
    of each stem are renormalised to sum to one.  Regular and irregular
    pools are correlated separately; a pool whose model scores are all
    identical has no defined rank correlation and is flagged degenerate.
    """
    items = list(items)
    if not items:
        raise EmptyDataset("no wug items")
    rows = []
    for item in items:
        stem_syms = item.stem.symbols + ((tag_token(tag),) if tag else ())
        p_reg = math.exp(model.sequence_log_prob(stem_syms, item.regular_form.symbols))
        p_irr = math.exp(model.sequence_log_prob(stem_syms, item.irregular_form.symbols))
        if normalize_pairs and p_reg + p_irr > 0:
            total = p_reg + p_irr
            p_reg, p_irr = p_reg / total, p_irr / total
        rows.append(
            {
                "stem": str(item.stem),
                "regular_form": str(item.regular_form),
                "irregular_form": str(item.irregular_form),
                "model_p_regular": p_reg,
                "model_p_irregular": p_irr,
                "human_p_regular": item.human_p_regular,
                "human_p_irregular": item.human_p_irregular,
            }
        )

    def _pool(model_key, human_key):
        mvals = np.array([r[model_key] for r in rows])
        hvals = np.array([r[human_key] for r in rows])
        rho = spearman_rho(mvals, hvals)
        return rho, bool(math.isnan(rho))

    rho_reg, degen_reg = _pool("model_p_regular", "human_p_regular")
    rho_irr, degen_irr = _pool("model_p_irregular", "human_p_irregular")
    return WugReport(rho_reg, rho_irr, degen_reg, degen_irr, len(items), tuple(rows))


# ---------------------------------------------------------------------------
# learning curves


def learning_curves(runs: dict[str, list[dict]]) -> list[dict]:
    """Flatten per-condition training histories into tidy rows."""
    if not runs or all(not h for h in runs.values()):
        raise EmptyDataset("no training history to summarise")
    rows = []
    for condition, history in runs.items():
        for entry in history:
            row = {"condition": condition, "epoch": entry["epoch"]}
            for key in ("nll", "train_acc", "train_acc_regular", "train_acc_irregular"):
                if key in entry:
                    row[key] = entry[key]
            rows.append(row)
    return rows


def write_curves_csv(path, rows) -> None:
    fields = ["condition", "epoch", "nll", "train_acc", "train_acc_regular", "train_acc_irregular"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def epochs_to_accuracy(history, threshold, key="train_acc") -> int | None:
    """First epoch whose recorded accuracy reaches the threshold."""
    for entry in history:
        if entry.get(key) is not None and entry.get(key, 0.0) >= threshold:
            return entry["epoch"]
    return None


# ---------------------------------------------------------------------------
# published reference points used for comparison tables

REFERENCE_ACCURACY = {
    "single_task": {
        "all": {"train": 99.8, "dev": 97.4, "test": 95.1},
        "regular": {"train": 99.9, "dev": 99.2, "test": 98.9},
        "irregular": {"train": 97.6, "dev": 53.3, "test": 28.6},
    },
    "multi_task": {
        "all": {"train": 100.0, "dev": 96.9, "test": 95.1},
        "regular": {"train": 100.0, "dev": 99.5, "test": 99.7},
        "irregular": {"train": 99.2, "dev": 33.3, "test": 28.6},
    },
    "mgl": {
        "all": {"train": 96.0, "dev": 96.0, "test": 94.5},
        "regular": {"train": 99.9, "dev": 100.0, "test": 100.0},
        "irregular": {"train": 0.0, "dev": 0.0, "test": 0.0},
    },
}

WUG_REFERENCE = {
    "network": {"regular": 0.48, "irregular": 0.45},
    "mgl": {"regular": 0.35, "irregular": 0.36},
    "pool_sizes": {"regular": 58, "irregular": 74},
}
