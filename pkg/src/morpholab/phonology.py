"""Phoneme inventories, feature tables, and trigram feature encodings.

A word is segmented into inventory phonemes, padded with a word-edge
symbol, and read off as overlapping phoneme trigrams.  Each trigram is
expanded into triples of phonological feature values, one value per
position, and a word is represented by the set of triples any of its
trigrams activates: a ±1 vector over the enumerated triple space.  The
encoding is deliberately lossy (reduplicated strings can collide) which
is exactly the behaviour the associator experiments probe.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from importlib import resources
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import UnknownSymbol

#: Index used for the word-edge pseudo-phoneme inside trigrams.
BOUNDARY = -1


@dataclass(frozen=True)
class PhonemeInventory:
    """Ordered set of phoneme symbols plus the word-edge symbol."""

    symbols: tuple[str, ...]
    boundary: str = "#"

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("inventory symbols must be unique")
        if any(not s for s in self.symbols):
            raise ValueError("inventory symbols must be non-empty")
        if self.boundary in self.symbols:
            raise ValueError("boundary symbol may not be an inventory phoneme")

    @cached_property
    def _index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.symbols)}

    @cached_property
    def _max_symbol_len(self) -> int:
        return max(len(s) for s in self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownSymbol(symbol, 0) from None

    def symbol(self, index: int) -> str:
        return self.boundary if index == BOUNDARY else self.symbols[index]

    @classmethod
    def load(cls, path) -> "PhonemeInventory":
        with open(path, encoding="utf-8") as fh:
            symbols = tuple(line.strip() for line in fh if line.strip())
        return cls(symbols)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.symbols) + "\n")


@dataclass(frozen=True)
class PhonemeString:
    """A word as a sequence of inventory indices, edge symbols implicit."""

    inventory: PhonemeInventory
    indices: tuple[int, ...]

    def __post_init__(self):
        if len(self.indices) < 1:
            raise ValueError("phoneme string must contain at least one phoneme")
        n = len(self.inventory)
        if any(i < 0 or i >= n for i in self.indices):
            raise ValueError("phoneme index out of range")

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(self.inventory.symbols[i] for i in self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __str__(self) -> str:
        return "".join(self.symbols)

    @classmethod
    def from_symbols(
        cls, symbols: Iterable[str], inventory: PhonemeInventory
    ) -> "PhonemeString":
        return cls(inventory, tuple(inventory.index(s) for s in symbols))


def tokenize(raw: str, inventory: PhonemeInventory) -> PhonemeString:
    """Segment IPA text into inventory phonemes, longest match first.

    Raises :class:`UnknownSymbol` with the offending substring and its
    offset when no inventory symbol matches at some position.
    """
    indices = []
    pos = 0
    max_len = inventory._max_symbol_len
    while pos < len(raw):
        for width in range(min(max_len, len(raw) - pos), 0, -1):
            candidate = raw[pos : pos + width]
            if candidate in inventory:
                indices.append(inventory.index(candidate))
                pos += width
                break
        else:
            raise UnknownSymbol(raw[pos], pos, context=raw)
    if not indices:
        raise UnknownSymbol("", 0, context=raw)
    return PhonemeString(inventory, tuple(indices))


class Wickelphone(NamedTuple):
    """A phoneme trigram; ``BOUNDARY`` marks the word edge."""

    left: int
    center: int
    right: int


def phoneme_trigrams(x: PhonemeString) -> frozenset[Wickelphone]:
    """All distinct boundary-padded trigrams of a phoneme string.

    A string of n phonemes has exactly n trigram positions; the result is
    the deduplicated set, so repeated substrings collapse.
    """
    padded = (BOUNDARY,) + x.indices + (BOUNDARY,)
    return frozenset(
        Wickelphone(padded[i], padded[i + 1], padded[i + 2])
        for i in range(len(x))
    )


@dataclass(frozen=True)
class FeatureTable:
    """Ternary phonological feature values for one inventory.

    ``values`` maps each phoneme symbol (and the boundary symbol) to a
    row of {+1, -1, 0}; zeros mean the feature is not specified for that
    segment and never fires.  The attested non-zero (feature, sign) pairs
    form the per-slot value set whose cube enumerates the trigram feature
    space.
    """

    inventory: PhonemeInventory
    feature_names: tuple[str, ...]
    values: Mapping[str, tuple[int, ...]] = field(repr=False)

    def __post_init__(self):
        width = len(self.feature_names)
        required = set(self.inventory.symbols) | {self.inventory.boundary}
        missing = required - set(self.values)
        if missing:
            raise ValueError(f"feature table missing rows: {sorted(missing)}")
        for symbol, row in self.values.items():
            if len(row) != width:
                raise ValueError(
                    f"feature row for {symbol!r} has {len(row)} values, "
                    f"expected {width}"
                )
            if any(v not in (-1, 0, 1) for v in row):
                raise ValueError(f"feature row for {symbol!r} not ternary")

    @cached_property
    def slot_values(self) -> tuple[tuple[int, int], ...]:
        """Attested (feature index, sign) pairs, in enumeration order."""
        attested = set()
        for row in self.values.values():
            for fi, v in enumerate(row):
                if v != 0:
                    attested.add((fi, v))
        return tuple(sorted(attested, key=lambda p: (p[0], -p[1])))

    @cached_property
    def _slot_index(self) -> dict[tuple[int, int], int]:
        return {pair: i for i, pair in enumerate(self.slot_values)}

    @property
    def space_size(self) -> int:
        """Size of the enumerated feature-triple space, |slot values|³."""
        return len(self.slot_values) ** 3

    @cached_property
    def _value_ids_by_symbol(self) -> dict[str, tuple[int, ...]]:
        out = {}
        for symbol, row in self.values.items():
            ids = [
                self._slot_index[(fi, v)]
                for fi, v in enumerate(row)
                if v != 0
            ]
            out[symbol] = tuple(ids)
        return out

    def value_ids(self, phoneme_index: int) -> tuple[int, ...]:
        """Slot-value ids activated by one phoneme (or the boundary)."""
        symbol = self.inventory.symbol(phoneme_index)
        return self._value_ids_by_symbol[symbol]

    def triple_id(self, left: int, center: int, right: int) -> int:
        k = len(self.slot_values)
        return (left * k + center) * k + right

    def triple_from_id(self, triple: int) -> tuple[int, int, int]:
        k = len(self.slot_values)
        left, rest = divmod(triple, k * k)
        center, right = divmod(rest, k)
        return left, center, right

    def describe_value(self, slot_id: int) -> str:
        fi, sign = self.slot_values[slot_id]
        return ("+" if sign > 0 else "-") + self.feature_names[fi]

    @classmethod
    def load(cls, path, inventory: PhonemeInventory) -> "FeatureTable":
        signs = {"+": 1, "-": -1, "0": 0}
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            names = tuple(header[1:])
            values = {}
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                cells = line.split("\t")
                values[cells[0]] = tuple(signs[c] for c in cells[1:])
        return cls(inventory, names, values)

    def save(self, path) -> None:
        signs = {1: "+", -1: "-", 0: "0"}
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("phoneme\t" + "\t".join(self.feature_names) + "\n")
            order = list(self.inventory.symbols) + [self.inventory.boundary]
            for symbol in order:
                row = "\t".join(signs[v] for v in self.values[symbol])
                fh.write(f"{symbol}\t{row}\n")


def trigram_feature_ids(
    wp: Wickelphone, table: FeatureTable
) -> Iterable[int]:
    """Feature-triple ids activated by one trigram (full cross product)."""
    lefts = table.value_ids(wp.left)
    centers = table.value_ids(wp.center)
    rights = table.value_ids(wp.right)
    for a, b, c in itertools.product(lefts, centers, rights):
        yield table.triple_id(a, b, c)


def trigram_features(
    wps: Iterable[Wickelphone], table: FeatureTable
) -> np.ndarray:
    """±1 vector over the triple space; +1 iff some trigram activates it."""
    bits = np.full(table.space_size, -1, dtype=np.int8)
    for wp in wps:
        for tid in trigram_feature_ids(wp, table):
            bits[tid] = 1
    return bits


def encode_string(x: PhonemeString, table: FeatureTable) -> np.ndarray:
    """Trigram feature vector of a whole string (pad, read, expand)."""
    return trigram_features(phoneme_trigrams(x), table)


def _as_phoneme_string(item, inventory: PhonemeInventory) -> PhonemeString:
    if isinstance(item, PhonemeString):
        return item
    if isinstance(item, str):
        return tokenize(item, inventory)
    return PhonemeString.from_symbols(item, inventory)


class WickelfeatureEncoder(BaseEstimator, TransformerMixin):
    """Transformer from IPA strings to ±1 trigram feature vectors.

    Stateless apart from the inventory and feature table; ``fit`` exists
    for pipeline compatibility.
    """

    def __init__(self, inventory=None, feature_table=None):
        self.inventory = inventory
        self.feature_table = feature_table

    def fit(self, X=None, y=None):
        self.inventory_ = self.inventory or default_inventory()
        self.feature_table_ = self.feature_table or default_feature_table(
            self.inventory_
        )
        self.n_features_out_ = self.feature_table_.space_size
        return self

    def transform(self, X):
        if not hasattr(self, "feature_table_"):
            self.fit()
        rows = [
            encode_string(
                _as_phoneme_string(item, self.inventory_), self.feature_table_
            )
            for item in X
        ]
        return np.stack(rows) if rows else np.empty((0, self.n_features_out_), np.int8)


@lru_cache(maxsize=1)
def default_inventory() -> PhonemeInventory:
    """General American IPA inventory bundled with the package."""
    ref = resources.files("morpholab.data") / "inventory.txt"
    with resources.as_file(ref) as path:
        return PhonemeInventory.load(path)


@lru_cache(maxsize=4)
def default_feature_table(inventory: PhonemeInventory | None = None) -> FeatureTable:
    """Bundled 16-feature table covering the default inventory."""
    inventory = inventory or default_inventory()
    ref = resources.files("morpholab.data") / "features.tsv"
    with resources.as_file(ref) as path:
        return FeatureTable.load(path, inventory)


def feature_value_set(table: FeatureTable, symbol: str) -> frozenset[str]:
    """Human-readable non-zero feature values of one segment."""
    row = table.values[symbol]
    return frozenset(
        ("+" if v > 0 else "-") + name
        for name, v in zip(table.feature_names, row)
        if v != 0
    )


def has_value(table: FeatureTable, symbol: str, value: str) -> bool:
    """True if the segment carries the given signed feature, e.g. '+voiced'."""
    return value in feature_value_set(table, symbol)
