"""Linear pattern associator over trigram feature vectors.

A single weight matrix and bias map the ±1 feature encoding of a stem to
scores over the same feature space.  Training is the perceptron rule
applied independently per output feature: coordinates whose sign-hinge
loss is positive move by lr * target * input.  Decoding thresholds the
scores to a ±1 vector and returns the candidate string whose encoding
differs from it in the fewest coordinates.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DimensionMismatch, EmptyCandidates
from .phonology import (
    FeatureTable,
    PhonemeInventory,
    PhonemeString,
    _as_phoneme_string,
    default_feature_table,
    default_inventory,
    encode_string,
    has_value,
)
from .seeding import rng_for


def final_rime(x: PhonemeString, table: FeatureTable) -> tuple[int, ...]:
    """Indices from the last vowel to the end; empty if no vowel."""
    for i in range(len(x.indices) - 1, -1, -1):
        symbol = x.inventory.symbols[x.indices[i]]
        if has_value(table, symbol, "+vowel"):
            return x.indices[i:]
    return ()


def generate_candidates(
    x: PhonemeString,
    irregular_pairs=(),
    table: FeatureTable | None = None,
) -> list[PhonemeString]:
    """Deterministic candidate outputs for one stem.

    The set is the stem itself, its three regular suffixations, and an
    analog for every training irregular whose stem ends in the same rime
    (the stem's pre-rime prefix glued to the irregular output's rime).
    """
    inv = x.inventory
    table = table or default_feature_table(inv)
    d, t, ih = inv.index("d"), inv.index("t"), inv.index("ɪ")
    out = [
        x,
        PhonemeString(inv, x.indices + (d,)),
        PhonemeString(inv, x.indices + (t,)),
        PhonemeString(inv, x.indices + (ih, d)),
    ]
    rime = final_rime(x, table)
    if rime:
        prefix = x.indices[: len(x.indices) - len(rime)]
        for stem, form in irregular_pairs:
            if final_rime(stem, table) != rime:
                continue
            form_rime = final_rime(form, table)
            if form_rime:
                out.append(PhonemeString(inv, prefix + form_rime))
            else:
                out.append(form)
    seen = set()
    unique = []
    for cand in out:
        if cand.indices not in seen:
            seen.add(cand.indices)
            unique.append(cand)
    return unique


class PatternAssociator(BaseEstimator):
    """Perceptron-trained linear associator with candidate-list decoding.

    Accepts either raw ±1 feature matrices (rows are items) or IPA
    strings / :class:`PhonemeString` sequences, which are encoded with
    the configured feature table.

    Parameters
    ----------
    lr : base learning rate of the perceptron updates.
    decay : per-epoch hyperbolic decay; the epoch-e rate is
        lr / (1 + decay * (e - 1)).
    epochs : maximum training sweeps; training stops early once an epoch
        incurs zero loss.
    init_scale : half-width of the uniform parameter initialisation;
        zero starts from the all-zero model.
    """

    def __init__(
        self,
        inventory=None,
        feature_table=None,
        lr=1.0,
        decay=0.0,
        epochs=10,
        init_scale=0.01,
        seed=0,
    ):
        self.inventory = inventory
        self.feature_table = feature_table
        self.lr = lr
        self.decay = decay
        self.epochs = epochs
        self.init_scale = init_scale
        self.seed = seed

    # -- construction ------------------------------------------------

    def _resolve_phonology(self) -> tuple[PhonemeInventory, FeatureTable]:
        inv = self.inventory or default_inventory()
        table = self.feature_table or default_feature_table(inv)
        return inv, table

    def initialize(self, n_features: int) -> "PatternAssociator":
        """Allocate weights for a given feature-space size."""
        rng = rng_for(self.seed, "rm-init")
        s = float(self.init_scale)
        if s > 0:
            self.W_ = rng.uniform(-s, s, size=(n_features, n_features))
            self.b_ = rng.uniform(-s, s, size=n_features)
        else:
            self.W_ = np.zeros((n_features, n_features))
            self.b_ = np.zeros(n_features)
        self.n_features_ = n_features
        return self

    def _check_vector(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64).ravel()
        if v.shape[0] != self.n_features_:
            raise DimensionMismatch(
                f"expected {self.n_features_} features, got {v.shape[0]}"
            )
        return v

    # -- core operations ----------------------------------------------

    def scores(self, x_vec) -> np.ndarray:
        x = self._check_vector(x_vec)
        return self.W_ @ x + self.b_

    def loss_item(self, x_vec, y_vec) -> float:
        """Sum over coordinates of max(0, -target * score)."""
        y = self._check_vector(y_vec)
        s = self.scores(x_vec)
        return float(np.maximum(0.0, -y * s).sum())

    def train_step(self, x_vec, y_vec, lr=None) -> float:
        """Perceptron update on coordinates with positive loss.

        Returns the pre-update loss of the item.
        """
        x = self._check_vector(x_vec)
        y = self._check_vector(y_vec)
        lr = self.lr if lr is None else lr
        s = self.W_ @ x + self.b_
        margin = y * s
        viol = margin < 0.0
        loss = float(-margin[viol].sum())
        if viol.any():
            self.W_[viol] += lr * np.outer(y[viol], x)
            self.b_[viol] += lr * y[viol]
        return loss

    def predict_features(self, x_vec) -> np.ndarray:
        """Threshold scores to ±1; zero counts as -1."""
        s = self.scores(x_vec)
        return np.where(s > 0.0, 1, -1).astype(np.int8)

    def decode(self, x, candidates) -> PhonemeString:
        """Candidate whose encoding is nearest the thresholded output.

        Distance is the number of differing coordinates; ties keep the
        earliest candidate.
        """
        candidates = list(candidates)
        if not candidates:
            raise EmptyCandidates("no candidate forms supplied")
        inv, table = self._resolve_phonology()
        x = _as_phoneme_string(x, inv)
        target = self.predict_features(encode_string(x, table))
        best, best_dist = None, None
        for cand in candidates:
            cand = _as_phoneme_string(cand, inv)
            dist = int((encode_string(cand, table) != target).sum())
            if best_dist is None or dist < best_dist:
                best, best_dist = cand, dist
        return best

    # -- sklearn face --------------------------------------------------

    def fit(self, X, y, regular=None):
        """Train on (stem, target) items.

        ``X`` and ``y`` are either ±1 matrices of matching shape or
        sequences of IPA strings / phoneme strings.  ``regular`` may
        flag each item; irregular items seed the candidate generator
        used by :meth:`predict`.
        """
        if isinstance(X, np.ndarray) and X.ndim == 2:
            X_vecs = np.asarray(X, dtype=np.float64)
            Y_vecs = np.asarray(y, dtype=np.float64)
            self.irregular_pairs_ = []
        else:
            inv, table = self._resolve_phonology()
            stems = [_as_phoneme_string(item, inv) for item in X]
            forms = [_as_phoneme_string(item, inv) for item in y]
            X_vecs = np.stack([encode_string(s, table) for s in stems]).astype(np.float64)
            Y_vecs = np.stack([encode_string(s, table) for s in forms]).astype(np.float64)
            flags = list(regular) if regular is not None else [True] * len(stems)
            self.irregular_pairs_ = [
                (s, f) for s, f, r in zip(stems, forms, flags) if not r
            ]
        if X_vecs.shape != Y_vecs.shape:
            raise DimensionMismatch(
                f"stem matrix {X_vecs.shape} vs target matrix {Y_vecs.shape}"
            )
        self.initialize(X_vecs.shape[1])
        order_rng = rng_for(self.seed, "rm-order")
        self.history_ = []
        for epoch in range(1, int(self.epochs) + 1):
            lr = self.lr / (1.0 + self.decay * (epoch - 1))
            order = order_rng.permutation(len(X_vecs))
            total = 0.0
            for i in order:
                total += self.train_step(X_vecs[i], Y_vecs[i], lr=lr)
            self.history_.append({"epoch": epoch, "loss": total, "lr": lr})
            if total == 0.0:
                break
        return self

    def predict(self, X) -> list[PhonemeString]:
        inv, table = self._resolve_phonology()
        out = []
        for item in X:
            x = _as_phoneme_string(item, inv)
            cands = generate_candidates(
                x, getattr(self, "irregular_pairs_", []), table
            )
            out.append(self.decode(x, cands))
        return out

    def total_loss(self, X_vecs, Y_vecs) -> float:
        return float(
            sum(self.loss_item(x, y) for x, y in zip(X_vecs, Y_vecs))
        )
