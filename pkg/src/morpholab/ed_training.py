"""Minibatch training and the estimator facade for the encoder-decoder.

Batches are grouped by input length so every sequence in a batch shares
one encoder unrolling; target padding is masked out of the loss.  The
objective is mean negative log likelihood per target symbol, minimised
with Adadelta.  Per-epoch training accuracy (greedy decode) is recorded
for learning-curve analysis, and optional per-epoch output snapshots
feed the oscillation detector.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .ed_model import EOS, DecodeResult, EDModel, Vocabulary
from .errors import EmptyDataset
from .optim import Adadelta
from .phonology import PhonemeString, tokenize
from .seeding import rng_for
from .tensor import Tape


def _as_symbols(item, inventory=None) -> tuple[str, ...]:
    if isinstance(item, PhonemeString):
        return item.symbols
    if isinstance(item, str):
        if inventory is None:
            raise ValueError("raw IPA input requires an inventory")
        return tokenize(item, inventory).symbols
    return tuple(item)


def _looks_like_tag(symbol: str) -> bool:
    return symbol.startswith("<") and symbol.endswith(">")


def build_vocabulary(inputs, outputs, inventory=None) -> Vocabulary:
    """Vocabulary from an inventory (preferred) or the observed symbols."""
    observed = {s for seq in inputs for s in seq} | {
        s for seq in outputs for s in seq
    }
    tags = tuple(sorted(s for s in observed if _looks_like_tag(s)))
    if inventory is not None:
        phonemes = tuple(inventory.symbols)
        stray = observed - set(phonemes) - set(tags)
        if stray:
            raise ValueError(f"symbols outside the inventory: {sorted(stray)}")
    else:
        phonemes = tuple(sorted(observed - set(tags)))
    return Vocabulary(phonemes, tags)


def batch_indices(lengths, batch_size, rng) -> list[np.ndarray]:
    """Shuffled batches of example indices, uniform input length each."""
    perm = rng.permutation(len(lengths))
    groups: dict[int, list[int]] = {}
    for i in perm:
        groups.setdefault(int(lengths[i]), []).append(int(i))
    batches = []
    for length in sorted(groups):
        members = groups[length]
        for start in range(0, len(members), batch_size):
            batches.append(np.array(members[start : start + batch_size]))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def greedy_decode_batch(model: EDModel, input_id_rows, max_len=None) -> list[DecodeResult]:
    """Greedy-decode many inputs at once, grouped by input length."""
    from . import tensor as T
    from .ed_model import MAX_LEN_MARGIN
    from .tensor import Tensor

    results: list[DecodeResult | None] = [None] * len(input_id_rows)
    groups: dict[int, list[int]] = {}
    for i, ids in enumerate(input_id_rows):
        groups.setdefault(len(ids), []).append(i)
    eos = model.vocab.eos_id
    for length in sorted(groups):
        members = groups[length]
        ids = np.stack([input_id_rows[i] for i in members])
        cap = length + MAX_LEN_MARGIN if max_len is None else max_len
        contexts, states = model.encode_ids(ids)
        projected = model._project_contexts(contexts)
        n = len(members)
        prev = np.full(n, model.vocab.bos_id, dtype=np.intp)
        done = np.zeros(n, dtype=bool)
        out = [[] for _ in range(n)]
        lp = np.zeros(n)
        for _ in range(cap):
            logits, states, _ = model._decode_step(prev, states, contexts, projected)
            step_lp = T.log_softmax(logits).data
            choices = np.argmax(step_lp, axis=1)
            for r in range(n):
                if done[r]:
                    continue
                lp[r] += step_lp[r, choices[r]]
                if choices[r] == eos:
                    done[r] = True
                else:
                    out[r].append(int(choices[r]))
            if done.all():
                break
            prev = choices.astype(np.intp)
        for r, i in enumerate(members):
            results[i] = DecodeResult(
                model.vocab.decode(out[r]), float(lp[r]), truncated=not done[r]
            )
    return results


class EncoderDecoder(BaseEstimator):
    """Sequence-to-sequence estimator over symbol tuples.

    ``fit`` takes parallel sequences of input symbols (phonemes plus an
    optional trailing transduction tag) and output symbols; ``predict``
    returns beam-decoded output tuples.

    Parameters mirror the experiment defaults: 300-unit embeddings,
    two-layer bidirectional encoder and two-layer decoder with 100
    hidden units each, inter-layer dropout 0.3, Adadelta at rate 1.0,
    minibatches of 20, 100 epochs, beam width 12.
    """

    def __init__(
        self,
        inventory=None,
        vocabulary=None,
        emb_dim=300,
        hidden_dim=100,
        num_layers=2,
        dropout=0.3,
        epochs=100,
        batch_size=20,
        lr=1.0,
        rho=0.95,
        eps=1e-6,
        beam_width=12,
        dtype="float64",
        seed=0,
        eval_every=1,
        eval_sample=None,
    ):
        self.inventory = inventory
        self.vocabulary = vocabulary
        self.emb_dim = emb_dim
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.beam_width = beam_width
        self.dtype = dtype
        self.seed = seed
        self.eval_every = eval_every
        self.eval_sample = eval_sample

    # -- helpers -----------------------------------------------------------

    def _encode_examples(self, X, y):
        inputs = [_as_symbols(item, self.inventory) for item in X]
        outputs = [_as_symbols(item, self.inventory) for item in y]
        vocab = self.vocabulary or build_vocabulary(inputs, outputs, self.inventory)
        in_ids = [vocab.encode(seq) for seq in inputs]
        out_ids = [
            np.append(vocab.encode(seq), vocab.eos_id).astype(np.intp)
            for seq in outputs
        ]
        return vocab, inputs, outputs, in_ids, out_ids

    def _padded_targets(self, out_rows):
        width = max(len(r) for r in out_rows)
        pad = 0
        ids = np.full((len(out_rows), width), pad, dtype=np.intp)
        mask = np.zeros((len(out_rows), width))
        for r, row in enumerate(out_rows):
            ids[r, : len(row)] = row
            mask[r, : len(row)] = 1.0
        return ids, mask

    def _batch_nll(self, model, in_rows, out_rows, training, rng):
        ids = np.stack(in_rows)
        out_ids, mask = self._padded_targets(out_rows)
        total_lp = model.forced_log_prob(
            ids, out_ids, mask=mask, training=training, rng=rng
        )
        return total_lp, mask.sum()

    def _dataset_nll(self, model, in_ids, out_ids, batches) -> float:
        total, symbols = 0.0, 0.0
        for batch in batches:
            lp, n = self._batch_nll(
                model,
                [in_ids[i] for i in batch],
                [out_ids[i] for i in batch],
                training=False,
                rng=None,
            )
            total += float(lp.data)
            symbols += n
        return -total / symbols

    def _train_accuracy(self, model, in_ids, out_ids, indices, regular):
        decoded = greedy_decode_batch(model, [in_ids[i] for i in indices])
        gold = [model.vocab.decode(out_ids[i][:-1]) for i in indices]
        hits = np.array([d.symbols == g for d, g in zip(decoded, gold)])
        entry = {"train_acc": float(hits.mean())}
        if regular is not None:
            flags = np.array([bool(regular[i]) for i in indices])
            for label, sel in (("regular", flags), ("irregular", ~flags)):
                if sel.any():
                    entry[f"train_acc_{label}"] = float(hits[sel].mean())
        return entry

    # -- sklearn face --------------------------------------------------------

    def fit(
        self,
        X,
        y,
        regular=None,
        epoch_callback=None,
        snapshot_every=0,
        snapshot_inputs=None,
    ):
        """Train the network; see the class docstring for the protocol.

        ``regular`` optionally flags each item for stratified curve
        metrics.  ``epoch_callback(estimator, epoch, entry)`` may return
        a truthy value to stop early.  With ``snapshot_every`` > 0,
        greedy outputs for ``snapshot_inputs`` are recorded every N
        epochs for developmental-trajectory analysis.
        """
        X, y = list(X), list(y)
        if not X or len(X) != len(y):
            raise EmptyDataset(f"got {len(X)} inputs and {len(y)} outputs")
        vocab, inputs, outputs, in_ids, out_ids = self._encode_examples(X, y)
        self.vocab_ = vocab
        dtype = np.dtype(self.dtype)
        self.model_ = EDModel.create(
            vocab,
            emb_dim=self.emb_dim,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            dropout=self.dropout,
            seed=self.seed,
            dtype=dtype,
        )
        optimizer = Adadelta(self.model_.params, rho=self.rho, eps=self.eps, lr=self.lr)
        lengths = [len(r) for r in in_ids]
        eval_rng = rng_for(self.seed, "ed-evalsample")
        if self.eval_sample is not None and self.eval_sample < len(X):
            eval_idx = np.sort(
                eval_rng.choice(len(X), size=self.eval_sample, replace=False)
            )
        else:
            eval_idx = np.arange(len(X))
        snapshot_rows = None
        if snapshot_every and snapshot_inputs is not None:
            snapshot_rows = [
                vocab.encode(_as_symbols(item, self.inventory))
                for item in snapshot_inputs
            ]
        self.history_ = []
        self.snapshots_ = []

        init_batches = batch_indices(lengths, self.batch_size, rng_for(self.seed, "ed-eval0"))
        self.history_.append(
            {"epoch": 0, "nll": self._dataset_nll(self.model_, in_ids, out_ids, init_batches)}
        )

        for epoch in range(1, int(self.epochs) + 1):
            order_rng = rng_for(self.seed, "ed-order", str(epoch))
            drop_rng = rng_for(self.seed, "ed-dropout", str(epoch))
            running, symbols = 0.0, 0.0
            for batch in batch_indices(lengths, self.batch_size, order_rng):
                with Tape() as tape:
                    total_lp, n_sym = self._batch_nll(
                        self.model_,
                        [in_ids[i] for i in batch],
                        [out_ids[i] for i in batch],
                        training=True,
                        rng=drop_rng,
                    )
                    from . import tensor as T

                    loss = T.scale(total_lp, -1.0 / n_sym)
                    optimizer.zero_grad()
                    tape.backward(loss)
                optimizer.step()
                running += -float(total_lp.data)
                symbols += n_sym
            entry = {"epoch": epoch, "nll": running / symbols}
            if self.eval_every and (epoch % self.eval_every == 0 or epoch == int(self.epochs)):
                entry.update(
                    self._train_accuracy(self.model_, in_ids, out_ids, eval_idx, regular)
                )
            self.history_.append(entry)
            if snapshot_rows is not None and epoch % snapshot_every == 0:
                decoded = greedy_decode_batch(self.model_, snapshot_rows)
                self.snapshots_.append(
                    {"epoch": epoch, "outputs": [d.symbols for d in decoded]}
                )
            if epoch_callback is not None and epoch_callback(self, epoch, entry):
                break
        self.n_epochs_run_ = self.history_[-1]["epoch"]
        return self

    def predict(self, X) -> list[tuple[str, ...]]:
        """Beam top-1 output symbols for each input."""
        return [r.symbols for r in self.decode(X)]

    def decode(self, X) -> list[DecodeResult]:
        out = []
        for item in X:
            symbols = _as_symbols(item, self.inventory)
            if self.beam_width == 1:
                out.append(self.model_.greedy_decode(symbols))
            else:
                out.append(self.model_.beam_search(symbols, k=self.beam_width)[0])
        return out

    def predict_greedy(self, X) -> list[DecodeResult]:
        rows = [self.vocab_.encode(_as_symbols(item, self.inventory)) for item in X]
        return greedy_decode_batch(self.model_, rows)

    def score(self, X, y) -> float:
        """Exact-match accuracy of beam top-1 outputs."""
        gold = [_as_symbols(item, self.inventory) for item in y]
        return float(
            np.mean([p == g for p, g in zip(self.predict(X), gold)])
        )

    def sequence_log_prob(self, x, y) -> float:
        return self.model_.sequence_log_prob(
            _as_symbols(x, self.inventory), _as_symbols(y, self.inventory)
        )

    def sample(self, x, seed=0, max_len=None) -> DecodeResult:
        return self.model_.sample(_as_symbols(x, self.inventory), seed=seed, max_len=max_len)

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        hyper = {
            k: v
            for k, v in self.get_params().items()
            if isinstance(v, (int, float, str, type(None)))
        }
        self.model_.save(path, extra_meta={"estimator": hyper})

    @classmethod
    def load(cls, path) -> "EncoderDecoder":
        model = EDModel.load(path)
        est = cls(
            emb_dim=model.emb_dim,
            hidden_dim=model.hidden_dim,
            num_layers=model.num_layers,
            dropout=model.dropout,
            dtype=np.dtype(model.dtype).name,
        )
        est.model_ = model
        est.vocab_ = model.vocab
        est.history_ = []
        est.snapshots_ = []
        return est
