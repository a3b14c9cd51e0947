"""Attention encoder-decoder over phoneme sequences.

A stacked bidirectional LSTM reads the (optionally tagged) input string;
a stacked unidirectional LSTM emits the output string one symbol at a
time, attending over all encoder states with an additive scorer.  The
per-step output network is a one-hidden-layer perceptron over the
previous symbol's embedding, the decoder state, and the attention
context, normalised to a distribution over the full vocabulary, so any
finite string can be scored exactly or sampled in one left-to-right
pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import tensor as T
from .checkpoint import load_tensors, save_tensors
from .errors import CheckpointError, EmptyContext, UnknownSymbol
from .seeding import rng_for
from .tensor import Tensor

PAD = "<pad>"
BOS = "<s>"
EOS = "</s>"

#: Decode-length slack added to the input length when no cap is given.
MAX_LEN_MARGIN = 8


@dataclass(frozen=True)
class Vocabulary:
    """Symbol table: specials, then phonemes, then transduction tags."""

    phonemes: tuple[str, ...]
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        overlap = set(self.phonemes) & set(self.tags)
        if overlap:
            raise ValueError(f"tags overlap phonemes: {sorted(overlap)}")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")

    @property
    def symbols(self) -> tuple[str, ...]:
        return (PAD, BOS, EOS) + self.phonemes + self.tags

    @cached_property
    def _index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.symbols)}

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def bos_id(self) -> int:
        return 1

    @property
    def eos_id(self) -> int:
        return 2

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownSymbol(symbol, 0) from None

    def encode(self, symbols) -> np.ndarray:
        return np.array([self.index(s) for s in symbols], dtype=np.intp)

    def decode(self, ids) -> tuple[str, ...]:
        return tuple(self.symbols[i] for i in ids)


@dataclass
class DecodeResult:
    symbols: tuple[str, ...]
    log_prob: float
    truncated: bool = False


class EDModel:
    """Parameters and computation of the encoder-decoder network."""

    def __init__(self, vocab, emb_dim, hidden_dim, num_layers, dropout, params, dtype):
        self.vocab = vocab
        self.emb_dim = emb_dim
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.dropout = dropout
        self.params = params
        self.dtype = dtype

    # -- construction ---------------------------------------------------

    @classmethod
    def create(
        cls,
        vocab: Vocabulary,
        emb_dim: int = 300,
        hidden_dim: int = 100,
        num_layers: int = 2,
        dropout: float = 0.3,
        seed: int = 0,
        dtype=np.float64,
    ) -> "EDModel":
        rng = rng_for(seed, "ed-init")
        V, E, H = len(vocab), emb_dim, hidden_dim
        p: dict[str, Tensor] = {}

        def par(name, fan_in, fan_out, shape=None):
            p[name] = T.parameter(T.glorot(rng, fan_in, fan_out, shape, dtype))

        def zeros(name, shape):
            p[name] = T.parameter(np.zeros(shape, dtype=dtype))

        par("emb", V, E)
        for layer in range(num_layers):
            in_dim = E if layer == 0 else 2 * H
            for d in ("f", "b"):
                par(f"enc{layer}{d}.w", in_dim + H, 4 * H)
                zeros(f"enc{layer}{d}.b", (4 * H,))
            par(f"bridge{layer}.w", 2 * H, H)
            zeros(f"bridge{layer}.b", (H,))
        for layer in range(num_layers):
            in_dim = E + 2 * H if layer == 0 else H
            par(f"dec{layer}.w", in_dim + H, 4 * H)
            zeros(f"dec{layer}.b", (4 * H,))
        par("att.ws", H, H)
        par("att.uh", 2 * H, H)
        zeros("att.b", (H,))
        par("att.v", H, 1)
        par("out.w1", E + 3 * H, H)
        zeros("out.b1", (H,))
        par("out.w2", H, V)
        zeros("out.b2", (V,))
        return cls(vocab, E, H, num_layers, dropout, p, dtype)

    def _zeros(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.hidden_dim), dtype=self.dtype))

    # -- recurrent cells --------------------------------------------------

    def _lstm_step(self, x, h, c, w, b):
        H = self.hidden_dim
        z = T.add(T.matmul(T.concat([x, h], axis=1), w), b)
        i = T.sigmoid(T.slice_cols(z, 0, H))
        f = T.sigmoid(T.slice_cols(z, H, 2 * H))
        g = T.tanh(T.slice_cols(z, 2 * H, 3 * H))
        o = T.sigmoid(T.slice_cols(z, 3 * H, 4 * H))
        c_new = T.add(T.mul(f, c), T.mul(i, g))
        h_new = T.mul(o, T.tanh(c_new))
        return h_new, c_new

    def _maybe_dropout(self, x, training, rng):
        if training and self.dropout > 0.0:
            return T.dropout(x, self.dropout, rng)
        return x

    def encode_ids(self, ids: np.ndarray, training=False, rng=None):
        """Run the bidirectional encoder over an id matrix (batch, T).

        Returns per-position context tensors (each (batch, 2H)) and the
        per-layer decoder start states projected from the final forward
        and backward states.
        """
        if ids.ndim != 2 or ids.shape[1] == 0:
            raise EmptyContext("encoder input must be a non-empty (batch, T) matrix")
        batch, T_in = ids.shape
        p = self.params
        inputs = [T.rows(p["emb"], ids[:, t]) for t in range(T_in)]
        init_states = []
        for layer in range(self.num_layers):
            fw, fb = p[f"enc{layer}f.w"], p[f"enc{layer}f.b"]
            bw, bb = p[f"enc{layer}b.w"], p[f"enc{layer}b.b"]
            h = c = self._zeros(batch)
            fwd = []
            for t in range(T_in):
                h, c = self._lstm_step(inputs[t], h, c, fw, fb)
                fwd.append(h)
            final_f = h
            h = c = self._zeros(batch)
            bwd = [None] * T_in
            for t in range(T_in - 1, -1, -1):
                h, c = self._lstm_step(inputs[t], h, c, bw, bb)
                bwd[t] = h
            final_b = h
            outputs = [T.concat([fwd[t], bwd[t]], axis=1) for t in range(T_in)]
            s0 = T.tanh(
                T.add(
                    T.matmul(
                        T.concat([final_f, final_b], axis=1), p[f"bridge{layer}.w"]
                    ),
                    p[f"bridge{layer}.b"],
                )
            )
            init_states.append((s0, self._zeros(batch)))
            if layer < self.num_layers - 1:
                inputs = [self._maybe_dropout(o, training, rng) for o in outputs]
        return outputs, init_states

    def _project_contexts(self, contexts):
        p = self.params
        return [
            T.add(T.matmul(h, p["att.uh"]), p["att.b"]) for h in contexts
        ]

    def _attend(self, s_prev, contexts, projected):
        """Additive attention; returns (context, weights) tensors."""
        if not contexts:
            raise EmptyContext("attention requires at least one encoder state")
        p = self.params
        q = T.matmul(s_prev, p["att.ws"])
        scores = [
            T.matmul(T.tanh(T.add(q, u)), p["att.v"]) for u in projected
        ]
        alphas = T.softmax(T.concat(scores, axis=1))
        ctx = None
        for k, h in enumerate(contexts):
            term = T.mul(h, T.slice_cols(alphas, k, k + 1))
            ctx = term if ctx is None else T.add(ctx, term)
        return ctx, alphas

    def _decode_step(self, prev_ids, states, contexts, projected, training=False, rng=None):
        """One decoder step; returns (logits, new states, attention weights)."""
        p = self.params
        emb_prev = T.rows(p["emb"], prev_ids)
        ctx, alphas = self._attend(states[-1][0], contexts, projected)
        x = T.concat([emb_prev, ctx], axis=1)
        new_states = []
        for layer in range(self.num_layers):
            h, c = states[layer]
            h_new, c_new = self._lstm_step(
                x, h, c, p[f"dec{layer}.w"], p[f"dec{layer}.b"]
            )
            new_states.append((h_new, c_new))
            x = h_new
            if layer < self.num_layers - 1:
                x = self._maybe_dropout(x, training, rng)
        hidden = T.tanh(
            T.add(
                T.matmul(T.concat([emb_prev, new_states[-1][0], ctx], axis=1), p["out.w1"]),
                p["out.b1"],
            )
        )
        logits = T.add(T.matmul(hidden, p["out.w2"]), p["out.b2"])
        return logits, new_states, alphas

    def forced_log_prob(
        self, in_ids, out_ids, mask=None, training=False, rng=None
    ) -> Tensor:
        """Teacher-forced total log probability of a target id batch.

        ``out_ids`` is (batch, To) ending in the halt symbol (plus
        padding); ``mask`` zeroes padded steps.  Returns the scalar sum
        of target log probabilities over all unmasked steps.
        """
        batch, T_out = out_ids.shape
        contexts, states = self.encode_ids(in_ids, training=training, rng=rng)
        projected = self._project_contexts(contexts)
        prev = np.full(batch, self.vocab.bos_id, dtype=np.intp)
        total = None
        for t in range(T_out):
            logits, states, _ = self._decode_step(
                prev, states, contexts, projected, training=training, rng=rng
            )
            step_lp = T.pick(T.log_softmax(logits), out_ids[:, t])
            if mask is not None:
                step_lp = T.mul(step_lp, Tensor(mask[:, t : t + 1].astype(self.dtype)))
            contrib = T.sum_all(step_lp)
            total = contrib if total is None else T.add(total, contrib)
            prev = out_ids[:, t]
        return total

    # -- public single-sequence operations --------------------------------

    def _input_ids(self, symbols) -> np.ndarray:
        ids = self.vocab.encode(symbols)
        if ids.size == 0:
            raise EmptyContext("empty input sequence")
        return ids[None, :]

    def encode(self, symbols) -> np.ndarray:
        """Per-position encoder states for one input, shape (n, 2H)."""
        contexts, _ = self.encode_ids(self._input_ids(symbols))
        return np.vstack([h.data for h in contexts])

    def attend(self, s_prev: np.ndarray, states: np.ndarray):
        """Attention weights and context for one decoder state.

        ``s_prev`` has shape (H,), ``states`` (n, 2H); returns the
        context vector (2H,) and the weight vector (n,).
        """
        states = np.asarray(states, dtype=self.dtype)
        if states.ndim != 2 or states.shape[0] == 0:
            raise EmptyContext("attend requires a non-empty state matrix")
        contexts = [Tensor(states[k : k + 1]) for k in range(states.shape[0])]
        projected = self._project_contexts(contexts)
        s = Tensor(np.asarray(s_prev, dtype=self.dtype)[None, :])
        ctx, alphas = self._attend(s, contexts, projected)
        return ctx.data[0], alphas.data[0]

    def sequence_log_prob(self, input_symbols, output_symbols) -> float:
        """Exact log probability of emitting the output then halting."""
        in_ids = self._input_ids(input_symbols)
        out = list(output_symbols)
        if not out or out[-1] != EOS:
            out.append(EOS)
        out_ids = self.vocab.encode(out)[None, :]
        return float(self.forced_log_prob(in_ids, out_ids).data)

    def _start_decode(self, input_symbols):
        contexts, states = self.encode_ids(self._input_ids(input_symbols))
        projected = self._project_contexts(contexts)
        return contexts, projected, states

    @staticmethod
    def _tile(tensors, n):
        return [Tensor(np.broadcast_to(t.data, (n,) + t.data.shape[1:])) for t in tensors]

    def _tile_states(self, states, n):
        return [
            (Tensor(np.broadcast_to(h.data, (n, h.data.shape[1]))),
             Tensor(np.broadcast_to(c.data, (n, c.data.shape[1]))))
            for h, c in states
        ]

    def _resolve_max_len(self, input_symbols, max_len):
        return len(tuple(input_symbols)) + MAX_LEN_MARGIN if max_len is None else max_len

    def greedy_decode(self, input_symbols, max_len=None) -> DecodeResult:
        """Argmax decoding; ties go to the lowest symbol index."""
        max_len = self._resolve_max_len(input_symbols, max_len)
        contexts, projected, states = self._start_decode(input_symbols)
        prev = np.array([self.vocab.bos_id], dtype=np.intp)
        out, lp = [], 0.0
        for _ in range(max_len):
            logits, states, _ = self._decode_step(prev, states, contexts, projected)
            step_lp = T.log_softmax(logits).data[0]
            choice = int(np.argmax(step_lp))
            lp += float(step_lp[choice])
            if choice == self.vocab.eos_id:
                return DecodeResult(self.vocab.decode(out), lp, truncated=False)
            out.append(choice)
            prev = np.array([choice], dtype=np.intp)
        return DecodeResult(self.vocab.decode(out), lp, truncated=True)

    def beam_search(self, input_symbols, k=12, max_len=None) -> list[DecodeResult]:
        """Beam decoding without length normalisation.

        Candidate extensions are ranked by cumulative log probability,
        ties broken by symbol index then hypothesis order.  Hypotheses
        that emit the halt symbol complete; survivors at the length cap
        are returned flagged as truncated.
        """
        if k < 1:
            raise ValueError("beam width must be at least 1")
        max_len = self._resolve_max_len(input_symbols, max_len)
        contexts, projected, states = self._start_decode(input_symbols)
        eos = self.vocab.eos_id
        active = [((), 0.0)]
        active_states = states
        active_prev = np.array([self.vocab.bos_id], dtype=np.intp)
        finished: list[DecodeResult] = []
        for _ in range(max_len):
            if not active:
                break
            n = len(active)
            ctx_n = self._tile(contexts, n)
            proj_n = self._tile(projected, n)
            logits, new_states, _ = self._decode_step(
                active_prev, active_states, ctx_n, proj_n
            )
            step_lp = T.log_softmax(logits).data
            V = step_lp.shape[1]
            totals = np.array([lp for _, lp in active])[:, None] + step_lp
            flat = totals.ravel()
            hyp_idx = np.repeat(np.arange(n), V)
            sym_idx = np.tile(np.arange(V), n)
            order = np.lexsort((hyp_idx, sym_idx, -flat))[:k]
            next_active = []
            next_rows = []
            next_prev = []
            for pos in order:
                h, v, lp = int(hyp_idx[pos]), int(sym_idx[pos]), float(flat[pos])
                prefix = active[h][0]
                if v == eos:
                    finished.append(
                        DecodeResult(self.vocab.decode(prefix), lp, truncated=False)
                    )
                else:
                    next_active.append((prefix + (v,), lp))
                    next_rows.append(h)
                    next_prev.append(v)
            active = next_active
            if active:
                rows = np.array(next_rows, dtype=np.intp)
                active_states = [
                    (Tensor(h.data[rows]), Tensor(c.data[rows]))
                    for h, c in new_states
                ]
                active_prev = np.array(next_prev, dtype=np.intp)
        for prefix, lp in active:
            finished.append(DecodeResult(self.vocab.decode(prefix), lp, truncated=True))
        finished.sort(key=lambda r: -r.log_prob)
        return finished

    def sample(self, input_symbols, seed=0, max_len=None) -> DecodeResult:
        """Ancestral sampling until the halt symbol or the length cap."""
        max_len = self._resolve_max_len(input_symbols, max_len)
        rng = rng_for(seed, "ed-sample")
        contexts, projected, states = self._start_decode(input_symbols)
        prev = np.array([self.vocab.bos_id], dtype=np.intp)
        out, lp = [], 0.0
        for _ in range(max_len):
            logits, states, _ = self._decode_step(prev, states, contexts, projected)
            probs = T.softmax(logits).data[0].astype(np.float64)
            probs = probs / probs.sum()
            choice = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
            choice = min(choice, len(probs) - 1)
            lp += float(np.log(probs[choice]))
            if choice == self.vocab.eos_id:
                return DecodeResult(self.vocab.decode(out), lp, truncated=False)
            out.append(choice)
            prev = np.array([choice], dtype=np.intp)
        return DecodeResult(self.vocab.decode(out), lp, truncated=True)

    def step_distribution(self, input_symbols, prefix_symbols=()) -> np.ndarray:
        """Next-symbol distribution after teacher-forcing a prefix."""
        contexts, projected, states = self._start_decode(input_symbols)
        prev = np.array([self.vocab.bos_id], dtype=np.intp)
        for symbol in prefix_symbols:
            logits, states, _ = self._decode_step(prev, states, contexts, projected)
            prev = np.array([self.vocab.index(symbol)], dtype=np.intp)
        logits, _, _ = self._decode_step(prev, states, contexts, projected)
        return T.softmax(logits).data[0]

    # -- persistence -------------------------------------------------------

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {
            "kind": "ed-model",
            "emb_dim": self.emb_dim,
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "dropout": self.dropout,
            "dtype": np.dtype(self.dtype).name,
            "phonemes": list(self.vocab.phonemes),
            "tags": list(self.vocab.tags),
        }
        if extra_meta:
            meta["extra"] = extra_meta
        save_tensors(path, {k: v.data for k, v in self.params.items()}, meta)

    @classmethod
    def load(cls, path) -> "EDModel":
        arrays, meta = load_tensors(path)
        if meta.get("kind") != "ed-model":
            raise CheckpointError(f"{path}: not an encoder-decoder checkpoint")
        vocab = Vocabulary(tuple(meta["phonemes"]), tuple(meta["tags"]))
        dtype = np.dtype(meta["dtype"])
        params = {k: T.parameter(v.astype(dtype)) for k, v in arrays.items()}
        return cls(
            vocab,
            meta["emb_dim"],
            meta["hidden_dim"],
            meta["num_layers"],
            meta["dropout"],
            params,
            dtype,
        )
