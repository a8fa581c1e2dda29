"""Attentional LSTM encoder-decoder with write, copy, and lexical heads.

The decoder's output layer interpolates, through a sigmoid gate on the
hidden state, between a learned "write" softmax over the output vocabulary
and a head that routes the attention weights through a row-stochastic
lexicon matrix.  A copy head is the special case whose matrix is the
token-identity lexicon, so copying and lexical translation share one code
path and agree bit-for-bit when the lexicon is the identity.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BOS_ID, EOS_ID, PAD_ID, Vocabulary
from .lexicon import Lexicon, identity_lexicon

LOG_EPS = 1e-12  # floor added inside log() so zero-probability gold tokens stay finite
HEAD_CONFIGS = ("write", "write+copy", "write+lex")


class ModelError(ValueError):
    """Invalid model configuration or input."""


@dataclass
class ModelConfig:
    embed_size: int = 512
    hidden_size: int = 512
    layers: int = 2
    heads: str = "write"
    dropout: float = 0.0
    write_dropout: float = 0.0
    tau: float = 0.0
    lexicon_trainable: bool = False
    max_src_len: int = 256


@dataclass
class LSTMLayer:
    """One LSTM layer: pre-activations = x@W + h@U + b, gate order [i,f,g,o]."""

    W: Tensor
    U: Tensor
    b: Tensor


@dataclass
class DecoderState:
    h: list
    c: list


@dataclass
class DecoderStep:
    """Everything the decoder produced at one output position."""

    hidden: Tensor        # (B, H) top-layer state
    attention: Tensor     # (B, Tx) weights over source positions
    context: Tensor       # (B, H) attention-weighted encoder states
    p_write: Tensor       # (B, |Vy|)
    p_head: Tensor | None  # (B, |Vy|) copy/lex distribution, None for write-only
    p_gate: Tensor | None  # (B, 1) interpolation weight on p_write
    mixed: Tensor         # (B, |Vy|) final output distribution


@dataclass
class Batch:
    """Padded id arrays for one training/evaluation batch."""

    src_ids: np.ndarray   # (B, Tx) int
    src_mask: np.ndarray  # (B, Tx) bool, True at real tokens
    tgt_in: np.ndarray    # (B, Ty) decoder inputs, starts with BOS
    tgt_out: np.ndarray   # (B, Ty) gold outputs, ends with EOS
    tgt_mask: np.ndarray  # (B, Ty) bool

    def __len__(self) -> int:
        return self.src_ids.shape[0]


def make_batch(pairs: Sequence[tuple], src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> Batch:
    """Pad (src_tokens, tgt_tokens) pairs into id arrays with masks."""
    if not pairs:
        raise ModelError("make_batch: empty batch")
    srcs = [src_vocab.encode(s) for s, _ in pairs]
    tgts = [tgt_vocab.encode(t, add_eos=True) for _, t in pairs]
    b = len(pairs)
    tx = max(len(s) for s in srcs)
    ty = max(len(t) for t in tgts)
    src_ids = np.full((b, tx), PAD_ID, dtype=np.int64)
    src_mask = np.zeros((b, tx), dtype=bool)
    tgt_in = np.full((b, ty), PAD_ID, dtype=np.int64)
    tgt_out = np.full((b, ty), PAD_ID, dtype=np.int64)
    tgt_mask = np.zeros((b, ty), dtype=bool)
    for i, (s, t) in enumerate(zip(srcs, tgts)):
        src_ids[i, : len(s)] = s
        src_mask[i, : len(s)] = True
        tgt_in[i, 0] = BOS_ID
        tgt_in[i, 1 : len(t)] = t[:-1]
        tgt_out[i, : len(t)] = t
        tgt_mask[i, : len(t)] = True
    return Batch(src_ids, src_mask, tgt_in, tgt_out, tgt_mask)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _lstm_stack(rng: np.random.Generator, input_size: int, hidden: int, layers: int, tag: str) -> list:
    stack = []
    for i in range(layers):
        size_in = input_size if i == 0 else hidden
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0  # forget-gate bias opens the memory path at init
        stack.append(
            LSTMLayer(
                W=Tensor(_xavier(rng, size_in, 4 * hidden, (size_in, 4 * hidden)), trainable=True, name=f"{tag}.{i}.W"),
                U=Tensor(_xavier(rng, hidden, 4 * hidden, (hidden, 4 * hidden)), trainable=True, name=f"{tag}.{i}.U"),
                b=Tensor(b, trainable=True, name=f"{tag}.{i}.b"),
            )
        )
    return stack


class ModelParams:
    """All model parameters plus the vocabularies and head configuration."""

    def __init__(self, src_vocab: Vocabulary, tgt_vocab: Vocabulary, config: ModelConfig):
        if config.heads not in HEAD_CONFIGS:
            raise ModelError(f"unknown head configuration {config.heads!r}; expected one of {HEAD_CONFIGS}")
        if config.layers < 1:
            raise ModelError("layers must be >= 1")
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.config = config
        self.in_embed: Tensor = None
        self.out_embed: Tensor = None
        self.encoder: list = []
        self.decoder: list = []
        self.W_att: Tensor = None
        self.W_write: Tensor = None
        self.w_gate: Tensor = None
        self.lexicon_matrix: np.ndarray | None = None  # frozen L (or copy identity)
        self.lex_logits: Tensor | None = None          # free logits when L is trainable
        self.lexicon_meta: dict = {}

    # -- construction ------------------------------------------------------

    @classmethod
    def create(
        cls,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        config: ModelConfig,
        lexicon: Lexicon | None = None,
        seed: int = 0,
    ) -> "ModelParams":
        params = cls(src_vocab, tgt_vocab, config)
        rng = np.random.default_rng(seed)
        e, h, vy = config.embed_size, config.hidden_size, len(tgt_vocab)
        params.in_embed = Tensor(_xavier(rng, len(src_vocab), e, (len(src_vocab), e)), trainable=True, name="in_embed")
        params.out_embed = Tensor(_xavier(rng, vy, e, (vy, e)), trainable=True, name="out_embed")
        params.encoder = _lstm_stack(rng, e, h, config.layers, "encoder")
        params.decoder = _lstm_stack(rng, e, h, config.layers, "decoder")
        params.W_att = Tensor(_xavier(rng, h, h, (h, h)), trainable=True, name="W_att")
        params.W_write = Tensor(_xavier(rng, 2 * h, vy, (2 * h, vy)), trainable=True, name="W_write")
        params.w_gate = Tensor(_xavier(rng, h, 1, (h, 1)), trainable=True, name="w_gate")
        params._install_lexicon(lexicon)
        return params

    def _install_lexicon(self, lexicon: Lexicon | None) -> None:
        config = self.config
        if config.heads == "write":
            if lexicon is not None:
                raise ModelError("a lexicon was supplied but heads='write' does not use one")
            if config.lexicon_trainable:
                raise ModelError("lexicon_trainable requires heads='write+lex'")
            return
        if config.heads == "write+copy":
            if lexicon is not None:
                raise ModelError("heads='write+copy' builds its own identity lexicon")
            if config.lexicon_trainable:
                raise ModelError("the copy head's identity matrix is not trainable")
            missing = [t for t in self.src_vocab.content_tokens if t not in self.tgt_vocab]
            if missing:
                raise ModelError(
                    f"copy head needs every input token in the output vocabulary; missing {missing[:5]}"
                )
            ident = identity_lexicon(self.src_vocab, self.tgt_vocab)
            self.lexicon_matrix = ident.matrix
            self.lexicon_meta = {"learner": ident.learner, "fallback": ident.fallback, "tau": ident.tau}
            return
        # write+lex
        if lexicon is None:
            raise ModelError("heads='write+lex' requires a lexicon")
        aligned = lexicon.reindex(self.src_vocab, self.tgt_vocab)
        self.lexicon_meta = {"learner": aligned.learner, "fallback": aligned.fallback, "tau": aligned.tau}
        if config.lexicon_trainable:
            if config.tau <= 0.0:
                raise ModelError("a trainable lexicon needs tau > 0 (rows are softmax(logits / tau))")
            logits = config.tau * np.log(aligned.matrix + LOG_EPS)
            self.lex_logits = Tensor(logits, trainable=True, name="lex_logits")
        else:
            self.lexicon_matrix = aligned.matrix.copy()

    # -- parameter access --------------------------------------------------

    def named_parameters(self) -> list:
        named = [("in_embed", self.in_embed), ("out_embed", self.out_embed)]
        for tag, stack in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, layer in enumerate(stack):
                named += [(f"{tag}.{i}.W", layer.W), (f"{tag}.{i}.U", layer.U), (f"{tag}.{i}.b", layer.b)]
        named += [("W_att", self.W_att), ("W_write", self.W_write), ("w_gate", self.w_gate)]
        if self.lex_logits is not None:
            named.append(("lex_logits", self.lex_logits))
        return named

    def trainable_parameters(self) -> list:
        return [t for _, t in self.named_parameters() if t.trainable]

    def effective_lexicon(self) -> Tensor | None:
        """The row-stochastic L actually used by the copy/lex head."""
        if self.config.heads == "write":
            return None
        if self.lex_logits is not None:
            return ad.softmax(ad.mul(self.lex_logits, 1.0 / self.config.tau))
        return Tensor(self.lexicon_matrix)

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {
            "version": 1,
            "config": asdict(self.config),
            "src_tokens": list(self.src_vocab.content_tokens),
            "tgt_tokens": list(self.tgt_vocab.content_tokens),
            "lexicon_meta": self.lexicon_meta,
        }
        arrays = {f"param:{name}": t.data for name, t in self.named_parameters()}
        if self.lexicon_matrix is not None:
            arrays["lexicon_matrix"] = self.lexicon_matrix
        np.savez(path, meta=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "ModelParams":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            arrays = {k: data[k] for k in data.files if k != "meta"}
        if meta.get("version") != 1:
            raise ModelError(f"unsupported checkpoint version {meta.get('version')!r} in {path}")
        config = ModelConfig(**meta["config"])
        params = cls(Vocabulary(meta["src_tokens"]), Vocabulary(meta["tgt_tokens"]), config)
        e, h, vy = config.embed_size, config.hidden_size, len(params.tgt_vocab)
        params.in_embed = Tensor(np.zeros((len(params.src_vocab), e)), trainable=True, name="in_embed")
        params.out_embed = Tensor(np.zeros((vy, e)), trainable=True, name="out_embed")
        params.encoder = _lstm_stack(np.random.default_rng(0), e, h, config.layers, "encoder")
        params.decoder = _lstm_stack(np.random.default_rng(0), e, h, config.layers, "decoder")
        params.W_att = Tensor(np.zeros((h, h)), trainable=True, name="W_att")
        params.W_write = Tensor(np.zeros((2 * h, vy)), trainable=True, name="W_write")
        params.w_gate = Tensor(np.zeros((h, 1)), trainable=True, name="w_gate")
        params.lexicon_meta = meta["lexicon_meta"]
        if config.heads == "write+lex" and config.lexicon_trainable:
            params.lex_logits = Tensor(np.zeros((len(params.src_vocab), vy)), trainable=True, name="lex_logits")
        for name, tensor in params.named_parameters():
            key = f"param:{name}"
            if key not in arrays:
                raise ModelError(f"checkpoint {path} is missing parameter {name!r}")
            if arrays[key].shape != tensor.data.shape:
                raise ModelError(f"checkpoint parameter {name!r} has shape {arrays[key].shape}, expected {tensor.data.shape}")
            tensor.data = arrays[key]
        if "lexicon_matrix" in arrays:
            params.lexicon_matrix = arrays["lexicon_matrix"]
        return params


def _lstm_step(layer: LSTMLayer, x: Tensor, h: Tensor, c: Tensor) -> tuple:
    pre = ad.add(ad.add(ad.matmul(x, layer.W), layer.b), ad.matmul(h, layer.U))
    return ad.lstm_gates(pre, c)


def _lstm_layer_sequence(layer: LSTMLayer, seq: Tensor, h: Tensor, c: Tensor) -> tuple:
    """Run one LSTM layer over a whole (B, T, in) sequence tensor.

    The input projection is a single matmul over every position; only the
    recurrent part loops. Returns h and c stacked to (B, T, H).
    """
    b, t, size_in = seq.shape
    flat = ad.reshape(seq, (b * t, size_in))
    pre_x = ad.reshape(ad.add(ad.matmul(flat, layer.W), layer.b), (b, t, layer.b.shape[0]))
    return ad.lstm_sequence(pre_x, h, c, layer.U)


def _maybe_dropout(x: Tensor, p: float, rng, train: bool) -> Tensor:
    if train and p > 0.0:
        if rng is None:
            raise ModelError("training-mode forward with dropout needs an rng")
        return ad.dropout(x, p, rng)
    return x


def _select_last(states: Tensor, lengths: np.ndarray) -> Tensor:
    """Pick states[b, lengths[b]-1, :] from a (B, T, H) tensor."""
    b, t, h = states.shape
    flat = ad.reshape(states, (b * t, h))
    ids = np.arange(b) * t + (lengths - 1)
    return ad.lookup(flat, ids)


def encode(params: ModelParams, src_ids: np.ndarray, src_mask: np.ndarray, *, rng=None, train: bool = False):
    """Run the encoder stack; returns (states (B,T,H), initial DecoderState)."""
    config = params.config
    b, t = src_ids.shape
    if t < 1:
        raise ModelError("encode: empty input")
    if t > config.max_src_len:
        raise ModelError(f"encode: input length {t} exceeds max_src_len={config.max_src_len}")
    lengths = src_mask.sum(axis=1).astype(np.int64)
    if np.any(lengths < 1):
        raise ModelError("encode: every batch row needs at least one real token")
    hidden = config.hidden_size
    seq = ad.lookup(params.in_embed, src_ids)  # (B, T, E)
    seq = _maybe_dropout(seq, config.dropout, rng, train)
    h0, c0 = [], []
    for i, layer in enumerate(params.encoder):
        h_seq, c_seq = _lstm_layer_sequence(
            layer, seq, Tensor(np.zeros((b, hidden))), Tensor(np.zeros((b, hidden)))
        )
        # the decoder starts from each layer's state at its last real token
        h0.append(_select_last(h_seq, lengths))
        c0.append(_select_last(c_seq, lengths))
        seq = h_seq
        if i < config.layers - 1:
            seq = _maybe_dropout(seq, config.dropout, rng, train)
    return seq, DecoderState(h=h0, c=c0)


def attend(params: ModelParams, hidden: Tensor, states: Tensor, src_mask: np.ndarray):
    """Bilinear attention: weights proportional to exp(h^T W_att e_j)."""
    query = ad.matmul(hidden, params.W_att)         # (B, H)
    scores = ad.batched_dot(query, states)          # (B, Tx)
    alpha = ad.softmax(scores, mask=src_mask)
    context = ad.weighted_sum(alpha, states)        # (B, H)
    return alpha, context


def output_distribution(
    params: ModelParams,
    hidden: Tensor,
    context: Tensor,
    alpha: Tensor,
    src_ids: np.ndarray,
    *,
    lexicon: Tensor | None = None,
    rng=None,
    train: bool = False,
) -> DecoderStep:
    """Mix the write head with the copy/lex head through the sigmoid gate."""
    config = params.config
    ch = ad.concat([context, hidden], axis=-1)
    ch = _maybe_dropout(ch, config.write_dropout, rng, train)
    p_write = ad.softmax(ad.matmul(ch, params.W_write))
    if config.heads == "write":
        return DecoderStep(hidden, alpha, context, p_write, None, None, p_write)
    if lexicon is None:
        lexicon = params.effective_lexicon()
    rows = ad.lookup(lexicon, src_ids)              # (B, Tx, |Vy|)
    p_head = ad.weighted_sum(alpha, rows)           # (B, |Vy|)
    p_gate = ad.sigmoid(ad.matmul(hidden, params.w_gate))  # (B, 1)
    keep = ad.sub(Tensor(1.0), p_gate)
    mixed = ad.add(ad.mul(p_gate, p_write), ad.mul(keep, p_head))
    return DecoderStep(hidden, alpha, context, p_write, p_head, p_gate, mixed)


def decode_step(
    params: ModelParams,
    state: DecoderState,
    y_prev: np.ndarray,
    states: Tensor,
    src_ids: np.ndarray,
    src_mask: np.ndarray,
    *,
    lexicon: Tensor | None = None,
    rng=None,
    train: bool = False,
):
    """Advance the decoder one position given the previous output token."""
    config = params.config
    x = ad.lookup(params.out_embed, y_prev)
    x = _maybe_dropout(x, config.dropout, rng, train)
    h, c = list(state.h), list(state.c)
    for i, layer in enumerate(params.decoder):
        h[i], c[i] = _lstm_step(layer, x, h[i], c[i])
        x = h[i]
        if i < config.layers - 1:
            x = _maybe_dropout(x, config.dropout, rng, train)
    alpha, context = attend(params, h[-1], states, src_mask)
    step = output_distribution(
        params, h[-1], context, alpha, src_ids, lexicon=lexicon, rng=rng, train=train
    )
    return DecoderState(h=h, c=c), step


def sequence_loss(params: ModelParams, batch: Batch, *, rng=None, train: bool = False):
    """Teacher-forced mean negative log-likelihood per output token.

    Only the LSTM recurrences run stepwise; attention and the output heads
    are evaluated for every output position at once, which is what makes
    full-length training runs affordable on one core. Returns (loss Tensor,
    stats dict with token counts and greedy matches).
    """
    config = params.config
    states, state = encode(params, batch.src_ids, batch.src_mask, rng=rng, train=train)
    b, ty = batch.tgt_in.shape
    tx = batch.src_ids.shape[1]
    hidden = config.hidden_size
    seq = ad.lookup(params.out_embed, batch.tgt_in)  # (B, Ty, E)
    seq = _maybe_dropout(seq, config.dropout, rng, train)
    for i, layer in enumerate(params.decoder):
        seq, _ = _lstm_layer_sequence(layer, seq, state.h[i], state.c[i])
        if i < config.layers - 1:
            seq = _maybe_dropout(seq, config.dropout, rng, train)
    h_flat = ad.reshape(seq, (b * ty, hidden))  # rows in (batch, position) order
    query = ad.reshape(ad.matmul(h_flat, params.W_att), (b, ty, hidden))
    scores = ad.batched_matmul_t(query, states)  # (B, Ty, Tx)
    mask = np.broadcast_to(batch.src_mask[:, None, :], (b, ty, tx)).reshape(b * ty, tx)
    alpha = ad.softmax(ad.reshape(scores, (b * ty, tx)), mask=mask)
    alpha3 = ad.reshape(alpha, (b, ty, tx))
    context = ad.batched_matmul(alpha3, states)  # (B, Ty, H)
    ch = ad.concat([ad.reshape(context, (b * ty, hidden)), h_flat], axis=-1)
    ch = _maybe_dropout(ch, config.write_dropout, rng, train)
    p_write = ad.softmax(ad.matmul(ch, params.W_write))  # (B*Ty, |Vy|)
    if config.heads == "write":
        mixed = p_write
    else:
        rows = ad.lookup(params.effective_lexicon(), batch.src_ids)  # (B, Tx, |Vy|)
        p_head = ad.batched_matmul(alpha3, rows)
        p_head = ad.reshape(p_head, (b * ty, len(params.tgt_vocab)))
        p_gate = ad.sigmoid(ad.matmul(h_flat, params.w_gate))  # (B*Ty, 1)
        keep = ad.sub(Tensor(1.0), p_gate)
        mixed = ad.add(ad.mul(p_gate, p_write), ad.mul(keep, p_head))
    gold = batch.tgt_out.reshape(-1)
    tgt_mask = batch.tgt_mask.reshape(-1)
    n_tokens = int(tgt_mask.sum())
    p_gold = ad.gather_index(mixed, gold)
    lp = ad.log(ad.add(p_gold, Tensor(LOG_EPS)))
    masked = ad.mul(lp, Tensor(tgt_mask.astype(np.float64)))
    loss = ad.mul(ad.sum(masked), Tensor(-1.0 / n_tokens))
    correct = int(((np.argmax(mixed.data, axis=1) == gold) & tgt_mask).sum())
    stats = {"tokens": n_tokens, "correct": correct, "loss": float(loss.data)}
    return loss, stats


def sequence_log_prob(params: ModelParams, src_tokens: Sequence[str], tgt_tokens: Sequence[str]) -> Tensor:
    """Scalar log p(y|x) for one pair, teacher-forced, including the EOS step."""
    batch = make_batch([(tuple(src_tokens), tuple(tgt_tokens))], params.src_vocab, params.tgt_vocab)
    loss, stats = sequence_loss(params, batch, train=False)
    return ad.mul(loss, Tensor(-float(stats["tokens"])))


def greedy_decode(params: ModelParams, src_tokens: Sequence[str], max_len: int | None = None) -> tuple:
    """Argmax decoding, feeding predictions back; stops at EOS or max_len."""
    if max_len is None:
        max_len = min(2 * len(src_tokens) + 10, 256)
    if max_len < 1:
        raise ModelError("greedy_decode: max_len must be >= 1")
    src = np.asarray([params.src_vocab.encode(src_tokens)], dtype=np.int64)
    mask = np.ones_like(src, dtype=bool)
    states, state = encode(params, src, mask)
    lexicon = params.effective_lexicon()
    y_prev = np.array([BOS_ID], dtype=np.int64)
    out = []
    for _ in range(max_len):
        state, step = decode_step(params, state, y_prev, states, src, mask, lexicon=lexicon)
        nxt = int(np.argmax(step.mixed.data[0]))
        if nxt == EOS_ID:
            break
        out.append(params.tgt_vocab.token(nxt))
        y_prev = np.array([nxt], dtype=np.int64)
    return tuple(out)
