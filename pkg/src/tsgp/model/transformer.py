"""Encoder-decoder transformer conditioned on a semantic-distance scalar.

The conditioning scalar is mapped through an affine projection to a
d_model vector and prepended as position 0 of both the encoder and the
decoder input. Pre-norm layers, sinusoidal (fixed) positions, ReLU FFN.
All parameters live in a flat name -> Tensor map in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .vocab import Vocabulary, PAD

NEG_BIAS = -1e30  # additive mask value; exp() underflows to exactly 0


class SequenceTooLongError(Exception):
    pass


@dataclass
class Hyperparams:
    d_model: int = 128
    n_heads: int = 8
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    ffn_dim: int = None  # defaults to 4 * d_model
    max_len: int = 100
    dropout: float = 0.0
    lr: float = 1e-3
    weight_decay: float = 0.01
    epochs: int = 8
    batch_size: int = 32

    def __post_init__(self):
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.d_model
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, obj) -> "Hyperparams":
        return cls(**obj)


def sinusoidal_positions(n_positions: int, d_model: int) -> np.ndarray:
    pos = np.arange(n_positions)[:, None]
    i = np.arange(d_model // 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / d_model)
    table = np.zeros((n_positions, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


class SdTransformer:
    """Forward pass and parameter container; training lives in ``training``."""

    INIT_STD = 0.02

    def __init__(self, hyper: Hyperparams, vocab: Vocabulary,
                 rng: np.random.Generator = None, params: dict = None):
        self.hyper = hyper
        self.vocab = vocab
        # SD slot + BOS + max_len tokens on the decoder side
        self.positions = sinusoidal_positions(hyper.max_len + 2, hyper.d_model)
        if params is not None:
            self.params = {k: v if isinstance(v, Tensor) else Tensor(v, True)
                           for k, v in params.items()}
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            self.params = self._init_params(rng)

    # -- parameters -----------------------------------------------------------

    def _init_params(self, rng) -> dict:
        h = self.hyper
        D, F, V = h.d_model, h.ffn_dim, self.vocab.size
        p = {}

        def w(name, shape):
            p[name] = Tensor(rng.normal(0.0, self.INIT_STD, shape), True)

        def zeros(name, shape):
            p[name] = Tensor(np.zeros(shape), True)

        def ones(name, shape):
            p[name] = Tensor(np.ones(shape), True)

        w("embed.tok", (V, D))
        w("sd_proj.w", (D,))
        zeros("sd_proj.b", (D,))

        def attn(prefix):
            for nm in ("wq", "wk", "wv", "wo"):
                w(f"{prefix}.{nm}", (D, D))
            for nm in ("bq", "bk", "bv", "bo"):
                zeros(f"{prefix}.{nm}", (D,))

        def ffn(prefix):
            w(f"{prefix}.w1", (D, F))
            zeros(f"{prefix}.b1", (F,))
            w(f"{prefix}.w2", (F, D))
            zeros(f"{prefix}.b2", (D,))

        def ln(prefix):
            ones(f"{prefix}.g", (D,))
            zeros(f"{prefix}.b", (D,))

        for i in range(h.n_encoder_layers):
            ln(f"enc.{i}.ln1")
            attn(f"enc.{i}.attn")
            ln(f"enc.{i}.ln2")
            ffn(f"enc.{i}.ffn")
        ln("enc.ln_f")
        for i in range(h.n_decoder_layers):
            ln(f"dec.{i}.ln1")
            attn(f"dec.{i}.self")
            ln(f"dec.{i}.ln2")
            attn(f"dec.{i}.cross")
            ln(f"dec.{i}.ln3")
            ffn(f"dec.{i}.ffn")
        ln("dec.ln_f")
        w("out.w", (D, V))
        zeros("out.b", (V,))
        return p

    def param_arrays(self) -> dict:
        return {k: t.data for k, t in self.params.items()}

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    # -- building blocks ------------------------------------------------------

    def _mha(self, prefix, q_in: Tensor, kv_in: Tensor, bias: np.ndarray,
             record: dict = None, record_key: str = None) -> Tensor:
        p = self.params
        h = self.hyper
        H, dh = h.n_heads, h.d_model // h.n_heads
        B, Tq = q_in.shape[0], q_in.shape[1]
        Tk = kv_in.shape[1]

        def proj(x, name, T):
            y = ad.add(ad.matmul(x, p[f"{prefix}.w{name}"]), p[f"{prefix}.b{name}"])
            y = ad.reshape(y, (B, T, H, dh))
            return ad.transpose(y, (0, 2, 1, 3))  # (B, H, T, dh)

        q = proj(q_in, "q", Tq)
        k = proj(kv_in, "k", Tk)
        v = proj(kv_in, "v", Tk)
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                          1.0 / math.sqrt(dh))
        att = ad.softmax(ad.add_const(scores, bias), axis=-1)
        if record is not None:
            record[record_key] = att.data
        out = ad.transpose(ad.matmul(att, v), (0, 2, 1, 3))
        out = ad.reshape(out, (B, Tq, h.d_model))
        return ad.add(ad.matmul(out, p[f"{prefix}.wo"]), p[f"{prefix}.bo"])

    def _ln(self, prefix, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    def _ffn(self, prefix, x: Tensor) -> Tensor:
        p = self.params
        hidden = ad.relu(ad.add(ad.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
        return ad.add(ad.matmul(hidden, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])

    def _embed_with_sd(self, ids: np.ndarray, sd: np.ndarray) -> Tensor:
        """[SD embedding] ++ token embeddings, plus position table."""
        p = self.params
        B, T = ids.shape
        tok = ad.embedding(p["embed.tok"], ids)  # (B, T, D)
        sd_col = Tensor(np.asarray(sd, dtype=np.float64).reshape(B, 1, 1))
        sd_emb = ad.add(ad.mul(sd_col, ad.reshape(p["sd_proj.w"], (1, 1, -1))),
                        ad.reshape(p["sd_proj.b"], (1, 1, -1)))
        x = ad.concat([sd_emb, tok], axis=1)  # (B, T+1, D)
        return ad.add_const(x, self.positions[None, :T + 1, :])

    @staticmethod
    def _key_bias(valid: np.ndarray) -> np.ndarray:
        return np.where(valid[:, None, None, :], 0.0, NEG_BIAS)

    @staticmethod
    def _causal_bias(T: int) -> np.ndarray:
        return np.where(np.tril(np.ones((T, T), dtype=bool)), 0.0, NEG_BIAS)

    # -- forward --------------------------------------------------------------

    def encode(self, enc_ids: np.ndarray, sd: np.ndarray,
               record: dict = None):
        """Run the encoder stack; returns (output Tensor, key-validity mask)."""
        enc_ids = np.atleast_2d(np.asarray(enc_ids, dtype=np.int64))
        if enc_ids.shape[1] > self.hyper.max_len:
            raise SequenceTooLongError(
                f"encoder sequence {enc_ids.shape[1]} > max_len {self.hyper.max_len}")
        valid = np.concatenate(
            [np.ones((enc_ids.shape[0], 1), dtype=bool), enc_ids != PAD], axis=1)
        bias = self._key_bias(valid)
        x = self._embed_with_sd(enc_ids, sd)
        for i in range(self.hyper.n_encoder_layers):
            h = self._ln(f"enc.{i}.ln1", x)
            x = ad.add(x, self._mha(f"enc.{i}.attn", h, h, bias,
                                    record, f"enc.{i}.attn"))
            x = ad.add(x, self._ffn(f"enc.{i}.ffn", self._ln(f"enc.{i}.ln2", x)))
        return self._ln("enc.ln_f", x), valid

    def decode(self, dec_ids: np.ndarray, sd: np.ndarray, enc_out: Tensor,
               enc_valid: np.ndarray, record: dict = None) -> Tensor:
        """Decoder stack over [SD] ++ dec_ids; returns logits (B, T+1, V)."""
        dec_ids = np.atleast_2d(np.asarray(dec_ids, dtype=np.int64))
        if dec_ids.shape[1] > self.hyper.max_len + 1:
            raise SequenceTooLongError(
                f"decoder sequence {dec_ids.shape[1]} > {self.hyper.max_len + 1}")
        valid = np.concatenate(
            [np.ones((dec_ids.shape[0], 1), dtype=bool), dec_ids != PAD], axis=1)
        T = dec_ids.shape[1] + 1
        self_bias = self._key_bias(valid) + self._causal_bias(T)[None, None, :, :]
        cross_bias = self._key_bias(enc_valid)
        x = self._embed_with_sd(dec_ids, sd)
        for i in range(self.hyper.n_decoder_layers):
            h = self._ln(f"dec.{i}.ln1", x)
            x = ad.add(x, self._mha(f"dec.{i}.self", h, h, self_bias,
                                    record, f"dec.{i}.self"))
            h = self._ln(f"dec.{i}.ln2", x)
            x = ad.add(x, self._mha(f"dec.{i}.cross", h, enc_out, cross_bias,
                                    record, f"dec.{i}.cross"))
            x = ad.add(x, self._ffn(f"dec.{i}.ffn", self._ln(f"dec.{i}.ln3", x)))
        x = self._ln("dec.ln_f", x)
        return ad.add(ad.matmul(x, self.params["out.w"]), self.params["out.b"])

    def forward(self, enc_ids: np.ndarray, sd, dec_ids: np.ndarray,
                record: dict = None) -> Tensor:
        """Full pass; logits row t depends only on decoder positions <= t."""
        sd = np.broadcast_to(np.asarray(sd, dtype=np.float64),
                             (np.atleast_2d(enc_ids).shape[0],))
        enc_out, enc_valid = self.encode(enc_ids, sd, record)
        return self.decode(dec_ids, sd, enc_out, enc_valid, record)


def loss(logits: Tensor, target_ids: np.ndarray) -> Tensor:
    """Mean cross-entropy over non-PAD target positions."""
    targets = np.atleast_2d(np.asarray(target_ids, dtype=np.int64))
    mask = targets != PAD
    if not mask.any():
        raise ValueError("all-PAD target")
    return ad.cross_entropy(logits, targets, mask)
