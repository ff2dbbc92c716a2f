"""Instruction encoder.

Words are embedded by a dense projection of their one-hot vectors (a row
lookup), encoded by a Bi-GRU, and summarized from three learned viewpoints:
subject, location, and relationship.  Each viewpoint m owns a trainable
vector s_m that scores every timestep's hidden state; the softmax of those
scores weights a sum over the word embeddings, and the concatenation
[q_subj, q_loc, q_rel] is the instruction feature.

The weighted sum ranges over the embeddings by default (the fused hidden
states only steer the attention); summing hidden states instead is available
behind ``attend_over="hidden"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EncodeError
from .instructions import Vocabulary
from .nn.gru import GruParams, bigru_backward, bigru_forward
from .nn.ops import softmax, softmax_grad_from_output

VIEWS = ("subj", "loc", "rel")


@dataclass
class EncodeResult:
    embeddings: np.ndarray  # (T, d)
    hidden: np.ndarray      # (T, 2H)
    attention: np.ndarray   # (3, T), rows sum to 1
    summaries: np.ndarray   # (3, d) the per-view weighted sums
    feature: np.ndarray     # (3d,) concatenated [subj, loc, rel]
    cache: tuple


class LanguageEncoder:
    def __init__(self, vocab_size: int, embed_dim: int, hidden_dim: int,
                 rng: np.random.Generator, attend_over: str = "embeddings"):
        if attend_over not in ("embeddings", "hidden"):
            raise ConfigurationError(f"bad attend_over {attend_over!r}")
        bound = 1.0 / np.sqrt(embed_dim)
        self.embed = rng.uniform(-bound, bound, size=(vocab_size, embed_dim))
        self.gru_fwd = GruParams.init(embed_dim, hidden_dim, rng)
        self.gru_bwd = GruParams.init(embed_dim, hidden_dim, rng)
        sbound = 1.0 / np.sqrt(2 * hidden_dim)
        self.s = rng.uniform(-sbound, sbound, size=(3, 2 * hidden_dim))
        self.attend_over = attend_over

    @classmethod
    def for_vocab(cls, vocab: Vocabulary, embed_dim: int, hidden_dim: int,
                  rng: np.random.Generator, **kw) -> "LanguageEncoder":
        return cls(len(vocab), embed_dim, hidden_dim, rng, **kw)

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embed.shape[1]

    @property
    def feature_dim(self) -> int:
        d = self.embed_dim if self.attend_over == "embeddings" else 2 * self.gru_fwd.hidden_dim
        return 3 * d

    def params(self) -> dict:
        out = {"embed": self.embed, "s": self.s}
        out.update(self.gru_fwd.named("gru_fwd"))
        out.update(self.gru_bwd.named("gru_bwd"))
        return out

    def embed_tokens(self, tokens) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=int)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            raise ConfigurationError("token index outside the vocabulary")
        return self.embed[tokens]

    def encode(self, tokens) -> EncodeResult:
        tokens = np.asarray(tokens, dtype=int)
        if tokens.size == 0:
            raise EncodeError("cannot encode an empty token sequence")
        e = self.embed_tokens(tokens)
        out, gru_cache = bigru_forward(self.gru_fwd, self.gru_bwd, e[:, None, :])
        h = out[:, 0, :]                      # (T, 2H)
        logits = self.s @ h.T                 # (3, T)
        a = softmax(logits, axis=1)
        basis = e if self.attend_over == "embeddings" else h
        q = a @ basis                         # (3, d)
        f_t = q.reshape(-1)
        return EncodeResult(e, h, a, q, f_t, (tokens, gru_cache))

    def backward(self, result: EncodeResult, d_feature: np.ndarray) -> dict:
        """Gradients of every encoder parameter given d(loss)/d(feature)."""
        tokens, gru_cache = result.cache
        e, h, a = result.embeddings, result.hidden, result.attention
        dq = d_feature.reshape(3, -1)
        basis = e if self.attend_over == "embeddings" else h
        da = dq @ basis.T                     # (3, T)
        dbasis = a.T @ dq                     # (T, d)
        dlogits = softmax_grad_from_output(a, da, axis=1)
        ds = dlogits @ h
        dh = dlogits.T @ self.s               # (T, 2H)
        de = np.zeros_like(e)
        if self.attend_over == "embeddings":
            de += dbasis
        else:
            dh = dh + dbasis
        dxs, g_f, g_b = bigru_backward(self.gru_fwd, self.gru_bwd, gru_cache, dh[:, None, :])
        de += dxs[:, 0, :]
        dembed = np.zeros_like(self.embed)
        np.add.at(dembed, tokens, de)
        grads = {"embed": dembed, "s": ds}
        grads.update(g_f.named("gru_fwd"))
        grads.update(g_b.named("gru_bwd"))
        return grads
