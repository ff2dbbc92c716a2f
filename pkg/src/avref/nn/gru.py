"""Gated recurrent unit with hand-derived backpropagation.

Gate equations (shared by the language encoder and the sound recognizer):

    r  = sigmoid(W_r x + U_r h + b_r)
    z  = sigmoid(W_z x + U_z h + b_z)
    hc = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * hc

Sequences are arrays of shape (T, B, D); the initial hidden state is zero.
The bidirectional wrapper concatenates the forward and backward hidden
states per timestep, [h_fwd_t, h_bwd_t].
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import ConfigurationError
from .ops import sigmoid


@dataclass
class GruParams:
    """One direction's weights: W_* act on the input, U_* on the hidden state."""

    wz: np.ndarray
    uz: np.ndarray
    bz: np.ndarray
    wr: np.ndarray
    ur: np.ndarray
    br: np.ndarray
    wh: np.ndarray
    uh: np.ndarray
    bh: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.wz.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.wz.shape[0]

    def validate(self) -> None:
        h, d = self.wz.shape
        for name in ("wz", "wr", "wh"):
            if getattr(self, name).shape != (h, d):
                raise ConfigurationError(f"{name} must be ({h}, {d})")
        for name in ("uz", "ur", "uh"):
            if getattr(self, name).shape != (h, h):
                raise ConfigurationError(f"{name} must be ({h}, {h})")
        for name in ("bz", "br", "bh"):
            if getattr(self, name).shape != (h,):
                raise ConfigurationError(f"{name} must be ({h},)")

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "GruParams":
        def u(fan_in, shape):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        return cls(
            wz=u(input_dim, (hidden_dim, input_dim)),
            uz=u(hidden_dim, (hidden_dim, hidden_dim)),
            bz=np.zeros(hidden_dim),
            wr=u(input_dim, (hidden_dim, input_dim)),
            ur=u(hidden_dim, (hidden_dim, hidden_dim)),
            br=np.zeros(hidden_dim),
            wh=u(input_dim, (hidden_dim, input_dim)),
            uh=u(hidden_dim, (hidden_dim, hidden_dim)),
            bh=np.zeros(hidden_dim),
        )

    def zeros_like(self) -> "GruParams":
        return GruParams(**{f.name: np.zeros_like(getattr(self, f.name)) for f in fields(self)})

    def named(self, prefix: str) -> dict:
        return {f"{prefix}.{f.name}": getattr(self, f.name) for f in fields(self)}


def gru_forward(params: GruParams, xs: np.ndarray):
    """Run one direction over xs (T, B, D); returns hs (T, B, H) and a cache."""
    T, B, D = xs.shape
    if D != params.input_dim:
        raise ConfigurationError(f"input dim {D} != param dim {params.input_dim}")
    H = params.hidden_dim
    hs = np.zeros((T, B, H))
    cache = []
    h = np.zeros((B, H))
    for t in range(T):
        x = xs[t]
        r = sigmoid(x @ params.wr.T + h @ params.ur.T + params.br)
        z = sigmoid(x @ params.wz.T + h @ params.uz.T + params.bz)
        hc = np.tanh(x @ params.wh.T + (r * h) @ params.uh.T + params.bh)
        h_new = (1.0 - z) * h + z * hc
        cache.append((x, h, r, z, hc))
        hs[t] = h_new
        h = h_new
    return hs, cache


def gru_backward(params: GruParams, cache, dhs: np.ndarray):
    """BPTT for one direction.

    dhs holds the upstream gradient on each timestep's output; returns the
    gradient on the inputs (T, B, D) and a GruParams of weight gradients.
    """
    T = len(cache)
    g = params.zeros_like()
    dxs = np.zeros((T,) + cache[0][0].shape) if T else np.zeros((0, 0, params.input_dim))
    carry = 0.0
    for t in range(T - 1, -1, -1):
        x, h_prev, r, z, hc = cache[t]
        dh = dhs[t] + carry
        dhc = dh * z
        dz = dh * (hc - h_prev)
        dh_prev = dh * (1.0 - z)

        dpre_h = dhc * (1.0 - hc * hc)
        g.wh += dpre_h.T @ x
        g.uh += dpre_h.T @ (r * h_prev)
        g.bh += dpre_h.sum(axis=0)
        d_rh = dpre_h @ params.uh
        dr = d_rh * h_prev
        dh_prev = dh_prev + d_rh * r

        dpre_r = dr * r * (1.0 - r)
        g.wr += dpre_r.T @ x
        g.ur += dpre_r.T @ h_prev
        g.br += dpre_r.sum(axis=0)
        dh_prev = dh_prev + dpre_r @ params.ur

        dpre_z = dz * z * (1.0 - z)
        g.wz += dpre_z.T @ x
        g.uz += dpre_z.T @ h_prev
        g.bz += dpre_z.sum(axis=0)
        dh_prev = dh_prev + dpre_z @ params.uz

        dxs[t] = dpre_h @ params.wh + dpre_r @ params.wr + dpre_z @ params.wz
        carry = dh_prev
    return dxs, g


def bigru_forward(params_fwd: GruParams, params_bwd: GruParams, xs: np.ndarray):
    """Bidirectional pass; output (T, B, 2H) = [forward_t, backward_t]."""
    if params_fwd.hidden_dim != params_bwd.hidden_dim:
        raise ConfigurationError("forward/backward hidden dims differ")
    hs_f, cache_f = gru_forward(params_fwd, xs)
    hs_b_rev, cache_b = gru_forward(params_bwd, xs[::-1])
    hs_b = hs_b_rev[::-1]
    out = np.concatenate([hs_f, hs_b], axis=-1)
    return out, (cache_f, cache_b)


def bigru_backward(params_fwd: GruParams, params_bwd: GruParams, cache, dout: np.ndarray):
    cache_f, cache_b = cache
    H = params_fwd.hidden_dim
    dxs_f, g_f = gru_backward(params_fwd, cache_f, dout[:, :, :H])
    dxs_b_rev, g_b = gru_backward(params_bwd, cache_b, dout[::-1, :, H:])
    dxs = dxs_f + dxs_b_rev[::-1]
    return dxs, g_f, g_b


def gru_bidirectional(params_fwd: GruParams, params_bwd: GruParams, inputs) -> list:
    """Encode a plain sequence of vectors; returns [h_fwd_t ++ h_bwd_t] per step."""
    params_fwd.validate()
    params_bwd.validate()
    seq = [np.asarray(v, dtype=np.float64) for v in inputs]
    if not seq:
        return []
    for v in seq:
        if v.shape != (params_fwd.input_dim,):
            raise ConfigurationError(
                f"input vector length {v.shape} != input_dim {params_fwd.input_dim}"
            )
    xs = np.stack(seq)[:, None, :]
    out, _ = bigru_forward(params_fwd, params_bwd, xs)
    return [out[t, 0] for t in range(out.shape[0])]
