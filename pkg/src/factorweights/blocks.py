"""Sequence-model building blocks where every linear map is factorized."""

from array import array
from math import cos, sin, sqrt

from .diffcore.rng import Rng
from .diffcore.tensor import (
    Param,
    Tensor,
    add,
    add_rowvec,
    bmm_nn,
    bmm_nt,
    causal_mask,
    index_select,
    layer_norm,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    tanh,
)
from .factorlin import FactorizedLinear, _param


class LayerNorm:
    """Shared gain/bias row normalization; gain starts at one, bias at zero."""

    def __init__(self, path, dim):
        self.path = path
        self.dim = dim
        self.gain = _param(f"{path}.gain", (dim,))
        self.bias = _param(f"{path}.bias", (dim,))
        for j in range(dim):
            self.gain.data[j] = 1.0

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias, eps=1e-5)

    def params(self):
        return [self.gain, self.bias]


class FactorizedLSTMCell:
    """LSTM cell with eight factorized gate projections and shared gate biases."""

    def __init__(self, path, d_x, d_h, langs, k, factored=True):
        self.path = path
        self.d_x = d_x
        self.d_h = d_h
        self.langs = langs
        self.maps = {}
        for gate in ("f", "i", "c", "o"):
            self.maps[gate + "x"] = FactorizedLinear(
                f"{path}.W_{gate}x", d_x, d_h, langs, k, bias=False, factored=factored)
            self.maps[gate + "h"] = FactorizedLinear(
                f"{path}.W_{gate}h", d_h, d_h, langs, k, bias=False, factored=factored)
        self.biases = {gate: _param(f"{path}.b_{gate}", (d_h,))
                       for gate in ("f", "i", "c", "o")}

    def init_identity(self, rng):
        if isinstance(rng, int):
            rng = Rng(rng)
        for name, m in self.maps.items():
            m.init_identity(rng.split(name))
        # forget bias starts at one so early steps keep cell memory alive
        bf = self.biases["f"].data
        for j in range(len(bf)):
            bf[j] = 1.0

    def _gate(self, gate, l, x, h):
        pre = add(self.maps[gate + "x"].forward(l, x),
                  self.maps[gate + "h"].forward(l, h))
        return add_rowvec(pre, self.biases[gate])

    def step(self, l, x, h_prev, c_prev):
        if len(x.shape) != 2 or x.shape[1] != self.d_x:
            raise ValueError(
                f"lstm_step: x shape {x.shape} does not match W_fx input dim {self.d_x}")
        if len(h_prev.shape) != 2 or h_prev.shape[1] != self.d_h:
            raise ValueError(
                f"lstm_step: h shape {h_prev.shape} does not match W_fh input dim {self.d_h}")
        if c_prev.shape != h_prev.shape or x.shape[0] != h_prev.shape[0]:
            raise ValueError(
                f"lstm_step: state shapes {h_prev.shape}/{c_prev.shape} "
                f"inconsistent with x {x.shape}")
        f = sigmoid(self._gate("f", l, x, h_prev))
        i = sigmoid(self._gate("i", l, x, h_prev))
        chat = tanh(self._gate("c", l, x, h_prev))
        o = sigmoid(self._gate("o", l, x, h_prev))
        c_t = add(mul(f, c_prev), mul(i, chat))
        h_t = mul(o, tanh(c_t))
        return h_t, c_t

    def params(self):
        out = []
        for gate in ("f", "i", "c", "o"):
            out.extend(self.maps[gate + "x"].params())
            out.extend(self.maps[gate + "h"].params())
        for gate in ("f", "i", "c", "o"):
            out.append(self.biases[gate])
        return out

    def lang_params(self, l):
        out = []
        for gate in ("f", "i", "c", "o"):
            out.extend(self.maps[gate + "x"].lang_params(l))
            out.extend(self.maps[gate + "h"].lang_params(l))
        return out


# head split/merge are pure data layout moves; the flat permutations are
# cached because the same (B, T, D, H) combinations recur every step
_PERM_CACHE = {}
_PERM_CACHE_CAP = 128


def _head_perms(b, t, d, h):
    key = (b, t, d, h)
    hit = _PERM_CACHE.get(key)
    if hit is not None:
        return hit
    dh = d // h
    split = array("q", bytes(8 * b * t * d))
    merge = array("q", bytes(8 * b * t * d))
    for bi in range(b):
        for hi in range(h):
            for ti in range(t):
                for e in range(dh):
                    src = (bi * t + ti) * d + hi * dh + e
                    dst = ((bi * h + hi) * t + ti) * dh + e
                    split[dst] = src
                    merge[src] = dst
    if len(_PERM_CACHE) >= _PERM_CACHE_CAP:
        _PERM_CACHE.pop(next(iter(_PERM_CACHE)))
    _PERM_CACHE[key] = (split, merge)
    return split, merge


class FactorizedAttentionBlock:
    """Pre-norm residual block: multi-head self-attention then a relu FFN."""

    def __init__(self, path, d_model, heads, d_ff, langs, k, factored=True):
        if d_model % heads != 0:
            raise ValueError(
                f"{path}: heads {heads} must divide D_model {d_model}")
        self.path = path
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.d_ff = d_ff
        self.W_Q = FactorizedLinear(f"{path}.attn.W_Q", d_model, d_model, langs, k, factored=factored)
        self.W_K = FactorizedLinear(f"{path}.attn.W_K", d_model, d_model, langs, k, factored=factored)
        self.W_V = FactorizedLinear(f"{path}.attn.W_V", d_model, d_model, langs, k, factored=factored)
        self.W_O = FactorizedLinear(f"{path}.attn.W_O", d_model, d_model, langs, k, factored=factored)
        self.W_1 = FactorizedLinear(f"{path}.ffn.W_1", d_model, d_ff, langs, k, factored=factored)
        self.W_2 = FactorizedLinear(f"{path}.ffn.W_2", d_ff, d_model, langs, k, factored=factored)
        self.ln1 = LayerNorm(f"{path}.ln1", d_model)
        self.ln2 = LayerNorm(f"{path}.ln2", d_model)

    def init_identity(self, rng):
        if isinstance(rng, int):
            rng = Rng(rng)
        for name, m in (("W_Q", self.W_Q), ("W_K", self.W_K), ("W_V", self.W_V),
                        ("W_O", self.W_O), ("W_1", self.W_1), ("W_2", self.W_2)):
            m.init_identity(rng.split(name))

    def _attn_rows(self, l, x2, b, t, causal):
        d, h, dh = self.d_model, self.heads, self.d_head
        q = self.W_Q.forward(l, x2)
        kk = self.W_K.forward(l, x2)
        v = self.W_V.forward(l, x2)
        split, merge = _head_perms(b, t, d, h)
        qh = index_select(q, split, (b * h, t, dh))
        kh = index_select(kk, split, (b * h, t, dh))
        vh = index_select(v, split, (b * h, t, dh))
        scores = scale(bmm_nt(qh, kh), 1.0 / sqrt(dh))
        if causal:
            scores = causal_mask(scores)
        ctx = bmm_nn(softmax(scores), vh)
        merged = index_select(ctx, merge, (b * t, d))
        return self.W_O.forward(l, merged)

    def self_attention(self, l, x, causal=False):
        """softmax(QK^T / sqrt(d_head)) V per head, heads merged through W_O.

        Accepts [T, D] for one sequence or [B, T, D] for a batch.
        """
        if len(x.shape) == 2:
            t, d = x.shape
            if d != self.d_model:
                raise ValueError(
                    f"self_attention: input shape {x.shape} does not match D_model={self.d_model}")
            return self._attn_rows(l, x, 1, t, causal)
        if len(x.shape) == 3:
            b, t, d = x.shape
            if d != self.d_model:
                raise ValueError(
                    f"self_attention: input shape {x.shape} does not match D_model={self.d_model}")
            x2 = reshape(x, (b * t, d))
            return reshape(self._attn_rows(l, x2, b, t, causal), (b, t, d))
        raise ValueError(f"self_attention: wants [T,D] or [B,T,D], got shape {x.shape}")

    def ffn(self, l, x):
        return self.W_2.forward(l, relu(self.W_1.forward(l, x)))

    def forward(self, l, x2, b, t, causal=False):
        """Full pre-norm block on rows-form input [B*T, D_model]."""
        y = add(x2, self._attn_rows(l, self.ln1(x2), b, t, causal))
        return add(y, self.ffn(l, self.ln2(y)))

    def params(self):
        out = []
        for m in (self.W_Q, self.W_K, self.W_V, self.W_O):
            out.extend(m.params())
        out.extend(self.ln1.params())
        out.extend(self.W_1.params())
        out.extend(self.W_2.params())
        out.extend(self.ln2.params())
        return out

    def lang_params(self, l):
        out = []
        for m in (self.W_Q, self.W_K, self.W_V, self.W_O, self.W_1, self.W_2):
            out.extend(m.lang_params(l))
        return out


_PE_CACHE = {}
_PE_CACHE_CAP = 64


def sinusoidal_rows(b, t, d):
    """Fixed positional encodings tiled over a batch, as [B*T, D] rows."""
    key = (b, t, d)
    hit = _PE_CACHE.get(key)
    if hit is not None:
        return Tensor((b * t, d), hit)
    one = array("d", bytes(8 * t * d))
    for ti in range(t):
        for j in range(0, d, 2):
            ang = ti / (10000.0 ** (j / d))
            one[ti * d + j] = sin(ang)
            if j + 1 < d:
                one[ti * d + j + 1] = cos(ang)
    data = array("d")
    for _ in range(b):
        data.extend(one)
    if len(_PE_CACHE) >= _PE_CACHE_CAP:
        _PE_CACHE.pop(next(iter(_PE_CACHE)))
    _PE_CACHE[key] = data
    return Tensor((b * t, d), data)
