"""Attention-based encoder-decoder with a factorized LSTM or attention core.

Shapes flow in rows-form: a batch of B same-length sequences of length T is
one [B*T, D] tensor with row (b, t) at index b*T + t.  Batching same-length,
same-language utterances keeps every batch rectangular, so no padding or
masking is needed anywhere in the training path.
"""

from array import array
from math import sqrt

from .diffcore.rng import Rng
from .diffcore.tensor import (
    Param,
    Tensor,
    add,
    bmm_nn,
    bmm_nt,
    concat_rows,
    cross_entropy,
    no_grad,
    reshape,
    scale,
    slice_rows,
    softmax,
    take_rows,
    zeros,
)
from .blocks import FactorizedAttentionBlock, FactorizedLSTMCell, sinusoidal_rows
from .factorlin import FactorizedLinear

ARCHITECTURES = ("lstm", "attention")


class Utterance:
    """One sample: frames [N, D_feat], tokens [BOS, ..., EOS], language id."""

    def __init__(self, frames, tokens, language):
        self.frames = frames
        self.tokens = list(tokens)
        self.language = language

    def __repr__(self):
        return (f"Utterance(lang={self.language}, N={self.frames.shape[0]}, "
                f"M={len(self.tokens)})")


_IDS_CACHE = {}
_IDS_CACHE_CAP = 256


def _cached_ids(key, build):
    hit = _IDS_CACHE.get(key)
    if hit is None:
        hit = build()
        if len(_IDS_CACHE) >= _IDS_CACHE_CAP:
            _IDS_CACHE.pop(next(iter(_IDS_CACHE)))
        _IDS_CACHE[key] = hit
    return hit


def _time_ids(b, t_len):
    """For each t, the rows-form indices of that time step across the batch."""
    return _cached_ids(("time", b, t_len), lambda: [
        array("q", [bi * t_len + t for bi in range(b)]) for t in range(t_len)
    ])


def _batch_major_ids(b, t_len):
    """Reorder time-major (t, b) rows back to batch-major (b, t)."""
    return _cached_ids(("order", b, t_len), lambda: array(
        "q", [t * b + bi for bi in range(b) for t in range(t_len)]
    ))


def _last_row_ids(b, t_len):
    return _cached_ids(("last", b, t_len), lambda: array(
        "q", [bi * t_len + (t_len - 1) for bi in range(b)]
    ))


def _argmax(buf, lo, hi):
    best = lo
    for j in range(lo + 1, hi):
        if buf[j] > buf[best]:
            best = j
    return best - lo


class EncoderDecoderModel:
    """Seq2seq model; every linear is a FactorizedLinear, embeddings shared."""

    def __init__(self, arch, d_feat, d_model, layers, heads, d_ff, vocab,
                 langs, k, factored=True, positional=True, seed=0):
        if arch not in ARCHITECTURES:
            raise ValueError(f"model: unknown architecture {arch!r}")
        if layers < 1 or vocab < 2 or langs < 1:
            raise ValueError(
                f"model: bad sizes (layers={layers}, vocab={vocab}, langs={langs})")
        self.arch = arch
        self.d_feat = d_feat
        self.d_model = d_model
        self.layers = layers
        self.heads = heads
        self.d_ff = d_ff
        self.vocab = vocab
        self.langs = langs
        self.k = k
        self.factored = factored
        self.positional = positional
        self.seed = seed
        self.pad_id = vocab
        self.bos_id = vocab + 1
        self.eos_id = vocab + 2
        self.n_tokens = vocab + 3

        self.in_proj = FactorizedLinear("in_proj", d_feat, d_model, langs, k,
                                        factored=factored)
        self.out_proj = FactorizedLinear("out_proj", d_model, self.n_tokens,
                                         langs, k, factored=factored)
        self.embedding = Param("embedding.table", (self.n_tokens, d_model),
                               array("d", bytes(8 * self.n_tokens * d_model)))
        if arch == "attention":
            self.encoder = [FactorizedAttentionBlock(
                f"encoder.layer{i}", d_model, heads, d_ff, langs, k,
                factored=factored) for i in range(layers)]
            self.decoder = [FactorizedAttentionBlock(
                f"decoder.layer{i}", d_model, heads, d_ff, langs, k,
                factored=factored) for i in range(layers)]
        else:
            self.encoder = [FactorizedLSTMCell(
                f"encoder.layer{i}", d_model, d_model, langs, k,
                factored=factored) for i in range(layers)]
            self.decoder = [FactorizedLSTMCell(
                f"decoder.layer{i}", d_model, d_model, langs, k,
                factored=factored) for i in range(layers)]
        self._init(seed)

    def _init(self, seed):
        rng = Rng(seed)
        self.in_proj.init_identity(rng.split("in_proj"))
        for i, blk in enumerate(self.encoder):
            blk.init_identity(rng.split(f"encoder.layer{i}"))
        for i, blk in enumerate(self.decoder):
            blk.init_identity(rng.split(f"decoder.layer{i}"))
        erng = rng.split("embedding")
        a = sqrt(6.0 / (self.n_tokens + self.d_model))
        e = self.embedding.data
        for j in range(len(e)):
            e[j] = erng.uniform(-a, a)
        self.out_proj.init_identity(rng.split("out_proj"))
        # zero output projection: step-0 distribution is uniform, loss = ln V
        w = self.out_proj.W_S.data
        for j in range(len(w)):
            w[j] = 0.0

    # -- parameter plumbing ------------------------------------------------

    def params(self):
        out = list(self.in_proj.params())
        for blk in self.encoder:
            out.extend(blk.params())
        for blk in self.decoder:
            out.extend(blk.params())
        out.append(self.embedding)
        out.extend(self.out_proj.params())
        return out

    def param_map(self):
        return {p.name: p for p in self.params()}

    def lang_params(self, l):
        out = list(self.in_proj.lang_params(l))
        for blk in self.encoder:
            out.extend(blk.lang_params(l))
        for blk in self.decoder:
            out.extend(blk.lang_params(l))
        out.extend(self.out_proj.lang_params(l))
        return out

    def factorized_layers(self):
        layers = [self.in_proj]
        for blk in self.encoder + self.decoder:
            if isinstance(blk, FactorizedAttentionBlock):
                layers.extend((blk.W_Q, blk.W_K, blk.W_V, blk.W_O, blk.W_1, blk.W_2))
            else:
                layers.extend(blk.maps[g + s] for g in "fico" for s in "xh")
        layers.append(self.out_proj)
        return layers

    def overhead_summary(self):
        """Model-wide parameter accounting over all factorized linear maps."""
        per_layer = []
        added = 0
        shared_linear = 0
        for lay in self.factorized_layers():
            o = lay.param_overhead()
            o["path"] = lay.path
            per_layer.append(o)
            added += o["per_language_added"]
            shared_linear += o["shared"]
        shared_total = sum(len(p.data) for p in self.params()) - added * self.langs
        return {
            "per_language_added": added,
            "shared_linear": shared_linear,
            "shared_total": shared_total,
            "ratio_vs_linear": added / shared_linear,
            "ratio_vs_total": added / shared_total,
            "per_layer": per_layer,
        }

    def config_record(self):
        return {
            "arch": self.arch,
            "d_feat": self.d_feat,
            "d_model": self.d_model,
            "layers": self.layers,
            "heads": self.heads,
            "d_ff": self.d_ff,
            "vocab": self.vocab,
            "langs": self.langs,
            "k": self.k,
            "factored": int(self.factored),
            "positional": int(self.positional),
            "seed": self.seed,
        }

    # -- forward paths -------------------------------------------------------

    def _lstm_stack(self, stack, l, x2, b, t_len):
        ids = _time_ids(b, t_len)
        xs = [take_rows(x2, ids[t]) for t in range(t_len)]
        for cell in stack:
            h = zeros((b, self.d_model))
            c = zeros((b, self.d_model))
            hs = []
            for t in range(t_len):
                h, c = cell.step(l, xs[t], h, c)
                hs.append(h)
            xs = hs
        time_major = concat_rows(xs)
        return take_rows(time_major, _batch_major_ids(b, t_len))

    def _attn_stack(self, stack, l, x2, b, t_len, causal):
        h = x2
        if self.positional:
            h = add(scale(h, sqrt(self.d_model)), sinusoidal_rows(b, t_len, self.d_model))
        for blk in stack:
            h = blk.forward(l, h, b, t_len, causal=causal)
        return h

    def _encode_rows(self, l, x2, b, n):
        h = self.in_proj.forward(l, x2)
        if self.arch == "attention":
            return self._attn_stack(self.encoder, l, h, b, n, causal=False)
        return self._lstm_stack(self.encoder, l, h, b, n)

    def _decoder_rows(self, l, tok_ids, b, m):
        emb = take_rows(self.embedding, tok_ids)
        if self.arch == "attention":
            return self._attn_stack(self.decoder, l, emb, b, m, causal=True)
        return self._lstm_stack(self.decoder, l, emb, b, m)

    def _logits_rows(self, l, hy, enc, b, m, n):
        """Cross-attention context added to decoder states, then projected.

        The context weights are a parameter-free scaled dot product between
        decoder states and encoder states; all learned per-language behavior
        lives in the factorized projections around it.
        """
        d = self.d_model
        hy3 = reshape(hy, (b, m, d))
        enc3 = reshape(enc, (b, n, d))
        probs = softmax(scale(bmm_nt(hy3, enc3), 1.0 / sqrt(d)))
        ctx = reshape(bmm_nn(probs, enc3), (b * m, d))
        return self.out_proj.forward(l, add(ctx, hy))

    def encode(self, l, frames):
        """Encoder states [N, D_model] for one utterance's frames [N, D_feat]."""
        if len(frames.shape) != 2 or frames.shape[1] != self.d_feat:
            raise ValueError(
                f"encode: frames shape {frames.shape} does not match D_feat={self.d_feat}")
        return self._encode_rows(l, frames, 1, frames.shape[0])

    def decode_step(self, l, token_history, encoder_states):
        """Distribution over the next token given the history; rows sum to 1."""
        if not token_history:
            raise ValueError("decode_step: empty token history")
        for t in token_history:
            if not (0 <= t < self.n_tokens):
                raise ValueError(f"decode_step: unknown token id {t}")
        m = len(token_history)
        n = encoder_states.shape[0]
        hy = self._decoder_rows(l, array("q", token_history), 1, m)
        last = slice_rows(hy, m - 1, m)
        logits = self._logits_rows(l, last, encoder_states, 1, 1, n)
        return reshape(softmax(logits), (self.n_tokens,))

    def greedy_decode(self, l, frames, max_len):
        """Argmax decoding until EOS or max_len; returns emitted tokens."""
        if max_len < 1:
            raise ValueError(f"greedy_decode: max_len must be >= 1, got {max_len}")
        with no_grad():
            enc = self.encode(l, frames)
            history = [self.bos_id]
            out = []
            for _ in range(max_len):
                probs = self.decode_step(l, history, enc)
                nxt = _argmax(probs.data, 0, self.n_tokens)
                out.append(nxt)
                history.append(nxt)
                if nxt == self.eos_id:
                    break
        return out

    def greedy_decode_batch(self, l, utterances, max_len):
        """Batched greedy decoding for same-length utterances of one language.

        Produces exactly the tokens greedy_decode would emit per utterance
        (rows evolve independently; finished rows are truncated at EOS).
        """
        b = len(utterances)
        n = utterances[0].frames.shape[0]
        frames = array("d")
        for u in utterances:
            if u.frames.shape[0] != n:
                raise ValueError("greedy_decode_batch: mixed frame lengths")
            frames.extend(u.frames.data)
        with no_grad():
            enc = self._encode_rows(l, Tensor((b * n, self.d_feat), frames), b, n)
            histories = [[self.bos_id] for _ in range(b)]
            emitted = [[] for _ in range(b)]
            done = [False] * b
            for step in range(max_len):
                m = step + 1
                flat = array("q", [t for h in histories for t in h])
                hy = self._decoder_rows(l, flat, b, m)
                last = take_rows(hy, _last_row_ids(b, m))
                logits = self._logits_rows(l, last, enc, b, 1, n)
                buf = logits.data
                for bi in range(b):
                    nxt = _argmax(buf, bi * self.n_tokens, (bi + 1) * self.n_tokens)
                    histories[bi].append(nxt)
                    if not done[bi]:
                        emitted[bi].append(nxt)
                        if nxt == self.eos_id:
                            done[bi] = True
                if all(done):
                    break
        return emitted

    # -- losses ----------------------------------------------------------------

    def batch_loss(self, l, utterances):
        """Teacher-forced mean token cross-entropy over a rectangular batch."""
        b = len(utterances)
        if b == 0:
            raise ValueError("batch_loss: empty batch")
        n = utterances[0].frames.shape[0]
        m = len(utterances[0].tokens)
        frames = array("d")
        dec_in = array("q")
        targets = array("q")
        for u in utterances:
            if u.language != l:
                raise ValueError(
                    f"batch_loss: utterance language {u.language} in a language-{l} batch")
            if u.frames.shape[0] != n or len(u.tokens) != m:
                raise ValueError("batch_loss: ragged batch (mixed N or M)")
            frames.extend(u.frames.data)
            dec_in.extend(u.tokens[:-1])
            targets.extend(u.tokens[1:])
        enc = self._encode_rows(l, Tensor((b * n, self.d_feat), frames), b, n)
        hy = self._decoder_rows(l, dec_in, b, m - 1)
        logits = self._logits_rows(l, hy, enc, b, m - 1, n)
        return cross_entropy(logits, targets, self.pad_id)

    def sequence_loss(self, l, utterance):
        toks = utterance.tokens
        if len(toks) < 3 or toks[0] != self.bos_id or toks[-1] != self.eos_id:
            raise ValueError(
                "sequence_loss: utterance must be [BOS, content..., EOS] "
                f"with nonempty content, got length {len(toks)}")
        return self.batch_loss(l, [utterance])
