"""Synthetic multilingual transduction task.

Each language owns a rule (permutation over the symbol alphabet, optional
reversal, input gain).  Frames are noisy one-hots in R^V (D_feat == V), and
the target is the rule applied to the symbol sequence.  Conflicting
permutations with equal gains make the input distribution identical across
languages, so a model with no per-language parameters cannot resolve which
mapping to apply; that is exactly the capability gap the factorized layers
are supposed to close.
"""

import json
import struct
import sys
import zlib
from array import array

from ..diffcore.rng import Rng
from ..diffcore.tensor import Tensor
from ..seq2seq import Utterance

SPLITS = ("train", "dev", "test")


class TaskSpec:
    """Parameters of the synthetic task; rules are derived from the seed."""

    def __init__(self, langs, vocab, rules, seq_min, seq_max, noise,
                 train_per_lang, dev_per_lang, test_per_lang, seed):
        if vocab < 2 or langs < 1:
            raise ValueError(f"task: wants V >= 2 and L >= 1, got V={vocab}, L={langs}")
        if not (1 <= seq_min <= seq_max):
            raise ValueError(f"task: bad length range [{seq_min}, {seq_max}]")
        if len(rules) != langs:
            raise ValueError(f"task: {len(rules)} rules for {langs} languages")
        for l, (perm, _rev, gain) in enumerate(rules):
            if sorted(perm) != list(range(vocab)):
                raise ValueError(f"task: rule {l} permutation is not a bijection over {vocab}")
            if gain <= 0:
                raise ValueError(f"task: rule {l} gain must be positive, got {gain}")
        for a in range(langs):
            for b in range(a + 1, langs):
                if rules[a] == rules[b]:
                    raise ValueError(f"task: languages {a} and {b} have identical rules")
        self.langs = langs
        self.vocab = vocab
        self.rules = [(tuple(p), bool(r), float(g)) for p, r, g in rules]
        self.seq_min = seq_min
        self.seq_max = seq_max
        self.noise = float(noise)
        self.train_per_lang = train_per_lang
        self.dev_per_lang = dev_per_lang
        self.test_per_lang = test_per_lang
        self.seed = seed

    @property
    def d_feat(self):
        return self.vocab

    @classmethod
    def build(cls, langs, vocab, seq_min, seq_max, noise, train_per_lang,
              dev_per_lang, test_per_lang, seed, gains=None, reverse=None):
        """Derive per-language rules from the seed with forced pairwise distinctness."""
        if vocab < 2 or langs < 1:
            raise ValueError(f"task: wants V >= 2 and L >= 1, got V={vocab}, L={langs}")
        gains = list(gains) if gains else [1.0] * langs
        reverse = [bool(x) for x in reverse] if reverse else [False] * langs
        if len(gains) != langs or len(reverse) != langs:
            raise ValueError(
                f"task: gains/reverse lists must have one entry per language ({langs})")
        prng = Rng(seed).split("task-rules")
        rules = []
        for l in range(langs):
            lrng = prng.split(l)
            for attempt in range(200):
                perm = tuple(lrng.permutation(vocab))
                rule = (perm, reverse[l], gains[l])
                if all(rule != r for r in rules):
                    break
            else:
                raise ValueError(f"task: could not draw a distinct rule for language {l}")
            rules.append(rule)
        return cls(langs, vocab, rules, seq_min, seq_max, noise,
                   train_per_lang, dev_per_lang, test_per_lang, seed)

    def meta(self):
        return {
            "langs": self.langs,
            "vocab": self.vocab,
            "rules": [[list(p), int(r), g] for p, r, g in self.rules],
            "seq_min": self.seq_min,
            "seq_max": self.seq_max,
            "noise": self.noise,
            "train_per_lang": self.train_per_lang,
            "dev_per_lang": self.dev_per_lang,
            "test_per_lang": self.test_per_lang,
            "seed": self.seed,
        }


def task_from_config(cfg):
    return TaskSpec.build(
        langs=cfg["langs"], vocab=cfg["vocab"], seq_min=cfg["seq_min"],
        seq_max=cfg["seq_max"], noise=cfg["noise"],
        train_per_lang=cfg["train_per_lang"], dev_per_lang=cfg["dev_per_lang"],
        test_per_lang=cfg["test_per_lang"], seed=cfg["seed"],
        gains=cfg["gains"], reverse=cfg["reverse"])


class Corpus:
    def __init__(self, langs, vocab, splits, meta=None):
        self.langs = langs
        self.vocab = vocab
        self.d_feat = vocab
        self.splits = splits
        self.meta = meta or {}

    def split(self, name):
        if name not in self.splits:
            raise ValueError(f"corpus: no split named {name!r}")
        return self.splits[name]


def generate_corpus(spec):
    """Fully seed-determined corpus; same spec twice gives identical bytes."""
    bos = spec.vocab + 1
    eos = spec.vocab + 2
    root = Rng(spec.seed).split("corpus")
    sizes = {"train": spec.train_per_lang, "dev": spec.dev_per_lang,
             "test": spec.test_per_lang}
    splits = {}
    for split in SPLITS:
        srng = root.split(split)
        utts = []
        for l in range(spec.langs):
            perm, rev, gain = spec.rules[l]
            lrng = srng.split(l)
            for idx in range(sizes[split]):
                urng = lrng.split(idx)
                n = spec.seq_min + urng.randint(spec.seq_max - spec.seq_min + 1)
                symbols = [urng.randint(spec.vocab) for _ in range(n)]
                frames = array("d", bytes(8 * n * spec.vocab))
                for t, sym in enumerate(symbols):
                    base = t * spec.vocab
                    for j in range(spec.vocab):
                        frames[base + j] = urng.normal(0.0, spec.noise)
                    frames[base + sym] += gain
                mapped = [perm[a] for a in symbols]
                if rev:
                    mapped.reverse()
                utts.append(Utterance(Tensor((n, spec.vocab), frames),
                                      [bos] + mapped + [eos], l))
        splits[split] = utts
    return Corpus(spec.langs, spec.vocab, splits, meta=spec.meta())


# -- on-disk form -------------------------------------------------------------

_MAGIC = b"FWC1"


def save_corpus(corpus, path):
    body = bytearray()
    meta = json.dumps(corpus.meta, sort_keys=True).encode("utf-8")
    body += struct.pack("<HHHI", corpus.langs, corpus.vocab, corpus.d_feat,
                        len(meta))
    body += meta
    body += struct.pack("<I", len(corpus.splits))
    for name in sorted(corpus.splits):
        utts = corpus.splits[name]
        nb = name.encode("utf-8")
        body += struct.pack("<H", len(nb)) + nb + struct.pack("<I", len(utts))
        for u in utts:
            n = u.frames.shape[0]
            body += struct.pack("<HII", u.language, n, len(u.tokens))
            body += _le_bytes(u.frames.data)
            body += _le_bytes(array("q", u.tokens))
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", 1))
        f.write(body)
        f.write(struct.pack("<Q", zlib.crc32(body)))


def load_corpus(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"corpus file {path}: bad magic")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != 1:
        raise ValueError(f"corpus file {path}: unsupported version {version}")
    body = blob[8:-8]
    (crc,) = struct.unpack_from("<Q", blob, len(blob) - 8)
    if crc != zlib.crc32(body):
        raise ValueError(f"corpus file {path}: checksum mismatch")
    off = 0
    langs, vocab, d_feat, meta_len = struct.unpack_from("<HHHI", body, off)
    off += 10
    meta = json.loads(body[off:off + meta_len].decode("utf-8"))
    off += meta_len
    (nsplits,) = struct.unpack_from("<I", body, off)
    off += 4
    splits = {}
    for _ in range(nsplits):
        (nlen,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off:off + nlen].decode("utf-8")
        off += nlen
        (count,) = struct.unpack_from("<I", body, off)
        off += 4
        utts = []
        for _ in range(count):
            lang, n, m = struct.unpack_from("<HII", body, off)
            off += 10
            frames = _from_le(body[off:off + 8 * n * d_feat], "d")
            off += 8 * n * d_feat
            tokens = _from_le(body[off:off + 8 * m], "q")
            off += 8 * m
            utts.append(Utterance(Tensor((n, d_feat), frames), list(tokens), lang))
        splits[name] = utts
    return Corpus(langs, vocab, splits, meta=meta)


def _le_bytes(arr):
    if sys.byteorder == "big":
        arr = array(arr.typecode, arr)
        arr.byteswap()
    return arr.tobytes()


def _from_le(raw, typecode):
    arr = array(typecode)
    arr.frombytes(raw)
    if sys.byteorder == "big":
        arr.byteswap()
    return arr


# -- batching ------------------------------------------------------------------


def make_batches(utterances, max_frames, seed):
    """Monolingual, rectangular batches under a frame budget.

    Utterances are shuffled within language, bucketed by (N, M) so every
    batch is rectangular, chunked to at most max_frames total frames, and the
    per-language batch lists are interleaved round-robin.  Every utterance
    appears exactly once.
    """
    langs = sorted({u.language for u in utterances})
    rng = Rng(seed).split("batches")
    per_lang_batches = []
    for l in langs:
        mine = [u for u in utterances if u.language == l]
        for i, u in enumerate(mine):
            n = u.frames.shape[0]
            if n > max_frames:
                raise ValueError(
                    f"make_batches: utterance (lang {l}, index {i}, N={n}) "
                    f"exceeds max_frames={max_frames}")
        rng.split(f"shuffle.{l}").shuffle(mine)
        buckets = {}
        for u in mine:
            buckets.setdefault((u.frames.shape[0], len(u.tokens)), []).append(u)
        batches = []
        for (n, _m) in sorted(buckets):
            group = buckets[(n, _m)]
            cap = max(1, max_frames // n)
            for i in range(0, len(group), cap):
                batches.append(group[i:i + cap])
        rng.split(f"order.{l}").shuffle(batches)
        per_lang_batches.append(batches)
    out = []
    cursor = [0] * len(per_lang_batches)
    remaining = sum(len(b) for b in per_lang_batches)
    while remaining:
        for li, batches in enumerate(per_lang_batches):
            if cursor[li] < len(batches):
                out.append(batches[cursor[li]])
                cursor[li] += 1
                remaining -= 1
    return out
