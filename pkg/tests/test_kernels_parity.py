"""The compiled kernels and the pure-Python mirrors must agree bit for bit.

Every kernel is driven with the same seeded inputs on both backends and the
output buffers are compared as bytes, not within a tolerance: the fallback is
a drop-in replacement only if summation order and libm usage are identical.
"""

from array import array

import pytest

from factorweights.diffcore.rng import Rng
from factorweights.kernels import _pykern

_ckern = pytest.importorskip("factorweights.kernels._ckern")

SEEDS = [0, 1, 2]


def randbuf(n, rng, scale=1.0):
    buf = array("d", bytes(8 * n))
    rng.fill_normal(buf, 0.0, scale)
    return buf


def clone(buf):
    return array("d", buf)


def assert_bits(a, b, label):
    assert a.tobytes() == b.tobytes(), f"{label}: backends disagree bitwise"


def run_both(name, build):
    """build(rng) -> (args_c, args_py, outs); kernels run on cloned buffers."""
    for seed in SEEDS:
        args_c, outs_c = build(Rng(seed).split(name))
        args_p, outs_p = build(Rng(seed).split(name))
        getattr(_ckern, name)(*args_c)
        getattr(_pykern, name)(*args_p)
        for oc, op in zip(outs_c, outs_p):
            assert_bits(oc, op, f"{name} seed {seed}")


@pytest.mark.parametrize("name,g,m,n,p", [
    ("bmm_nn", 1, 5, 7, 3), ("bmm_nn", 4, 3, 2, 6),
    ("bmm_nn_acc", 2, 4, 4, 4),
    ("bmm_nt", 1, 5, 7, 3), ("bmm_nt", 3, 2, 6, 4),
    ("bmm_nt_acc", 2, 3, 5, 2),
    ("bmm_tn_acc", 1, 6, 3, 5), ("bmm_tn_acc", 2, 2, 4, 3),
])
def test_matmul_family(name, g, m, n, p):
    # layouts: nn takes B[g,n,p] -> out[g,m,p]; nt takes B[g,p,n] -> out[g,m,p];
    # tn takes B[g,m,p] -> out[g,n,p]
    if name.startswith("bmm_nt"):
        b_len = g * p * n
    elif name.startswith("bmm_tn"):
        b_len = g * m * p
    else:
        b_len = g * n * p
    out_len = g * n * p if "tn" in name else g * m * p

    def build(rng):
        a = randbuf(g * m * n, rng.split("a"))
        b = randbuf(b_len, rng.split("b"))
        out = randbuf(out_len, rng.split("out")) if name.endswith("_acc") \
            else array("d", bytes(8 * out_len))
        return (a, b, out, g, m, n, p), (out,)

    run_both(name, build)


@pytest.mark.parametrize("name", ["ew_add", "ew_sub", "ew_mul"])
def test_elementwise_binary(name):
    def build(rng):
        n = 37
        a, b = randbuf(n, rng.split("a")), randbuf(n, rng.split("b"))
        out = array("d", bytes(8 * n))
        return (a, b, out, n), (out,)

    run_both(name, build)


def test_scale_axpy_fill():
    n = 29
    for seed in SEEDS:
        rng = Rng(seed).split("saf")
        a = randbuf(n, rng.split("a"))
        src = randbuf(n, rng.split("src"))
        for name, args in [
            ("ew_scale", lambda d: (a, -1.75, d, n)),
            ("axpy", lambda d: (d, src, n)),
            ("axpy_scaled", lambda d: (d, src, 0.31, n)),
            ("axpy_neg", lambda d: (d, src, n)),
            ("fma_acc", lambda d: (d, a, src, n)),
            ("add_scalar_acc", lambda d: (d, 2.5, n)),
            ("scale_inplace", lambda d: (d, 0.77, n)),
        ]:
            dc, dp = clone(a), clone(a)
            getattr(_ckern, name)(*args(dc))
            getattr(_pykern, name)(*args(dp))
            assert_bits(dc, dp, name)
        fc, fp = array("d", bytes(8 * n)), array("d", bytes(8 * n))
        _ckern.fill(fc, 3.25, n)
        _pykern.fill(fp, 3.25, n)
        assert_bits(fc, fp, "fill")
        oc, op = array("d", bytes(8 * n)), array("d", bytes(8 * n))
        _ckern.axpy_at(oc, 4, src, n - 4)
        _pykern.axpy_at(op, 4, src, n - 4)
        assert_bits(oc, op, "axpy_at")


@pytest.mark.parametrize("name,vec_len,out_len", [
    ("row_scale", "n", "mn"), ("row_scale_acc", "n", "mn"),
    ("col_scale", "m", "mn"), ("col_scale_acc", "m", "mn"),
    ("add_rowvec", "n", "mn"),
    ("colreduce_mul_acc", None, "n"), ("rowreduce_mul_acc", None, "m"),
])
def test_broadcast_family(name, vec_len, out_len):
    m, n = 6, 5

    def build(rng):
        a = randbuf(m * n, rng.split("a"))
        sizes = {"m": m, "n": n, "mn": m * n}
        out = randbuf(sizes[out_len], rng.split("out")) if "acc" in name \
            else array("d", bytes(8 * sizes[out_len]))
        if vec_len is None:
            b = randbuf(m * n, rng.split("b"))
            return (a, b, out, m, n), (out,)
        v = randbuf(sizes[vec_len], rng.split("v"))
        return (a, v, out, m, n), (out,)

    run_both(name, build)


def test_colsum_outer():
    def build(rng):
        m, n = 7, 4
        a = randbuf(m * n, rng.split("a"))
        out = randbuf(n, rng.split("out"))
        return (a, out, m, n), (out,)

    run_both("colsum_acc", build)

    def build_outer(rng):
        m, n = 5, 6
        u, v = randbuf(m, rng.split("u")), randbuf(n, rng.split("v"))
        out = array("d", bytes(8 * m * n))
        return (u, v, out, m, n), (out,)

    run_both("outer", build_outer)


@pytest.mark.parametrize("fwd,bwd", [
    ("sigmoid_fwd", "sigmoid_bwd_acc"),
    ("tanh_fwd", "tanh_bwd_acc"),
    ("relu_fwd", "relu_bwd_acc"),
])
def test_activations(fwd, bwd):
    n = 41

    def build_fwd(rng):
        a = randbuf(n, rng.split("a"), scale=2.0)
        out = array("d", bytes(8 * n))
        return (a, out, n), (out,)

    run_both(fwd, build_fwd)

    def build_bwd(rng):
        y = randbuf(n, rng.split("y"))
        go = randbuf(n, rng.split("go"))
        ga = randbuf(n, rng.split("ga"))
        return (y, go, ga, n), (ga,)

    run_both(bwd, build_bwd)


def test_softmax():
    rows, cols = 6, 9

    def build(rng):
        a = randbuf(rows * cols, rng.split("a"), scale=3.0)
        out = array("d", bytes(8 * rows * cols))
        return (a, out, rows, cols), (out,)

    run_both("softmax_lastdim", build)

    def build_bwd(rng):
        y = array("d", bytes(8 * rows * cols))
        raw = randbuf(rows * cols, rng.split("raw"), scale=2.0)
        _pykern.softmax_lastdim(raw, y, rows, cols)
        go = randbuf(rows * cols, rng.split("go"))
        ga = randbuf(rows * cols, rng.split("ga"))
        return (y, go, ga, rows, cols), (ga,)

    run_both("softmax_bwd_acc", build_bwd)


def test_cross_entropy():
    rows, cols, pad = 8, 5, 3
    for seed in SEEDS:
        rng = Rng(seed).split("ce")
        logits = randbuf(rows * cols, rng.split("l"), scale=2.0)
        trng = rng.split("t")
        targets = array("q", [trng.randint(cols) if trng.uniform() > 0.3 else pad
                              for _ in range(rows)])
        pc = array("d", bytes(8 * rows * cols))
        pp = array("d", bytes(8 * rows * cols))
        rc = _ckern.cross_entropy_fwd(logits, targets, pad, rows, cols, pc)
        rp = _pykern.cross_entropy_fwd(logits, targets, pad, rows, cols, pp)
        assert rc == rp, "cross_entropy_fwd sums differ"
        assert_bits(pc, pp, "cross_entropy probs")
        gc = randbuf(rows * cols, rng.split("g"))
        gp = clone(gc)
        _ckern.cross_entropy_bwd_acc(pc, targets, pad, rows, cols, 0.37, gc)
        _pykern.cross_entropy_bwd_acc(pp, targets, pad, rows, cols, 0.37, gp)
        assert_bits(gc, gp, "cross_entropy_bwd")


def test_layer_norm():
    rows, cols, eps = 5, 8, 1e-5

    def build(rng):
        x = randbuf(rows * cols, rng.split("x"))
        gain = randbuf(cols, rng.split("g"))
        bias = randbuf(cols, rng.split("b"))
        out = array("d", bytes(8 * rows * cols))
        xhat = array("d", bytes(8 * rows * cols))
        inv_std = array("d", bytes(8 * rows))
        return (x, gain, bias, out, xhat, inv_std, rows, cols, eps), \
            (out, xhat, inv_std)

    run_both("layer_norm_fwd", build)

    def build_bwd(rng):
        xhat = randbuf(rows * cols, rng.split("xh"))
        inv_std = randbuf(rows, rng.split("is"))
        gain = randbuf(cols, rng.split("g"))
        go = randbuf(rows * cols, rng.split("go"))
        gx = randbuf(rows * cols, rng.split("gx"))
        ggain = randbuf(cols, rng.split("gg"))
        gbias = randbuf(cols, rng.split("gb"))
        return (xhat, inv_std, gain, go, gx, ggain, gbias, rows, cols), \
            (gx, ggain, gbias)

    run_both("layer_norm_bwd_acc", build_bwd)


def test_gather_slice_concat():
    d = 6
    for seed in SEEDS:
        rng = Rng(seed).split("gsc")
        src = randbuf(7 * d, rng.split("src"))
        ids = array("q", [3, 0, 6, 6, 2])
        oc = array("d", bytes(8 * 5 * d))
        op = array("d", bytes(8 * 5 * d))
        _ckern.take_rows(src, ids, oc, 5, d)
        _pykern.take_rows(src, ids, op, 5, d)
        assert_bits(oc, op, "take_rows")
        go = randbuf(5 * d, rng.split("go"))
        gc = randbuf(7 * d, rng.split("gsrc"))
        gp = clone(gc)
        _ckern.take_rows_bwd_acc(go, ids, gc, 5, d)
        _pykern.take_rows_bwd_acc(go, ids, gp, 5, d)
        assert_bits(gc, gp, "take_rows_bwd_acc")

        perm = array("q", list(Rng(seed).split("perm").permutation(7 * d)))
        sc = array("d", bytes(8 * 7 * d))
        sp = array("d", bytes(8 * 7 * d))
        _ckern.index_select(src, perm, sc, 7 * d)
        _pykern.index_select(src, perm, sp, 7 * d)
        assert_bits(sc, sp, "index_select")

        a = randbuf(4 * 3, rng.split("a"))
        b = randbuf(4 * 5, rng.split("b"))
        cc = array("d", bytes(8 * 4 * 8))
        cp = array("d", bytes(8 * 4 * 8))
        _ckern.concat_cols(a, b, cc, 4, 3, 5)
        _pykern.concat_cols(a, b, cp, 4, 3, 5)
        assert_bits(cc, cp, "concat_cols")
        lc = array("d", bytes(8 * 4 * 3))
        lp = array("d", bytes(8 * 4 * 3))
        _ckern.slice_cols(cc, lc, 4, 8, 2, 5)
        _pykern.slice_cols(cp, lp, 4, 8, 2, 5)
        assert_bits(lc, lp, "slice_cols")
        ac = randbuf(4 * 8, rng.split("ga"))
        ap = clone(ac)
        _ckern.slice_cols_acc(lc, ac, 4, 8, 2, 5)
        _pykern.slice_cols_acc(lp, ap, 4, 8, 2, 5)
        assert_bits(ac, ap, "slice_cols_acc")


def test_causal_mask_and_reductions():
    g, t = 3, 5
    for seed in SEEDS:
        rng = Rng(seed).split("cm")
        a = randbuf(g * t * t, rng.split("a"))
        oc = array("d", bytes(8 * g * t * t))
        op = array("d", bytes(8 * g * t * t))
        _ckern.causal_mask(a, oc, g, t)
        _pykern.causal_mask(a, op, g, t)
        assert_bits(oc, op, "causal_mask")
        go = randbuf(g * t * t, rng.split("go"))
        gc = randbuf(g * t * t, rng.split("ga"))
        gp = clone(gc)
        _ckern.causal_mask_bwd_acc(go, gc, g, t)
        _pykern.causal_mask_bwd_acc(go, gp, g, t)
        assert_bits(gc, gp, "causal_mask_bwd_acc")

        buf = randbuf(33, rng.split("r"))
        assert _ckern.sum_all(buf, 33) == _pykern.sum_all(buf, 33)
        assert _ckern.sumsq(buf, 33) == _pykern.sumsq(buf, 33)
        assert _ckern.all_finite(buf, 33) == _pykern.all_finite(buf, 33) == True
        bad = clone(buf)
        bad[17] = float("nan")
        assert _ckern.all_finite(bad, 33) == _pykern.all_finite(bad, 33) == False


def test_adam_step():
    n = 23
    for seed in SEEDS:
        rng = Rng(seed).split("adam")
        pc = randbuf(n, rng.split("p"))
        pp = clone(pc)
        g = randbuf(n, rng.split("g"))
        mc, vc = randbuf(n, rng.split("m")), clone(randbuf(n, rng.split("v")))
        for i in range(n):
            vc[i] = abs(vc[i])
        mp, vp = clone(mc), clone(vc)
        args = (0.01, 0.9, 0.98, 1e-9, 0.1, 0.0396)
        _ckern.adam_step(pc, g, mc, vc, n, *args)
        _pykern.adam_step(pp, g, mp, vp, n, *args)
        assert_bits(pc, pp, "adam p")
        assert_bits(mc, mp, "adam m")
        assert_bits(vc, vp, "adam v")
