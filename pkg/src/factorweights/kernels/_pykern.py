"""Pure-Python kernel backend.

Mirror of ``_ckern``: same signatures, same loop order, same accumulation
order, so results are bit-identical to the compiled extension.  Slow, but it
keeps the package importable without a C toolchain and serves as the
reference the parity tests compare against.
"""

from math import exp, isfinite, log, sqrt
from math import tanh as _tanh

NEG_MASK = -1e30

_NEG = -1e30


# -- batched matmul ---------------------------------------------------------

def _mm_nn(a, ao, b, bo, out, oo, m, n, p):
    for i in range(m):
        ob = oo + i * p
        ar = ao + i * n
        for k in range(n):
            aik = a[ar + k]
            bb = bo + k * p
            for j in range(p):
                out[ob + j] += aik * b[bb + j]


def bmm_nn(a, b, out, g, m, n, p):
    """out[q] = A[q] @ B[q] with A[g,m,n], B[g,n,p]."""
    for i in range(g * m * p):
        out[i] = 0.0
    for q in range(g):
        _mm_nn(a, q * m * n, b, q * n * p, out, q * m * p, m, n, p)


def bmm_nn_acc(a, b, out, g, m, n, p):
    """out[q] += A[q] @ B[q]."""
    for q in range(g):
        _mm_nn(a, q * m * n, b, q * n * p, out, q * m * p, m, n, p)


def bmm_nt(a, b, out, g, m, n, p):
    """out[q] = A[q] @ B[q].T with A[g,m,n], B[g,p,n]."""
    for i in range(g * m * p):
        out[i] = 0.0
    bt = [0.0] * (n * p)
    for q in range(g):
        base = q * p * n
        for i in range(p):
            for j in range(n):
                bt[j * p + i] = b[base + i * n + j]
        _mm_nn(a, q * m * n, bt, 0, out, q * m * p, m, n, p)


def bmm_nt_acc(a, b, out, g, m, n, p):
    """out[q] += A[q] @ B[q].T with A[g,m,n], B[g,p,n]."""
    bt = [0.0] * (n * p)
    for q in range(g):
        base = q * p * n
        for i in range(p):
            for j in range(n):
                bt[j * p + i] = b[base + i * n + j]
        _mm_nn(a, q * m * n, bt, 0, out, q * m * p, m, n, p)


def bmm_tn_acc(a, b, out, g, m, n, p):
    """out[q] += A[q].T @ B[q] with A[g,m,n], B[g,m,p], out[g,n,p]."""
    for q in range(g):
        ao = q * m * n
        bo = q * m * p
        oo = q * n * p
        for i in range(m):
            for k in range(n):
                aik = a[ao + i * n + k]
                ob = oo + k * p
                bb = bo + i * p
                for j in range(p):
                    out[ob + j] += aik * b[bb + j]


# -- elementwise ------------------------------------------------------------

def ew_add(a, b, out, n):
    for i in range(n):
        out[i] = a[i] + b[i]


def ew_sub(a, b, out, n):
    for i in range(n):
        out[i] = a[i] - b[i]


def ew_mul(a, b, out, n):
    for i in range(n):
        out[i] = a[i] * b[i]


def ew_scale(a, alpha, out, n):
    for i in range(n):
        out[i] = a[i] * alpha


def axpy(dst, src, n):
    for i in range(n):
        dst[i] += src[i]


def axpy_scaled(dst, src, alpha, n):
    for i in range(n):
        dst[i] += alpha * src[i]


def axpy_neg(dst, src, n):
    for i in range(n):
        dst[i] -= src[i]


def axpy_at(dst, off, src, n):
    for i in range(n):
        dst[off + i] += src[i]


def fma_acc(dst, x, y, n):
    for i in range(n):
        dst[i] += x[i] * y[i]


def add_scalar_acc(dst, s, n):
    for i in range(n):
        dst[i] += s


def fill(a, val, n):
    for i in range(n):
        a[i] = val


def scale_inplace(a, alpha, n):
    for i in range(n):
        a[i] *= alpha


# -- broadcast scale / bias -------------------------------------------------

def row_scale(a, v, out, m, n):
    """out[i,j] = a[i,j] * v[j]."""
    for i in range(m):
        for j in range(n):
            out[i * n + j] = a[i * n + j] * v[j]


def row_scale_acc(a, v, out, m, n):
    for i in range(m):
        for j in range(n):
            out[i * n + j] += a[i * n + j] * v[j]


def col_scale(a, v, out, m, n):
    """out[i,j] = a[i,j] * v[i]."""
    for i in range(m):
        vi = v[i]
        for j in range(n):
            out[i * n + j] = a[i * n + j] * vi


def col_scale_acc(a, v, out, m, n):
    for i in range(m):
        vi = v[i]
        for j in range(n):
            out[i * n + j] += a[i * n + j] * vi


def colreduce_mul_acc(a, b, outv, m, n):
    """outv[j] += sum_i a[i,j] * b[i,j]."""
    for i in range(m):
        for j in range(n):
            outv[j] += a[i * n + j] * b[i * n + j]


def rowreduce_mul_acc(a, b, outv, m, n):
    """outv[i] += sum_j a[i,j] * b[i,j]."""
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += a[i * n + j] * b[i * n + j]
        outv[i] += acc


def colsum_acc(a, outv, m, n):
    """outv[j] += sum_i a[i,j]."""
    for i in range(m):
        for j in range(n):
            outv[j] += a[i * n + j]


def add_rowvec(a, v, out, m, n):
    """out[i,j] = a[i,j] + v[j]."""
    for i in range(m):
        for j in range(n):
            out[i * n + j] = a[i * n + j] + v[j]


def outer(u, v, out, m, n):
    for i in range(m):
        ui = u[i]
        for j in range(n):
            out[i * n + j] = ui * v[j]


# -- activations ------------------------------------------------------------

def sigmoid_fwd(a, out, n):
    for i in range(n):
        out[i] = 1.0 / (1.0 + exp(-a[i]))


def sigmoid_bwd_acc(y, go, ga, n):
    for i in range(n):
        ga[i] += go[i] * y[i] * (1.0 - y[i])


def tanh_fwd(a, out, n):
    for i in range(n):
        out[i] = _tanh(a[i])


def tanh_bwd_acc(y, go, ga, n):
    for i in range(n):
        ga[i] += go[i] * (1.0 - y[i] * y[i])


def relu_fwd(a, out, n):
    for i in range(n):
        out[i] = a[i] if a[i] > 0.0 else 0.0


def relu_bwd_acc(y, go, ga, n):
    for i in range(n):
        if y[i] > 0.0:
            ga[i] += go[i]


# -- softmax / cross-entropy ------------------------------------------------

def softmax_lastdim(a, out, rows, cols):
    """Row-wise softmax with max subtraction."""
    for r in range(rows):
        mx = a[r * cols]
        for j in range(1, cols):
            if a[r * cols + j] > mx:
                mx = a[r * cols + j]
        s = 0.0
        for j in range(cols):
            out[r * cols + j] = exp(a[r * cols + j] - mx)
            s += out[r * cols + j]
        for j in range(cols):
            out[r * cols + j] /= s


def softmax_bwd_acc(y, go, ga, rows, cols):
    for r in range(rows):
        dot = 0.0
        for j in range(cols):
            dot += y[r * cols + j] * go[r * cols + j]
        for j in range(cols):
            ga[r * cols + j] += y[r * cols + j] * (go[r * cols + j] - dot)


def cross_entropy_fwd(logits, targets, pad, rows, cols, probs):
    """Fills probs with row softmax; returns (sum of -log p[target], active rows)."""
    loss = 0.0
    count = 0
    for r in range(rows):
        mx = logits[r * cols]
        for j in range(1, cols):
            if logits[r * cols + j] > mx:
                mx = logits[r * cols + j]
        s = 0.0
        for j in range(cols):
            probs[r * cols + j] = exp(logits[r * cols + j] - mx)
            s += probs[r * cols + j]
        for j in range(cols):
            probs[r * cols + j] /= s
        if targets[r] != pad:
            loss += mx + log(s) - logits[r * cols + targets[r]]
            count += 1
    return loss, count


def cross_entropy_bwd_acc(probs, targets, pad, rows, cols, coeff, gx):
    """gx[r] += coeff * (probs[r] - onehot(target_r)) on non-pad rows."""
    for r in range(rows):
        if targets[r] == pad:
            continue
        for j in range(cols):
            gx[r * cols + j] += coeff * probs[r * cols + j]
        gx[r * cols + targets[r]] -= coeff


# -- layer norm ---------------------------------------------------------------

def layer_norm_fwd(x, gain, bias, out, xhat, inv_std, rows, cols, eps):
    for r in range(rows):
        mu = 0.0
        for j in range(cols):
            mu += x[r * cols + j]
        mu /= cols
        var = 0.0
        for j in range(cols):
            d = x[r * cols + j] - mu
            var += d * d
        var /= cols
        istd = 1.0 / sqrt(var + eps)
        inv_std[r] = istd
        for j in range(cols):
            xhat[r * cols + j] = (x[r * cols + j] - mu) * istd
            out[r * cols + j] = gain[j] * xhat[r * cols + j] + bias[j]


def layer_norm_bwd_acc(xhat, inv_std, gain, go, gx, ggain, gbias, rows, cols):
    for r in range(rows):
        mean_dy = 0.0
        mean_dyx = 0.0
        for j in range(cols):
            dy = go[r * cols + j] * gain[j]
            mean_dy += dy
            mean_dyx += dy * xhat[r * cols + j]
        mean_dy /= cols
        mean_dyx /= cols
        for j in range(cols):
            dy = go[r * cols + j] * gain[j]
            gx[r * cols + j] += (dy - mean_dy - xhat[r * cols + j] * mean_dyx) * inv_std[r]
            ggain[j] += go[r * cols + j] * xhat[r * cols + j]
            gbias[j] += go[r * cols + j]


# -- gather / scatter ---------------------------------------------------------

def take_rows(src, ids, out, nids, d):
    for i in range(nids):
        for j in range(d):
            out[i * d + j] = src[ids[i] * d + j]


def take_rows_bwd_acc(go, ids, gsrc, nids, d):
    for i in range(nids):
        for j in range(d):
            gsrc[ids[i] * d + j] += go[i * d + j]


def index_select(src, perm, out, n):
    for i in range(n):
        out[i] = src[perm[i]]


def index_select_bwd_acc(go, perm, gsrc, n):
    for i in range(n):
        gsrc[perm[i]] += go[i]


# -- concat / slice -----------------------------------------------------------

def concat_cols(a, b, out, m, na, nb):
    for i in range(m):
        for j in range(na):
            out[i * (na + nb) + j] = a[i * na + j]
        for j in range(nb):
            out[i * (na + nb) + na + j] = b[i * nb + j]


def slice_cols(a, out, m, n, c0, c1):
    for i in range(m):
        for j in range(c1 - c0):
            out[i * (c1 - c0) + j] = a[i * n + c0 + j]


def slice_cols_acc(go, ga, m, n, c0, c1):
    """ga[:, c0:c1] += go."""
    for i in range(m):
        for j in range(c1 - c0):
            ga[i * n + c0 + j] += go[i * (c1 - c0) + j]


# -- masking ------------------------------------------------------------------

def causal_mask(a, out, g, t):
    """Per group: out[i,j] = a[i,j] if j <= i else -1e30."""
    for q in range(g):
        for i in range(t):
            for j in range(t):
                if j <= i:
                    out[q * t * t + i * t + j] = a[q * t * t + i * t + j]
                else:
                    out[q * t * t + i * t + j] = _NEG


def causal_mask_bwd_acc(go, ga, g, t):
    for q in range(g):
        for i in range(t):
            for j in range(i + 1):
                ga[q * t * t + i * t + j] += go[q * t * t + i * t + j]


# -- reductions / predicates ---------------------------------------------------

def sum_all(a, n):
    s = 0.0
    for i in range(n):
        s += a[i]
    return s


def sumsq(a, n):
    s = 0.0
    for i in range(n):
        s += a[i] * a[i]
    return s


def all_finite(a, n):
    for i in range(n):
        if not isfinite(a[i]):
            return False
    return True


# -- optimizer ----------------------------------------------------------------

def adam_step(p, g, m, v, n, lr, b1, b2, eps, bc1, bc2):
    """One Adam update with bias corrections bc1 = 1-b1^t, bc2 = 1-b2^t."""
    for i in range(n):
        m[i] = b1 * m[i] + (1.0 - b1) * g[i]
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
        p[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)
