# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel core.

Every function here has a pure-Python twin in ``_pykern`` with the same
signature and, deliberately, the same loop and accumulation order, so the two
backends produce bit-identical results (the extension is compiled with
-ffp-contract=off for the same reason).  Buffers are flat row-major float64
(``array('d')``) or int64 (``array('q')``); shape checking is the caller's
job.
"""

from libc.math cimport exp, isfinite, log, sqrt
from libc.math cimport tanh as ctanh
from libc.stdlib cimport free, malloc

NEG_MASK = -1e30  # finite stand-in for -inf in masked attention scores

cdef double _NEG = -1e30


# -- batched matmul ---------------------------------------------------------

cdef void _mm_nn(const double* a, const double* b, double* out,
                 Py_ssize_t m, Py_ssize_t n, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i, k, j
    cdef double aik
    for i in range(m):
        for k in range(n):
            aik = a[i * n + k]
            for j in range(p):
                out[i * p + j] += aik * b[k * p + j]


def bmm_nn(const double[::1] a, const double[::1] b, double[::1] out,
           Py_ssize_t g, Py_ssize_t m, Py_ssize_t n, Py_ssize_t p):
    """out[q] = A[q] @ B[q] with A[g,m,n], B[g,n,p]."""
    cdef Py_ssize_t q, i
    with nogil:
        for i in range(g * m * p):
            out[i] = 0.0
        for q in range(g):
            _mm_nn(&a[q * m * n], &b[q * n * p], &out[q * m * p], m, n, p)


def bmm_nn_acc(const double[::1] a, const double[::1] b, double[::1] out,
               Py_ssize_t g, Py_ssize_t m, Py_ssize_t n, Py_ssize_t p):
    """out[q] += A[q] @ B[q]."""
    cdef Py_ssize_t q
    with nogil:
        for q in range(g):
            _mm_nn(&a[q * m * n], &b[q * n * p], &out[q * m * p], m, n, p)


def bmm_nt(const double[::1] a, const double[::1] b, double[::1] out,
           Py_ssize_t g, Py_ssize_t m, Py_ssize_t n, Py_ssize_t p):
    """out[q] = A[q] @ B[q].T with A[g,m,n], B[g,p,n]."""
    cdef Py_ssize_t q, i, j
    cdef double* bt
    with nogil:
        for i in range(g * m * p):
            out[i] = 0.0
        bt = <double*> malloc(n * p * sizeof(double))
        for q in range(g):
            for i in range(p):
                for j in range(n):
                    bt[j * p + i] = b[q * p * n + i * n + j]
            _mm_nn(&a[q * m * n], bt, &out[q * m * p], m, n, p)
        free(bt)


def bmm_nt_acc(const double[::1] a, const double[::1] b, double[::1] out,
               Py_ssize_t g, Py_ssize_t m, Py_ssize_t n, Py_ssize_t p):
    """out[q] += A[q] @ B[q].T with A[g,m,n], B[g,p,n]."""
    cdef Py_ssize_t q, i, j
    cdef double* bt
    with nogil:
        bt = <double*> malloc(n * p * sizeof(double))
        for q in range(g):
            for i in range(p):
                for j in range(n):
                    bt[j * p + i] = b[q * p * n + i * n + j]
            _mm_nn(&a[q * m * n], bt, &out[q * m * p], m, n, p)
        free(bt)


def bmm_tn_acc(const double[::1] a, const double[::1] b, double[::1] out,
               Py_ssize_t g, Py_ssize_t m, Py_ssize_t n, Py_ssize_t p):
    """out[q] += A[q].T @ B[q] with A[g,m,n], B[g,m,p], out[g,n,p]."""
    cdef Py_ssize_t q, i, k, j
    cdef double aik
    with nogil:
        for q in range(g):
            for i in range(m):
                for k in range(n):
                    aik = a[q * m * n + i * n + k]
                    for j in range(p):
                        out[q * n * p + k * p + j] += aik * b[q * m * p + i * p + j]


# -- elementwise ------------------------------------------------------------

def ew_add(const double[::1] a, const double[::1] b, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = a[i] + b[i]


def ew_sub(const double[::1] a, const double[::1] b, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = a[i] - b[i]


def ew_mul(const double[::1] a, const double[::1] b, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = a[i] * b[i]


def ew_scale(const double[::1] a, double alpha, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = a[i] * alpha


def axpy(double[::1] dst, const double[::1] src, Py_ssize_t n):
    """dst += src."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            dst[i] += src[i]


def axpy_scaled(double[::1] dst, const double[::1] src, double alpha, Py_ssize_t n):
    """dst += alpha * src."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            dst[i] += alpha * src[i]


def axpy_neg(double[::1] dst, const double[::1] src, Py_ssize_t n):
    """dst -= src."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            dst[i] -= src[i]


def axpy_at(double[::1] dst, Py_ssize_t off, const double[::1] src, Py_ssize_t n):
    """dst[off:off+n] += src."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            dst[off + i] += src[i]


def fma_acc(double[::1] dst, const double[::1] x, const double[::1] y, Py_ssize_t n):
    """dst += x * y."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            dst[i] += x[i] * y[i]


def add_scalar_acc(double[::1] dst, double s, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            dst[i] += s


def fill(double[::1] a, double val, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            a[i] = val


def scale_inplace(double[::1] a, double alpha, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            a[i] *= alpha


# -- broadcast scale / bias -------------------------------------------------

def row_scale(const double[::1] a, const double[::1] v, double[::1] out,
              Py_ssize_t m, Py_ssize_t n):
    """out[i,j] = a[i,j] * v[j]."""
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(m):
            for j in range(n):
                out[i * n + j] = a[i * n + j] * v[j]


def row_scale_acc(const double[::1] a, const double[::1] v, double[::1] out,
                  Py_ssize_t m, Py_ssize_t n):
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(m):
            for j in range(n):
                out[i * n + j] += a[i * n + j] * v[j]


def col_scale(const double[::1] a, const double[::1] v, double[::1] out,
              Py_ssize_t m, Py_ssize_t n):
    """out[i,j] = a[i,j] * v[i]."""
    cdef Py_ssize_t i, j
    cdef double vi
    with nogil:
        for i in range(m):
            vi = v[i]
            for j in range(n):
                out[i * n + j] = a[i * n + j] * vi


def col_scale_acc(const double[::1] a, const double[::1] v, double[::1] out,
                  Py_ssize_t m, Py_ssize_t n):
    cdef Py_ssize_t i, j
    cdef double vi
    with nogil:
        for i in range(m):
            vi = v[i]
            for j in range(n):
                out[i * n + j] += a[i * n + j] * vi


def colreduce_mul_acc(const double[::1] a, const double[::1] b, double[::1] outv,
                      Py_ssize_t m, Py_ssize_t n):
    """outv[j] += sum_i a[i,j] * b[i,j]."""
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(m):
            for j in range(n):
                outv[j] += a[i * n + j] * b[i * n + j]


def rowreduce_mul_acc(const double[::1] a, const double[::1] b, double[::1] outv,
                      Py_ssize_t m, Py_ssize_t n):
    """outv[i] += sum_j a[i,j] * b[i,j]."""
    cdef Py_ssize_t i, j
    cdef double acc
    with nogil:
        for i in range(m):
            acc = 0.0
            for j in range(n):
                acc += a[i * n + j] * b[i * n + j]
            outv[i] += acc


def colsum_acc(const double[::1] a, double[::1] outv, Py_ssize_t m, Py_ssize_t n):
    """outv[j] += sum_i a[i,j]."""
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(m):
            for j in range(n):
                outv[j] += a[i * n + j]


def add_rowvec(const double[::1] a, const double[::1] v, double[::1] out,
               Py_ssize_t m, Py_ssize_t n):
    """out[i,j] = a[i,j] + v[j]."""
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(m):
            for j in range(n):
                out[i * n + j] = a[i * n + j] + v[j]


def outer(const double[::1] u, const double[::1] v, double[::1] out,
          Py_ssize_t m, Py_ssize_t n):
    cdef Py_ssize_t i, j
    cdef double ui
    with nogil:
        for i in range(m):
            ui = u[i]
            for j in range(n):
                out[i * n + j] = ui * v[j]


# -- activations ------------------------------------------------------------

def sigmoid_fwd(const double[::1] a, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = 1.0 / (1.0 + exp(-a[i]))


def sigmoid_bwd_acc(const double[::1] y, const double[::1] go, double[::1] ga, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            ga[i] += go[i] * y[i] * (1.0 - y[i])


def tanh_fwd(const double[::1] a, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = ctanh(a[i])


def tanh_bwd_acc(const double[::1] y, const double[::1] go, double[::1] ga, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            ga[i] += go[i] * (1.0 - y[i] * y[i])


def relu_fwd(const double[::1] a, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = a[i] if a[i] > 0.0 else 0.0


def relu_bwd_acc(const double[::1] y, const double[::1] go, double[::1] ga, Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            if y[i] > 0.0:
                ga[i] += go[i]


# -- softmax / cross-entropy ------------------------------------------------

def softmax_lastdim(const double[::1] a, double[::1] out, Py_ssize_t rows, Py_ssize_t cols):
    """Row-wise softmax with max subtraction."""
    cdef Py_ssize_t r, j
    cdef double mx, s
    with nogil:
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


def softmax_bwd_acc(const double[::1] y, const double[::1] go, double[::1] ga,
                    Py_ssize_t rows, Py_ssize_t cols):
    cdef Py_ssize_t r, j
    cdef double dot
    with nogil:
        for r in range(rows):
            dot = 0.0
            for j in range(cols):
                dot += y[r * cols + j] * go[r * cols + j]
            for j in range(cols):
                ga[r * cols + j] += y[r * cols + j] * (go[r * cols + j] - dot)


def cross_entropy_fwd(const double[::1] logits, const long long[::1] targets,
                      long long pad, Py_ssize_t rows, Py_ssize_t cols,
                      double[::1] probs):
    """Fills probs with row softmax; returns (sum of -log p[target], active rows)."""
    cdef Py_ssize_t r, j
    cdef double mx, s, loss = 0.0
    cdef long long count = 0
    with nogil:
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


def cross_entropy_bwd_acc(const double[::1] probs, const long long[::1] targets,
                          long long pad, Py_ssize_t rows, Py_ssize_t cols,
                          double coeff, double[::1] gx):
    """gx[r] += coeff * (probs[r] - onehot(target_r)) on non-pad rows."""
    cdef Py_ssize_t r, j
    with nogil:
        for r in range(rows):
            if targets[r] == pad:
                continue
            for j in range(cols):
                gx[r * cols + j] += coeff * probs[r * cols + j]
            gx[r * cols + targets[r]] -= coeff


# -- layer norm ---------------------------------------------------------------

def layer_norm_fwd(const double[::1] x, const double[::1] gain, const double[::1] bias,
                   double[::1] out, double[::1] xhat, double[::1] inv_std,
                   Py_ssize_t rows, Py_ssize_t cols, double eps):
    cdef Py_ssize_t r, j
    cdef double mu, var, d, istd
    with nogil:
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


def layer_norm_bwd_acc(const double[::1] xhat, const double[::1] inv_std,
                       const double[::1] gain, const double[::1] go,
                       double[::1] gx, double[::1] ggain, double[::1] gbias,
                       Py_ssize_t rows, Py_ssize_t cols):
    cdef Py_ssize_t r, j
    cdef double mean_dy, mean_dyx, dy
    with nogil:
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

def take_rows(const double[::1] src, const long long[::1] ids, double[::1] out,
              Py_ssize_t nids, Py_ssize_t d):
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(nids):
            for j in range(d):
                out[i * d + j] = src[ids[i] * d + j]


def take_rows_bwd_acc(const double[::1] go, const long long[::1] ids, double[::1] gsrc,
                      Py_ssize_t nids, Py_ssize_t d):
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(nids):
            for j in range(d):
                gsrc[ids[i] * d + j] += go[i * d + j]


def index_select(const double[::1] src, const long long[::1] perm, double[::1] out,
                 Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = src[perm[i]]


def index_select_bwd_acc(const double[::1] go, const long long[::1] perm, double[::1] gsrc,
                         Py_ssize_t n):
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            gsrc[perm[i]] += go[i]


# -- concat / slice -----------------------------------------------------------

def concat_cols(const double[::1] a, const double[::1] b, double[::1] out,
                Py_ssize_t m, Py_ssize_t na, Py_ssize_t nb):
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(m):
            for j in range(na):
                out[i * (na + nb) + j] = a[i * na + j]
            for j in range(nb):
                out[i * (na + nb) + na + j] = b[i * nb + j]


def slice_cols(const double[::1] a, double[::1] out, Py_ssize_t m, Py_ssize_t n,
               Py_ssize_t c0, Py_ssize_t c1):
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(m):
            for j in range(c1 - c0):
                out[i * (c1 - c0) + j] = a[i * n + c0 + j]


def slice_cols_acc(const double[::1] go, double[::1] ga, Py_ssize_t m, Py_ssize_t n,
                   Py_ssize_t c0, Py_ssize_t c1):
    """ga[:, c0:c1] += go."""
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(m):
            for j in range(c1 - c0):
                ga[i * n + c0 + j] += go[i * (c1 - c0) + j]


# -- masking ------------------------------------------------------------------

def causal_mask(const double[::1] a, double[::1] out, Py_ssize_t g, Py_ssize_t t):
    """Per group: out[i,j] = a[i,j] if j <= i else -1e30."""
    cdef Py_ssize_t q, i, j
    with nogil:
        for q in range(g):
            for i in range(t):
                for j in range(t):
                    if j <= i:
                        out[q * t * t + i * t + j] = a[q * t * t + i * t + j]
                    else:
                        out[q * t * t + i * t + j] = _NEG


def causal_mask_bwd_acc(const double[::1] go, double[::1] ga, Py_ssize_t g, Py_ssize_t t):
    cdef Py_ssize_t q, i, j
    with nogil:
        for q in range(g):
            for i in range(t):
                for j in range(i + 1):
                    ga[q * t * t + i * t + j] += go[q * t * t + i * t + j]


# -- reductions / predicates ---------------------------------------------------

def sum_all(const double[::1] a, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double s = 0.0
    with nogil:
        for i in range(n):
            s += a[i]
    return s


def sumsq(const double[::1] a, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double s = 0.0
    with nogil:
        for i in range(n):
            s += a[i] * a[i]
    return s


def all_finite(const double[::1] a, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef bint ok = True
    with nogil:
        for i in range(n):
            if not isfinite(a[i]):
                ok = False
                break
    return ok


# -- optimizer ----------------------------------------------------------------

def adam_step(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
              Py_ssize_t n, double lr, double b1, double b2, double eps,
              double bc1, double bc2):
    """One Adam update with bias corrections bc1 = 1-b1^t, bc2 = 1-b2^t."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            m[i] = b1 * m[i] + (1.0 - b1) * g[i]
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
            p[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)
